#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "core/graph.hpp"

namespace plab {

// Flattened gradient with respect to an ordered parameter list.
struct GradientVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double norm() const;
};

double dot(const GradientVector& a, const GradientVector& b);

struct DegenerateGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Cosine similarity with a small stabilizer added to each norm. Throws
// DegenerateGradient when either norm falls below 1e-12, since alignment
// against a vanishing gradient is meaningless.
double cosine_alignment(const GradientVector& a, const GradientVector& b);

inline constexpr double kCosineStabilizer = 1e-8;
inline constexpr double kDegenerateNorm = 1e-12;

// In-graph form of 1 - cos(a, b) over two equal-length vector nodes, built
// from recorded primitives so it can be differentiated through.
NodeId append_alignment_loss(Graph& g, NodeId a, NodeId b);

// Convenience wrapper: evaluates d(scalar)/d(wrt) on the given inputs and
// flattens the per-node gradients in wrt order. The graph is copied, so the
// caller's record is left untouched.
GradientVector compute_gradient(const Graph& g, NodeId scalar, std::span<const NodeId> wrt,
                                std::span<const Tensor> inputs);

}  // namespace plab
