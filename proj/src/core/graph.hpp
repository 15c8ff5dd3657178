#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace plab {

using NodeId = std::int32_t;

// Structured graph error carrying the offending node id (-1 when the error is
// not tied to a node).
struct GraphError : std::runtime_error {
  NodeId node;
  GraphError(NodeId n, const std::string& msg) : std::runtime_error(msg), node(n) {}
};

// Internal primitive kinds. The public builder surface below exposes the
// supported operation set (convolution, affine map, relu, embedding lookup,
// mean pooling, elementwise add/multiply, concat, flatten,
// softmax-cross-entropy, sum, scalar scale); the remaining kinds exist so that
// every primitive's backward is itself a composition of recorded primitives,
// which is what makes a recorded backward pass differentiable again.
enum class Op : std::uint8_t {
  kInput,
  kConst,
  kAdd,
  kMul,
  kScale,          // tensor * scalar-node
  kRelu,
  kReluMask,       // 1 where x > 0 else 0; derivative defined as 0 everywhere
  kMatVec,         // W[m,n] * x[n] -> [m]
  kMatVecT,        // W[m,n]^T * u[m] -> [n]
  kOuter,          // a[m] outer b[n] -> [m,n]
  kConv2d,         // x[Ci,H,W] (x) K[Co,Ci,kh,kw], stride 1, zero pad -> [Co,H',W']
  kConvInputGrad,  // adjoint of kConv2d w.r.t. its input
  kConvKernelGrad, // adjoint of kConv2d w.r.t. its kernel
  kChannelBroadcast, // b[C] -> [C,H,W]
  kChannelSum,       // t[C,H,W] -> [C]
  kGather,         // out[i] = map[i] < 0 ? 0 : x.flat[map[i]]
  kScatterAdd,     // out.flat[map[i]] += u[i]
  kConcat,         // rank-1 inputs -> rank-1
  kReshape,
  kSum,            // all elements -> scalar
  kSoftmax,
  kSoftmaxXent,    // logits[n], target attr -> scalar
  kSqrt,
  kRecip,
};

const char* op_name(Op op);

using IndexMap = std::vector<std::int64_t>;

struct Node {
  Op op;
  std::vector<NodeId> inputs;
  Shape shape;
  // Small integer attributes, meaning depends on op:
  //   kConv2d / kConvInputGrad / kConvKernelGrad: a0 = zero padding
  //   kConvKernelGrad: a1 = kh, a2 = kw
  //   kChannelBroadcast: a1 = H, a2 = W
  //   kSoftmaxXent: a0 = target class id
  std::int32_t a0 = 0, a1 = 0, a2 = 0;
  std::shared_ptr<const Tensor> value;    // kConst payload (shared, never copied per graph)
  std::shared_ptr<const IndexMap> map;    // kGather / kScatterAdd
  bool differentiable = false;            // leaves only
};

// Result of evaluating a graph: one tensor per node.
struct Evaluation {
  std::vector<Tensor> values;
  const Tensor& at(NodeId id) const { return values[static_cast<std::size_t>(id)]; }
  Tensor take(NodeId id) { return std::move(values[static_cast<std::size_t>(id)]); }
};

// A recorded computation: an append-only list of primitive applications in
// topological order. Replaying the record on identical inputs reproduces
// identical outputs bit-for-bit (single-threaded, fixed iteration order).
class Graph {
public:
  NodeId input(Shape shape, bool differentiable = true);
  NodeId constant(Tensor t, bool differentiable = false);
  NodeId constant(std::shared_ptr<const Tensor> t, bool differentiable = false);
  NodeId scalar(double v);

  // Elementwise and reduction primitives.
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId t, NodeId s);          // t * scalar node
  NodeId scale_by(NodeId t, double c);       // t * embedded constant
  NodeId relu(NodeId x);
  NodeId relu_mask(NodeId x);
  NodeId sum(NodeId x);
  NodeId sqrt(NodeId x);
  NodeId recip(NodeId x);

  // Linear algebra.
  NodeId matvec(NodeId w, NodeId x);
  NodeId matvec_t(NodeId w, NodeId u);
  NodeId outer(NodeId a, NodeId b);
  // Affine map y = W x + b (b may be -1 for none).
  NodeId affine(NodeId w, NodeId x, NodeId b);

  // Convolution, stride 1, zero padding `pad`; bias may be -1 for none.
  NodeId conv2d(NodeId x, NodeId k, NodeId bias, int pad);
  NodeId conv_input_grad(NodeId u, NodeId k, int pad);
  NodeId conv_kernel_grad(NodeId x, NodeId u, int kh, int kw, int pad);
  NodeId channel_broadcast(NodeId b, int h, int w);
  NodeId channel_sum(NodeId t);

  // Index remapping. `map` holds, per output element, the flat source index
  // (-1 produces zero fill). Used for embedding lookup, slicing, pooling
  // support and differentiable augmentation.
  NodeId gather(NodeId x, std::shared_ptr<const IndexMap> map, Shape out_shape);
  NodeId scatter_add(NodeId u, std::shared_ptr<const IndexMap> map, Shape out_shape);

  // Embedding lookup: rows of table[V,d] for each token id -> [n,d].
  NodeId embedding(NodeId table, std::span<const int> token_ids);
  // Mean over non-overlapping k x k windows of [C,H,W] (H, W divisible by k).
  NodeId mean_pool(NodeId x, int k);
  // Mean over the rows of [n,d] -> [d].
  NodeId row_mean(NodeId x);

  NodeId concat(std::span<const NodeId> parts);
  NodeId reshape(NodeId x, Shape shape);
  NodeId flatten(NodeId x);
  NodeId softmax(NodeId logits);
  NodeId softmax_cross_entropy(NodeId logits, int target);

  // Raw-form entry point used by record deserialization and tests; rejects
  // unknown primitive ids at construction time.
  NodeId add_raw(int op_id, std::span<const NodeId> inputs, Shape shape);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const Shape& shape_of(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].shape; }
  std::size_t input_count() const { return input_ids_.size(); }
  const std::vector<NodeId>& input_ids() const { return input_ids_; }

  // Replays the record. `inputs` are bound to kInput nodes in creation order
  // and must match the declared shapes.
  Evaluation evaluate(std::span<const Tensor> inputs) const;
  Evaluation evaluate() const { return evaluate({}); }

private:
  friend std::vector<NodeId> append_gradient(Graph&, NodeId, std::span<const NodeId>);

  NodeId push(Node n);
  const Shape& in_shape(NodeId id, NodeId ctx) const;
  void check_same(NodeId a, NodeId b, const char* what) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> input_ids_;
};

// Appends the reverse-mode backward pass for `scalar` to the graph and
// returns, per requested node, the id of its gradient node. Requested nodes
// must be differentiable leaves; `scalar` must have shape []. The appended
// nodes are ordinary primitives, so the result can be differentiated again
// by calling append_gradient on the grown graph.
std::vector<NodeId> append_gradient(Graph& g, NodeId scalar, std::span<const NodeId> wrt);

}  // namespace plab
