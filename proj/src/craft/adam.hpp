#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "core/tensor.hpp"

namespace plab {

// Adam with optional sign-only updates. The signed variant takes steps of
// exactly +-lr (or 0 where the update is 0), which keeps perturbation growth
// bounded per step; the plain variant is standard bias-corrected Adam.
class Adam {
 public:
  Adam(std::size_t n, double lr, bool signed_update);

  void step(std::span<const double> grad, std::span<double> x);

  std::int64_t steps_taken() const { return t_; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
  double lr_;
  bool signed_;
};

// Feasibility projection for a poison perturbation: |delta| <= eps and
// base + delta inside [0,1], both exact in float64. The [0,1] correction
// nudges toward zero, so it can only shrink the perturbation.
double project_component(double base, double delta, double eps);
void project_delta(const Tensor& base, Tensor& delta, double eps);

}  // namespace plab
