#include "craft/adam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace plab {

Adam::Adam(std::size_t n, double lr, bool signed_update)
    : m_(n, 0.0), v_(n, 0.0), lr_(lr), signed_(signed_update) {
  if (lr <= 0) throw std::invalid_argument("learning rate must be positive");
}

void Adam::step(std::span<const double> grad, std::span<double> x) {
  if (grad.size() != m_.size() || x.size() != m_.size())
    throw std::invalid_argument("optimizer size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    double g = grad[i];
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g * g;
    double u = (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    if (signed_) u = u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
    x[i] -= lr_ * u;
  }
}

double project_component(double base, double delta, double eps) {
  // Clamp into the intersection of the eps box and the [0,1] feasibility
  // interval, then walk off any last-rounding residue one ulp at a time.
  // Both fixups move toward zero, so the magnitude never grows.
  double d = std::clamp(delta, std::max(-eps, -base), std::min(eps, 1.0 - base));
  while (base + d < 0.0) d = std::nextafter(d, eps);
  while (base + d > 1.0) d = std::nextafter(d, -eps);
  return d == 0.0 ? 0.0 : d;
}

void project_delta(const Tensor& base, Tensor& delta, double eps) {
  if (base.shape != delta.shape) throw std::invalid_argument("projection shape mismatch");
  if (eps <= 0) throw std::invalid_argument("epsilon must be positive");
  for (std::size_t i = 0; i < delta.data.size(); ++i) {
    if (base.data[i] < 0.0 || base.data[i] > 1.0)
      throw std::invalid_argument("projection base pixel outside [0,1]");
    delta.data[i] = project_component(base.data[i], delta.data[i], eps);
  }
}

}  // namespace plab
