#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace plab {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (std::int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major tensor of doubles. Rank 0 (empty shape) is a scalar.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_size(shape) != static_cast<std::int64_t>(data.size()))
      throw std::invalid_argument("tensor shape/data mismatch");
  }

  static Tensor zeros(Shape s) {
    std::vector<double> d(static_cast<std::size_t>(shape_size(s)), 0.0);
    return Tensor(std::move(s), std::move(d));
  }
  static Tensor full(Shape s, double v) {
    std::vector<double> d(static_cast<std::size_t>(shape_size(s)), v);
    return Tensor(std::move(s), std::move(d));
  }
  static Tensor scalar(double v) { return Tensor({}, {v}); }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  double scalar_value() const {
    if (data.size() != 1) throw std::logic_error("scalar_value on non-scalar tensor");
    return data[0];
  }

  bool finite() const;
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline bool Tensor::finite() const {
  for (double v : data)
    if (!(v == v) || v > 1.7976931348623157e308 || v < -1.7976931348623157e308) return false;
  return true;
}

}  // namespace plab
