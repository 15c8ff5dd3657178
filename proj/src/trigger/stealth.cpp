#include "trigger/stealth.hpp"

#include <cmath>
#include <stdexcept>

namespace plab {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape != b.shape) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
  }
  if (a.shape.size() != 2 && !(a.shape.size() == 3 && a.shape[0] == 3)) {
    throw std::invalid_argument(std::string(who) + ": expects [3,H,W] or [H,W], got " +
                                shape_str(a.shape));
  }
}

Tensor to_gray(const Tensor& t) {
  if (t.shape.size() == 2) return t;
  const std::int64_t h = t.shape[1], w = t.shape[2];
  Tensor g = Tensor::zeros({h, w});
  for (std::int64_t i = 0; i < h * w; ++i) {
    g.data[static_cast<std::size_t>(i)] =
        (t.data[static_cast<std::size_t>(i)] + t.data[static_cast<std::size_t>(h * w + i)] +
         t.data[static_cast<std::size_t>(2 * h * w + i)]) /
        3.0;
  }
  return g;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "ssim");
  const Tensor ga = to_gray(a), gb = to_gray(b);
  const std::int64_t h = ga.shape[0], w = ga.shape[1];
  if (h < kWin || w < kWin) {
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  }

  double kern[kWin * kWin];
  double ksum = 0.0;
  for (int y = 0; y < kWin; ++y) {
    for (int x = 0; x < kWin; ++x) {
      const double dy = y - (kWin - 1) / 2.0, dx = x - (kWin - 1) / 2.0;
      kern[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
      ksum += kern[y * kWin + x];
    }
  }
  for (double& v : kern) v /= ksum;

  double total = 0.0;
  std::int64_t windows = 0;
  for (std::int64_t wy = 0; wy + kWin <= h; ++wy) {
    for (std::int64_t wx = 0; wx + kWin <= w; ++wx) {
      double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
      for (int y = 0; y < kWin; ++y) {
        for (int x = 0; x < kWin; ++x) {
          const double kv = kern[y * kWin + x];
          const double va = ga.data[static_cast<std::size_t>((wy + y) * w + wx + x)];
          const double vb = gb.data[static_cast<std::size_t>((wy + y) * w + wx + x)];
          mu_a += kv * va;
          mu_b += kv * vb;
          aa += kv * (va * va);
          bb += kv * (vb * vb);
          // Inner product rounded first so the term is symmetric in a, b.
          ab += kv * (va * vb);
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      const double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
      const double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
      total += num / den;
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

}  // namespace plab
