#pragma once

#include "core/tensor.hpp"

namespace plab {

inline constexpr double kPsnrCap = 99.0;

// 10*log10(1/MSE) on [0,1] images, capped at 99 dB so reports stay finite.
double psnr(const Tensor& a, const Tensor& b);

// Mean local structural similarity: channel-mean grayscale, 11x11 Gaussian
// window with sigma 1.5, stabilizers C1=0.01^2 and C2=0.03^2, valid windows
// only. Errors when either side is smaller than the window.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace plab
