#pragma once

#include "core/tensor.hpp"

namespace plab {

// Half-pixel-centred sampling on [3,H,W] (or [H,W]) tensors. The bilinear
// kernel uses the a + f*(b-a) form, so constant regions come back exactly.
Tensor resize_bilinear(const Tensor& image, std::int64_t out_h, std::int64_t out_w);
Tensor resize_nearest(const Tensor& image, std::int64_t out_h, std::int64_t out_w);

// Crop [y0, y0+ch) x [x0, x0+cw).
Tensor crop(const Tensor& image, std::int64_t y0, std::int64_t x0, std::int64_t ch,
            std::int64_t cw);

}  // namespace plab
