#include "img/resize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace plab {

namespace {

struct Dims {
  std::int64_t c, h, w;
  bool gray;
};

Dims dims_of(const Tensor& t, const char* who) {
  if (t.shape.size() == 2) return {1, t.shape[0], t.shape[1], true};
  if (t.shape.size() == 3) return {t.shape[0], t.shape[1], t.shape[2], false};
  throw std::invalid_argument(std::string(who) + ": expects [C,H,W] or [H,W], got " +
                              shape_str(t.shape));
}

Shape out_shape(const Dims& d, std::int64_t h, std::int64_t w) {
  return d.gray ? Shape{h, w} : Shape{d.c, h, w};
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, std::int64_t out_h, std::int64_t out_w) {
  const Dims d = dims_of(image, "resize_bilinear");
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_bilinear: empty target");
  Tensor out = Tensor::zeros(out_shape(d, out_h, out_w));
  const double sy = static_cast<double>(d.h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(d.w) / static_cast<double>(out_w);
  for (std::int64_t c = 0; c < d.c; ++c) {
    const double* src = image.data.data() + c * d.h * d.w;
    double* dst = out.data.data() + c * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(d.h - 1));
      const auto y0 = static_cast<std::int64_t>(fy);
      const std::int64_t y1 = std::min(y0 + 1, d.h - 1);
      const double ty = fy - static_cast<double>(y0);
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(d.w - 1));
        const auto x0 = static_cast<std::int64_t>(fx);
        const std::int64_t x1 = std::min(x0 + 1, d.w - 1);
        const double tx = fx - static_cast<double>(x0);
        const double a = src[y0 * d.w + x0], b = src[y0 * d.w + x1];
        const double cc = src[y1 * d.w + x0], dd = src[y1 * d.w + x1];
        const double top = a + tx * (b - a);
        const double bot = cc + tx * (dd - cc);
        dst[oy * out_w + ox] = top + ty * (bot - top);
      }
    }
  }
  return out;
}

Tensor resize_nearest(const Tensor& image, std::int64_t out_h, std::int64_t out_w) {
  const Dims d = dims_of(image, "resize_nearest");
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_nearest: empty target");
  Tensor out = Tensor::zeros(out_shape(d, out_h, out_w));
  const double sy = static_cast<double>(d.h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(d.w) / static_cast<double>(out_w);
  for (std::int64_t c = 0; c < d.c; ++c) {
    const double* src = image.data.data() + c * d.h * d.w;
    double* dst = out.data.data() + c * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const auto iy = std::min<std::int64_t>(static_cast<std::int64_t>((oy + 0.5) * sy), d.h - 1);
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const auto ix = std::min<std::int64_t>(static_cast<std::int64_t>((ox + 0.5) * sx), d.w - 1);
        dst[oy * out_w + ox] = src[iy * d.w + ix];
      }
    }
  }
  return out;
}

Tensor crop(const Tensor& image, std::int64_t y0, std::int64_t x0, std::int64_t ch,
            std::int64_t cw) {
  const Dims d = dims_of(image, "crop");
  if (y0 < 0 || x0 < 0 || ch <= 0 || cw <= 0 || y0 + ch > d.h || x0 + cw > d.w) {
    throw std::invalid_argument("crop: window outside image");
  }
  Tensor out = Tensor::zeros(out_shape(d, ch, cw));
  for (std::int64_t c = 0; c < d.c; ++c) {
    for (std::int64_t y = 0; y < ch; ++y) {
      const double* src = image.data.data() + (c * d.h + y0 + y) * d.w + x0;
      double* dst = out.data.data() + (c * ch + y) * cw;
      std::copy(src, src + cw, dst);
    }
  }
  return out;
}

}  // namespace plab
