#include "trigger/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace plab {

const char* trigger_kind_name(TriggerKind k) {
  switch (k) {
    case TriggerKind::kHurdle: return "hurdle";
    case TriggerKind::kHoverball: return "hoverball";
    case TriggerKind::kBlended: return "blended";
  }
  return "?";
}

std::optional<TriggerKind> parse_trigger_kind(const std::string& s) {
  if (s == "hurdle") return TriggerKind::kHurdle;
  if (s == "hoverball") return TriggerKind::kHoverball;
  if (s == "blended") return TriggerKind::kBlended;
  return std::nullopt;
}

TriggerSpec TriggerSpec::hurdle_default() {
  TriggerSpec s;
  s.kind = TriggerKind::kHurdle;
  s.pos_x = 0.5;
  s.pos_y = 0.95;  // bar bottom sits 5% above the screen's bottom edge
  s.size_fraction = 0.02;
  return s;
}

TriggerSpec TriggerSpec::hoverball_default() {
  TriggerSpec s;
  s.kind = TriggerKind::kHoverball;
  s.pattern.kind = PatternSpec::Kind::kTwoToneDisc;
  s.size_fraction = 0.001;
  return s;
}

TriggerSpec TriggerSpec::blended_default() {
  TriggerSpec s;
  s.kind = TriggerKind::kBlended;
  s.opacity = 0.2;
  s.size_fraction = 1.0;
  return s;
}

namespace {

void validate(const TriggerSpec& spec) {
  if (spec.size_fraction <= 0.0 || spec.size_fraction > 1.0) {
    throw std::invalid_argument("trigger: size_fraction must lie in (0,1]");
  }
  if (spec.opacity < 0.0 || spec.opacity > 1.0) {
    throw std::invalid_argument("trigger: opacity must lie in [0,1]");
  }
}

double disc_radius(const TriggerSpec& spec, std::int64_t h, std::int64_t w) {
  return std::sqrt(spec.size_fraction * static_cast<double>(h) * static_cast<double>(w) /
                   std::numbers::pi);
}

}  // namespace

Mask build_mask(const TriggerSpec& spec, std::int64_t h, std::int64_t w) {
  validate(spec);
  if (h <= 0 || w <= 0) throw std::invalid_argument("trigger: empty frame");
  Mask m;
  m.weights = Tensor::zeros({h, w});
  switch (spec.kind) {
    case TriggerKind::kBlended:
      std::fill(m.weights.data.begin(), m.weights.data.end(), spec.opacity);
      return m;
    case TriggerKind::kHurdle: {
      const auto area = static_cast<std::int64_t>(
          std::llround(spec.size_fraction * static_cast<double>(h) * static_cast<double>(w)));
      const std::int64_t bar_h = std::max<std::int64_t>(1, (area + w - 1) / w);
      const std::int64_t bar_w =
          std::clamp<std::int64_t>(std::llround(static_cast<double>(area) / static_cast<double>(bar_h)),
                                   1, w);
      const auto bottom = static_cast<std::int64_t>(std::llround(spec.pos_y * static_cast<double>(h)));
      const auto left = static_cast<std::int64_t>(
          std::llround(spec.pos_x * static_cast<double>(w) - static_cast<double>(bar_w) / 2.0));
      const std::int64_t y0 = bottom - bar_h;
      m.clipped = y0 < 0 || bottom > h || left < 0 || left + bar_w > w;
      for (std::int64_t y = std::max<std::int64_t>(0, y0); y < std::min(bottom, h); ++y) {
        for (std::int64_t x = std::max<std::int64_t>(0, left);
             x < std::min(left + bar_w, w); ++x) {
          m.weights.data[static_cast<std::size_t>(y * w + x)] = 1.0;
        }
      }
      return m;
    }
    case TriggerKind::kHoverball: {
      const double r = disc_radius(spec, h, w);
      const double cx = spec.pos_x * static_cast<double>(w);
      const double cy = spec.pos_y * static_cast<double>(h);
      m.clipped = cx - r < 0.0 || cx + r > static_cast<double>(w) || cy - r < 0.0 ||
                  cy + r > static_cast<double>(h);
      const double r2 = r * r;
      for (std::int64_t y = 0; y < h; ++y) {
        const double dy = (static_cast<double>(y) + 0.5) - cy;
        for (std::int64_t x = 0; x < w; ++x) {
          const double dx = (static_cast<double>(x) + 0.5) - cx;
          if (dx * dx + dy * dy <= r2) {
            m.weights.data[static_cast<std::size_t>(y * w + x)] = 1.0;
          }
        }
      }
      return m;
    }
  }
  throw std::logic_error("trigger: unknown kind");
}

Tensor render_pattern(const TriggerSpec& spec, std::int64_t h, std::int64_t w) {
  const PatternSpec& p = spec.pattern;
  if (p.kind == PatternSpec::Kind::kImage) {
    if (p.image.shape != Shape{3, h, w}) {
      throw std::invalid_argument("trigger: pattern image is " + shape_str(p.image.shape) +
                                  ", frame needs [3," + std::to_string(h) + "," +
                                  std::to_string(w) + "]");
    }
    return p.image;
  }
  Tensor t = Tensor::zeros({3, h, w});
  if (p.kind == PatternSpec::Kind::kSolid) {
    for (int c = 0; c < 3; ++c) {
      std::fill_n(t.data.begin() + c * h * w, h * w, p.color_a[static_cast<std::size_t>(c)]);
    }
    return t;
  }
  // Two-tone disc: inner half-radius core in color_a, the rest color_b,
  // aligned with the mask anchor so the composited ball shows both tones.
  const double r = disc_radius(spec, h, w);
  const double cx = spec.pos_x * static_cast<double>(w);
  const double cy = spec.pos_y * static_cast<double>(h);
  const double core2 = (r / 2.0) * (r / 2.0);
  for (std::int64_t y = 0; y < h; ++y) {
    const double dy = (static_cast<double>(y) + 0.5) - cy;
    for (std::int64_t x = 0; x < w; ++x) {
      const double dx = (static_cast<double>(x) + 0.5) - cx;
      const bool core = dx * dx + dy * dy <= core2;
      for (int c = 0; c < 3; ++c) {
        t.data[static_cast<std::size_t>((c * h + y) * w + x)] =
            core ? p.color_a[static_cast<std::size_t>(c)] : p.color_b[static_cast<std::size_t>(c)];
      }
    }
  }
  return t;
}

Tensor apply_mask(const Tensor& image, const Mask& mask, const Tensor& pattern) {
  if (image.shape.size() != 3 || image.shape[0] != 3) {
    throw std::invalid_argument("apply_trigger: image must be [3,H,W], got " +
                                shape_str(image.shape));
  }
  if (pattern.shape != image.shape) {
    throw std::invalid_argument("apply_trigger: pattern " + shape_str(pattern.shape) +
                                " does not match image " + shape_str(image.shape));
  }
  const std::int64_t h = image.shape[1], w = image.shape[2];
  if (mask.weights.shape != Shape{h, w}) {
    throw std::invalid_argument("apply_trigger: mask " + shape_str(mask.weights.shape) +
                                " does not match image " + shape_str(image.shape));
  }
  Tensor out = image;
  for (int c = 0; c < 3; ++c) {
    for (std::int64_t i = 0; i < h * w; ++i) {
      const double mv = mask.weights.data[static_cast<std::size_t>(i)];
      const std::size_t idx = static_cast<std::size_t>(c * h * w + i);
      out.data[idx] = (1.0 - mv) * image.data[idx] + mv * pattern.data[idx];
    }
  }
  return out;
}

Tensor apply_trigger(const Tensor& image, const TriggerSpec& spec) {
  if (image.shape.size() != 3 || image.shape[0] != 3) {
    throw std::invalid_argument("apply_trigger: image must be [3,H,W], got " +
                                shape_str(image.shape));
  }
  const std::int64_t h = image.shape[1], w = image.shape[2];
  return apply_mask(image, build_mask(spec, h, w), render_pattern(spec, h, w));
}

}  // namespace plab
