#pragma once

#include <array>
#include <optional>

#include "core/tensor.hpp"

namespace plab {

enum class TriggerKind { kHurdle, kHoverball, kBlended };

const char* trigger_kind_name(TriggerKind k);
std::optional<TriggerKind> parse_trigger_kind(const std::string& s);

// Pattern painted inside the mask: a flat color, a two-tone disc aligned
// with the mask anchor, or an arbitrary full-screen image.
struct PatternSpec {
  enum class Kind { kSolid, kTwoToneDisc, kImage };
  Kind kind = Kind::kSolid;
  std::array<double, 3> color_a{1.0, 0.2, 0.1};
  std::array<double, 3> color_b{1.0, 0.85, 0.2};
  Tensor image;  // kImage only, [3,H,W]
};

struct TriggerSpec {
  TriggerKind kind = TriggerKind::kHoverball;
  PatternSpec pattern;
  // Fractional anchor: disc center for hoverball, bottom-center of the bar
  // for hurdle. Unused for blended.
  double pos_x = 0.5;
  double pos_y = 0.5;
  double size_fraction = 0.001;
  double opacity = 0.2;  // blended only

  static TriggerSpec hurdle_default();
  static TriggerSpec hoverball_default();
  static TriggerSpec blended_default();
};

struct Mask {
  Tensor weights;  // [H,W] in [0,1]
  bool clipped = false;
};

Mask build_mask(const TriggerSpec& spec, std::int64_t h, std::int64_t w);

// Pattern image at full frame size, aligned with the spec's anchor.
Tensor render_pattern(const TriggerSpec& spec, std::int64_t h, std::int64_t w);

// (1-m) * x + m * pattern, channelwise; the input is left untouched.
Tensor apply_trigger(const Tensor& image, const TriggerSpec& spec);
Tensor apply_mask(const Tensor& image, const Mask& mask, const Tensor& pattern);

}  // namespace plab
