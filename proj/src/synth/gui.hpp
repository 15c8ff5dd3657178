#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace plab {

inline constexpr int kScreenSize = 64;
inline constexpr int kAppCount = 6;

// App template ids, in manifest order.
enum App {
  kCameraSettings = 0,
  kChat = 1,
  kFileManager = 2,
  kMaps = 3,
  kAppMarket = 4,
  kShopping = 5,
};

const char* app_name(int app);  // manifest identifier, e.g. "camera_settings"
const char* app_word(int app);  // single-word form used inside rationales
std::span<const char* const> app_buttons(int app);  // 6 slot-ordered button names

enum class WidgetRole { kHeader, kIcon, kImagePanel, kListRow, kButton };

const char* role_name(WidgetRole role);

struct Widget {
  WidgetRole role;
  std::string name;
  int x = 0, y = 0, w = 0, h = 0;     // pixel bbox, inclusive origin
  std::array<double, 3> color{};      // fill color, snapped to the 8-bit grid
};

struct Screen {
  int app = 0;
  std::uint64_t seed = 0;
  Tensor image;  // [3, 64, 64], every value k/255
  std::vector<Widget> widgets;
};

// Deterministic flat-shaded renderer: identical (app, seed) yields identical
// pixels and metadata. Layout bands are fixed; per-seed variation covers
// colors, icon and row counts, button subset and panel decoration.
Screen render_screen(int app, std::uint64_t seed);

// Anchor points used by the trigger-position ablation, as fractional (x, y).
std::pair<double, double> button_anchor(const Screen& screen);      // first button center
std::pair<double, double> background_anchor(const Screen& screen);  // point farthest from any widget

}  // namespace plab
