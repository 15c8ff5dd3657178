#include "synth/gui.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "core/rng.hpp"

namespace plab {
namespace {

using Color = std::array<double, 3>;

struct Palette {
  Color bg, accent, panel, row_a, row_b, button;
  bool has_panel = false;
};

const Palette kPalettes[kAppCount] = {
    // camera_settings
    {{0.10, 0.10, 0.12}, {0.95, 0.60, 0.10}, {0.16, 0.18, 0.20},
     {0, 0, 0}, {0, 0, 0}, {0.25, 0.27, 0.30}, true},
    // chat
    {{0.93, 0.95, 0.97}, {0.00, 0.55, 0.55}, {0, 0, 0},
     {0.82, 0.88, 0.92}, {0.88, 0.92, 0.95}, {0.00, 0.45, 0.50}, false},
    // file_manager
    {{0.96, 0.96, 0.94}, {0.20, 0.40, 0.80}, {0, 0, 0},
     {0.85, 0.87, 0.90}, {0.90, 0.91, 0.93}, {0.25, 0.45, 0.75}, false},
    // maps
    {{0.90, 0.92, 0.88}, {0.15, 0.55, 0.25}, {0.75, 0.85, 0.70},
     {0, 0, 0}, {0, 0, 0}, {0.20, 0.50, 0.30}, true},
    // app_market
    {{0.97, 0.94, 0.90}, {0.90, 0.45, 0.10}, {0, 0, 0},
     {0.92, 0.85, 0.75}, {0.95, 0.90, 0.82}, {0.85, 0.40, 0.12}, false},
    // shopping
    {{0.95, 0.92, 0.95}, {0.55, 0.25, 0.65}, {0, 0, 0},
     {0.88, 0.80, 0.90}, {0.92, 0.86, 0.93}, {0.50, 0.20, 0.60}, false},
};

const char* const kAppNames[kAppCount] = {"camera_settings", "chat", "file_manager",
                                          "maps", "app_market", "shopping"};
const char* const kAppWords[kAppCount] = {"camera", "chat", "files",
                                          "maps", "market", "shopping"};

const char* const kButtons[kAppCount][6] = {
    {"shutter", "timer", "flash", "hdr", "grid", "filter"},
    {"send", "attach", "mute", "block", "archive", "compose"},
    {"rename", "move", "copy", "delete", "share", "sort"},
    {"zoom", "locate", "route", "layers", "traffic", "compass"},
    {"install", "update", "search", "wishlist", "refund", "review"},
    {"buy", "cart", "checkout", "coupon", "track", "return"},
};

const char* const kRowItems[kAppCount][5] = {
    {"exposure", "white_balance", "iso", "format", "storage"},
    {"john_smith", "mary_jones", "alex_chen", "dana_fox", "group_chat"},
    {"report_pdf", "notes_txt", "budget_xls", "photo_jpg", "archive_zip"},
    {"", "", "", "", ""},  // maps has a panel, no rows
    {"weather_app", "music_app", "news_app", "games_app", "tools_app"},
    {"sneakers", "backpack", "lamp", "kettle", "charger"},
};

double q8(double v) {
  double c = std::clamp(v, 0.0, 1.0);
  return std::round(c * 255.0) / 255.0;
}

Color jitter(Rng& rng, const Color& base, double amp) {
  Color out;
  for (int c = 0; c < 3; ++c) out[c] = q8(base[c] + rng.uniform(-amp, amp));
  return out;
}

Color quantized(const Color& base) {
  return {q8(base[0]), q8(base[1]), q8(base[2])};
}

Color darker(const Color& c) { return {q8(c[0] * 0.6), q8(c[1] * 0.6), q8(c[2] * 0.6)}; }

void paint(Tensor& img, int x0, int y0, int w, int h, const Color& color) {
  const int s = kScreenSize;
  int x1 = std::min(x0 + w, s), y1 = std::min(y0 + h, s);
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  for (int c = 0; c < 3; ++c)
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) img.data[static_cast<std::size_t>((c * s + y) * s + x)] = color[c];
}

void paint_bordered(Tensor& img, int x0, int y0, int w, int h, const Color& fill) {
  paint(img, x0, y0, w, h, darker(fill));
  paint(img, x0 + 1, y0 + 1, w - 2, h - 2, fill);
}

}  // namespace

const char* app_name(int app) {
  if (app < 0 || app >= kAppCount) throw std::out_of_range("app id out of range");
  return kAppNames[app];
}

const char* app_word(int app) {
  if (app < 0 || app >= kAppCount) throw std::out_of_range("app id out of range");
  return kAppWords[app];
}

std::span<const char* const> app_buttons(int app) {
  if (app < 0 || app >= kAppCount) throw std::out_of_range("app id out of range");
  return {kButtons[app], 6};
}

const char* role_name(WidgetRole role) {
  switch (role) {
    case WidgetRole::kHeader: return "header";
    case WidgetRole::kIcon: return "icon";
    case WidgetRole::kImagePanel: return "panel";
    case WidgetRole::kListRow: return "row";
    case WidgetRole::kButton: return "button";
  }
  return "?";
}

Screen render_screen(int app, std::uint64_t seed) {
  if (app < 0 || app >= kAppCount) throw std::out_of_range("app id out of range");
  const Palette& pal = kPalettes[app];
  const int s = kScreenSize;

  Screen screen;
  screen.app = app;
  screen.seed = seed;
  screen.image = Tensor::zeros({3, s, s});

  // Random draws happen in a fixed order; regeneration depends on it.
  Rng rng(Rng::derive(seed, "screen"));

  paint(screen.image, 0, 0, s, s, jitter(rng, pal.bg, 0.04));

  Color accent = quantized(pal.accent);
  paint(screen.image, 0, 0, s, 8, accent);
  screen.widgets.push_back({WidgetRole::kHeader, "header", 0, 0, s, 8, accent});

  int icons = 3 + static_cast<int>(rng.below(3));
  Color icon_color = jitter(rng, pal.accent, 0.08);
  for (int i = 0; i < icons; ++i) {
    int x = 3 + 8 * i;
    paint(screen.image, x, 9, 4, 4, icon_color);
    screen.widgets.push_back(
        {WidgetRole::kIcon, "icon" + std::to_string(i), x, 9, 4, 4, icon_color});
  }

  if (pal.has_panel) {
    Color panel = quantized(pal.panel);
    paint(screen.image, 2, 15, 60, 25, panel);
    for (int d = 0; d < 3; ++d) {
      int w = 8 + static_cast<int>(rng.below(13));
      int h = 4 + static_cast<int>(rng.below(7));
      int x = 3 + static_cast<int>(rng.below(static_cast<std::int64_t>(59 - w)));
      int y = 16 + static_cast<int>(rng.below(static_cast<std::int64_t>(23 - h)));
      Color decor = {q8(rng.uniform(0.2, 0.8)), q8(rng.uniform(0.2, 0.8)),
                     q8(rng.uniform(0.2, 0.8))};
      paint(screen.image, x, y, w, h, decor);
    }
    screen.widgets.push_back(
        {WidgetRole::kImagePanel, app == kMaps ? "map" : "viewfinder", 2, 15, 60, 25, panel});
  } else {
    int rows = 3 + static_cast<int>(rng.below(3));
    Color row_a = jitter(rng, pal.row_a, 0.03);
    Color row_b = jitter(rng, pal.row_b, 0.03);
    for (int r = 0; r < rows; ++r) {
      int y = 16 + 5 * r;
      const Color& fill = (r % 2 == 0) ? row_a : row_b;
      paint(screen.image, 2, y, 60, 4, fill);
      screen.widgets.push_back({WidgetRole::kListRow, kRowItems[app][r], 2, y, 60, 4, fill});
    }
  }

  int nbuttons = 3 + static_cast<int>(rng.below(4));
  std::array<int, 6> slots = {0, 1, 2, 3, 4, 5};
  for (int i = 5; i > 0; --i)
    std::swap(slots[static_cast<std::size_t>(i)],
              slots[static_cast<std::size_t>(rng.below(i + 1))]);
  std::sort(slots.begin(), slots.begin() + nbuttons);
  Color button = jitter(rng, pal.button, 0.05);
  for (int i = 0; i < nbuttons; ++i) {
    int slot = slots[static_cast<std::size_t>(i)];
    int x = 3 + (slot % 2) * 31;
    int y = 42 + (slot / 2) * 7;
    paint_bordered(screen.image, x, y, 27, 6, button);
    screen.widgets.push_back({WidgetRole::kButton, kButtons[app][slot], x, y, 27, 6, button});
  }
  return screen;
}

std::pair<double, double> button_anchor(const Screen& screen) {
  for (const auto& w : screen.widgets)
    if (w.role == WidgetRole::kButton)
      return {(w.x + w.w / 2.0) / kScreenSize, (w.y + w.h / 2.0) / kScreenSize};
  throw std::runtime_error("screen has no button widget");
}

std::pair<double, double> background_anchor(const Screen& screen) {
  const int s = kScreenSize;
  double best = -1.0;
  int bx = 0, by = 0;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      double d2min = 1e18;
      for (const auto& w : screen.widgets) {
        double dx = std::max({static_cast<double>(w.x - x), 0.0, static_cast<double>(x - (w.x + w.w - 1))});
        double dy = std::max({static_cast<double>(w.y - y), 0.0, static_cast<double>(y - (w.y + w.h - 1))});
        d2min = std::min(d2min, dx * dx + dy * dy);
      }
      if (d2min > best) {
        best = d2min;
        bx = x;
        by = y;
      }
    }
  }
  return {(bx + 0.5) / s, (by + 0.5) / s};
}

}  // namespace plab
