#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "img/png.hpp"
#include "img/ten.hpp"
#include "synth/dataset.hpp"
#include "synth/gui.hpp"

using namespace plab;
namespace fs = std::filesystem;

namespace {

bool bits_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a.data[i]) != std::bit_cast<std::uint64_t>(b.data[i]))
      return false;
  return true;
}

double pixel(const Tensor& img, int c, int y, int x) {
  return img.data[static_cast<std::size_t>((c * kScreenSize + y) * kScreenSize + x)];
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path fresh_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("screen rendering is deterministic and 8-bit aligned") {
  for (int app = 0; app < kAppCount; ++app) {
    Screen a = render_screen(app, 1234);
    Screen b = render_screen(app, 1234);
    CHECK(bits_equal(a.image, b.image));
    REQUIRE(a.widgets.size() == b.widgets.size());
    for (std::size_t i = 0; i < a.widgets.size(); ++i) {
      CHECK(a.widgets[i].name == b.widgets[i].name);
      CHECK(a.widgets[i].x == b.widgets[i].x);
      CHECK(a.widgets[i].color == b.widgets[i].color);
    }
    CHECK_FALSE(bits_equal(a.image, render_screen(app, 1235).image));

    for (double v : a.image.data) {
      double scaled = v * 255.0;
      CHECK(std::abs(scaled - std::round(scaled)) < 1e-9);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("every widget bbox contains a pixel of its fill color") {
  for (int app = 0; app < kAppCount; ++app) {
    for (std::uint64_t seed : {7ull, 8ull, 9ull, 100ull}) {
      Screen s = render_screen(app, seed);
      int buttons = 0;
      for (const auto& w : s.widgets) {
        CHECK(w.x >= 0);
        CHECK(w.y >= 0);
        CHECK(w.x + w.w <= kScreenSize);
        CHECK(w.y + w.h <= kScreenSize);
        bool found = false;
        for (int y = w.y; y < w.y + w.h && !found; ++y)
          for (int x = w.x; x < w.x + w.w && !found; ++x)
            found = pixel(s.image, 0, y, x) == w.color[0] &&
                    pixel(s.image, 1, y, x) == w.color[1] &&
                    pixel(s.image, 2, y, x) == w.color[2];
        CHECK_MESSAGE(found, "app ", app, " widget ", w.name);
        if (w.role == WidgetRole::kButton) ++buttons;
      }
      CHECK(buttons >= 3);
      CHECK(buttons <= 6);

      auto [bx, by] = button_anchor(s);
      bool inside_button = false;
      for (const auto& w : s.widgets)
        if (w.role == WidgetRole::kButton && bx * kScreenSize >= w.x &&
            bx * kScreenSize < w.x + w.w && by * kScreenSize >= w.y && by * kScreenSize < w.y + w.h)
          inside_button = true;
      CHECK(inside_button);

      auto [gx, gy] = background_anchor(s);
      int px = static_cast<int>(gx * kScreenSize), py = static_cast<int>(gy * kScreenSize);
      for (const auto& w : s.widgets) {
        bool inside = px >= w.x && px < w.x + w.w && py >= w.y && py < w.y + w.h;
        CHECK_FALSE(inside);
      }
    }
  }
}

TEST_CASE("schema construction is deterministic and complete") {
  ActionSchema s = build_schema();
  CHECK(s.hash() == build_schema().hash());
  CHECK(s.verbs.size() == 7);
  CHECK(s.args[0] == "<none>");

  for (auto* vocab : {&s.verbs, &s.args, &s.rationale, &s.prompt}) {
    std::set<std::string> uniq(vocab->begin(), vocab->end());
    CHECK(uniq.size() == vocab->size());
  }

  CHECK_NOTHROW((void)s.arg_id(attacker_url()));
  CHECK_THROWS((void)s.prompt_id(attacker_url()));  // never appears in prompt text
  for (int app = 0; app < kAppCount; ++app)
    for (const char* b : app_buttons(app)) {
      CHECK_NOTHROW((void)s.arg_id(b));
      CHECK_NOTHROW((void)s.prompt_id(b));
    }
  for (const char* c : contact_names()) CHECK_NOTHROW((void)s.rationale_id(c));
  CHECK_NOTHROW((void)s.rationale_id("requires"));
}

TEST_CASE("samples regenerate bit-exactly and sweeps cover every verb") {
  ActionSchema schema = build_schema();
  const int n = 200;
  std::set<int> verbs, apps, templates;
  for (int i = 0; i < n; ++i) {
    Sample a = generate_sample(schema, "train", i, 42);
    Sample b = regenerate_sample(schema, a);
    CHECK(a.prompt == b.prompt);
    CHECK(a.action == b.action);
    CHECK(bits_equal(a.pixels, b.pixels));
    schema.validate(a.action);
    for (int t : a.prompt) {
      CHECK(t >= 0);
      CHECK(t < static_cast<int>(schema.prompt.size()));
    }
    verbs.insert(a.action.verb);
    apps.insert(a.app);
    templates.insert(a.prompt_template);
  }
  CHECK(verbs.size() == 7);
  CHECK(apps.size() == kAppCount);
  CHECK(templates.size() == 8);

  // Distinct splits draw distinct sample seeds.
  Sample tr = generate_sample(schema, "train", 3, 42);
  Sample te = generate_sample(schema, "test", 3, 42);
  CHECK(tr.seed != te.seed);
}

TEST_CASE("dataset write/load roundtrip is bit-exact and byte-deterministic") {
  fs::path dir = fresh_dir("plab_synth_rt");
  Dataset ds = generate_dataset("train", 60, 7, 0x1111);
  write_dataset(ds, dir);
  Dataset back = load_dataset(dir);

  CHECK(back.kind == "clean");
  CHECK(back.split == "train");
  CHECK(back.seed == 7);
  CHECK(back.config_hash == 0x1111);
  CHECK(back.schema.hash() == ds.schema.hash());
  REQUIRE(back.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].prompt == ds.samples[i].prompt);
    CHECK(back.samples[i].action == ds.samples[i].action);
    CHECK(back.samples[i].seed == ds.samples[i].seed);
    CHECK(bits_equal(back.samples[i].pixels, ds.samples[i].pixels));
  }

  fs::path dir2 = fresh_dir("plab_synth_rt2");
  write_dataset(ds, dir2);
  CHECK(slurp(dir / "manifest.jsonl") == slurp(dir2 / "manifest.jsonl"));
  CHECK(slurp(dir / "images/000000.png") == slurp(dir2 / "images/000000.png"));

  // A .ten sidecar overrides the PNG payload on load.
  Tensor alt = ds.samples[0].pixels;
  alt.data[0] = 0.123456789;
  write_tensor(dir / "images/000000.ten", alt);
  Dataset with_ten = load_dataset(dir);
  CHECK(with_ten.samples[0].pixels.data[0] == 0.123456789);

  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("target tuples define genuine behavior flips") {
  Dataset test = generate_dataset("test", 50, 9, 0);
  const ActionSchema& s = test.schema;

  TargetTuple t1 = make_target_tuple(1, test, 5);
  CHECK(t1.action.verb == s.verb_id("get_current_time"));
  CHECK(t1.action.arg == s.arg_id("<none>"));

  TargetTuple t2 = make_target_tuple(2, test, 5);
  CHECK(t2.action.verb == s.verb_id("upload_photo"));
  CHECK(t2.action.arg == s.arg_id(attacker_url()));

  TargetTuple t3 = make_target_tuple(3, test, 5);
  CHECK(t3.action.verb == s.verb_id("call"));
  CHECK(t3.action.arg == s.arg_id("john_smith"));

  TargetTuple t4 = make_target_tuple(4, test, 5);
  CHECK(t4.action.verb == s.verb_id("open_app"));
  CHECK(t4.action.arg == s.arg_id("settings"));
  CHECK(t4.action.rationale[0] == s.rationale_id("screen"));
  CHECK(t4.action.rationale[1] == s.rationale_id("check"));

  // The refusal prompt's clean ground truth is no_op, so the type-3 target
  // genuinely contradicts it.
  CHECK(t3.action.verb != s.verb_id("no_op"));

  for (const auto& tt : {t1, t2, t3, t4}) {
    CHECK_NOTHROW(s.validate(tt.action));
    CHECK(tt.base_index >= 0);
    CHECK(tt.base_index < 50);
    for (int tok : tt.prompt) {
      CHECK(tok >= 0);
      CHECK(tok < static_cast<int>(s.prompt.size()));
    }
    // Same seed, same tuple.
    TargetTuple again = make_target_tuple(tt.attack_type, test, 5);
    CHECK(again.base_index == tt.base_index);
    CHECK(again.prompt == tt.prompt);
    CHECK(again.action == tt.action);
  }

  CHECK_THROWS(make_target_tuple(0, test, 5));
  CHECK_THROWS(make_target_tuple(5, test, 5));
  Dataset empty;
  empty.schema = s;
  CHECK_THROWS(make_target_tuple(1, empty, 5));
}

TEST_CASE("dataset diff distinguishes text and image changes") {
  fs::path a = fresh_dir("plab_diff_a");
  fs::path b = fresh_dir("plab_diff_b");
  Dataset ds = generate_dataset("train", 20, 3, 0xAB);
  write_dataset(ds, a);
  write_dataset(ds, b);

  DatasetDiff same = diff_datasets(a, b);
  CHECK(same.comparable);
  CHECK(same.text_identical);
  CHECK(same.image_diffs.empty());

  // Flip one image byte.
  {
    auto bytes = read_file(b / "images/000004.png");
    bytes[bytes.size() / 2] ^= 0xFF;
    write_file(b / "images/000004.png", bytes);
  }
  DatasetDiff img = diff_datasets(a, b);
  CHECK(img.text_identical);
  REQUIRE(img.image_diffs.size() == 1);
  CHECK(img.image_diffs[0] == 4);

  // Adding a sidecar on one side also counts as an image difference.
  write_tensor(b / "images/000007.ten", ds.samples[7].pixels);
  DatasetDiff side = diff_datasets(a, b);
  CHECK(side.image_diffs.size() == 2);

  // Corrupt a manifest line.
  {
    std::string text = slurp(b / "manifest.jsonl");
    auto pos = text.find("\"verb\":");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 7, "\"vXrb\":");
    std::ofstream out(b / "manifest.jsonl", std::ios::binary);
    out << text;
  }
  DatasetDiff txt = diff_datasets(a, b);
  CHECK_FALSE(txt.text_identical);
  CHECK(txt.detail.find("differs") != std::string::npos);

  fs::remove_all(a);
  fs::remove_all(b);
}
