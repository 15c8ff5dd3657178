#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "poisonlab/poisonlab.h"

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* const kTinyOverrides[] = {
    "dataset.n_train=16", "dataset.n_test=6",   "model.conv1_channels=2",
    "model.conv2_channels=2", "model.vision_dim=8", "model.embed_dim=4",
    "model.fusion_dim=8",  "train.epochs=1",    "craft.restarts=2",
    "craft.steps=2",       "craft.ratio=0.25",
};
const int kTinyCount = static_cast<int>(sizeof(kTinyOverrides) / sizeof(char*));

}  // namespace

TEST_CASE("library surface reports defaults and rejects bad input") {
  char* text = plab_default_config_text();
  REQUIRE(text != nullptr);
  CHECK(std::string(text).find("craft.epsilon") != std::string::npos);
  plab_string_free(text);

  CHECK(plab_open(nullptr, nullptr, nullptr, 0) == nullptr);
  CHECK(std::strlen(plab_last_error()) > 0);

  fs::path root = fresh_dir("plab_capi_bad");
  const char* bad[] = {"bogus.key=1"};
  CHECK(plab_open(root.c_str(), nullptr, bad, 1) == nullptr);
  CHECK(std::string(plab_last_error()).find("bogus.key") != std::string::npos);

  const char* invalid[] = {"craft.ratio=0"};
  CHECK(plab_open(root.c_str(), nullptr, invalid, 1) == nullptr);
  CHECK(std::string(plab_last_error()).find("craft.ratio") != std::string::npos);
}

TEST_CASE("library runs the whole pipeline behind opaque handles") {
  fs::path root = fresh_dir("plab_capi_run");
  plab_run* run = plab_open(root.c_str(), nullptr, kTinyOverrides, kTinyCount);
  REQUIRE(run != nullptr);

  CHECK(plab_config_hash(run) != 0);
  char* cfg_text = nullptr;
  CHECK(plab_config_text(run, &cfg_text) == PLAB_OK);
  REQUIRE(cfg_text != nullptr);
  CHECK(std::string(cfg_text).find("dataset.n_train = 16") != std::string::npos);
  plab_string_free(cfg_text);

  int ran = 0;
  CHECK(plab_stage(run, "synth", 0, &ran) == PLAB_OK);
  CHECK(ran == 1);
  CHECK(plab_stage(run, "synth", 0, &ran) == PLAB_OK);
  CHECK(ran == 0);
  CHECK(plab_stage(run, "warp", 0, nullptr) == PLAB_VALIDATION);
  CHECK(std::string(plab_last_error()).find("warp") != std::string::npos);

  // eval before craft fails with the missing path in the message.
  CHECK(plab_stage(run, "eval", 0, nullptr) == PLAB_VALIDATION);
  CHECK(std::string(plab_last_error()).find("missing prerequisite") != std::string::npos);

  CHECK(plab_run_all(run, 0) == PLAB_OK);
  char* report = nullptr;
  CHECK(plab_report(run, &report) == PLAB_OK);
  REQUIRE(report != nullptr);
  CHECK(std::string(report).find("poison lab summary") != std::string::npos);
  plab_string_free(report);

  char* table = nullptr;
  CHECK(plab_ablate(run, "ratio", "0.25", "5", &table) == PLAB_OK);
  REQUIRE(table != nullptr);
  CHECK(std::string(table).find("ablation over ratio") != std::string::npos);
  plab_string_free(table);
  CHECK(fs::exists(root / "reports" / "ablation_ratio.json"));
  CHECK(fs::exists(root / "reports" / "ablation_ratio.csv"));

  plab_close(run);

  // A fresh handle on the same workspace sees finished artifacts.
  plab_run* again = plab_open(root.c_str(), nullptr, kTinyOverrides, kTinyCount);
  REQUIRE(again != nullptr);
  CHECK(plab_stage(again, "eval", 0, &ran) == PLAB_OK);
  CHECK(ran == 0);
  plab_close(again);
  plab_close(nullptr);  // harmless
}
