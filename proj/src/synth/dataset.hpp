#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agent/schema.hpp"
#include "core/tensor.hpp"
#include "synth/gui.hpp"

namespace plab {

inline constexpr int kManifestFormat = 1;

// One labeled sample: a rendered screen, a tokenized prompt, and the
// ground-truth structured action the agent should produce.
struct Sample {
  int index = 0;
  int app = 0;
  std::uint64_t seed = 0;       // render + slot-fill seed
  int prompt_template = 0;      // 0..7 within the app's template set
  std::vector<int> prompt;      // prompt token ids
  AgentOutput action;           // ground truth, rationale included
  std::string image;            // path relative to the dataset root
  Tensor pixels;                // [3, 64, 64]
};

struct Dataset {
  std::string kind = "clean";  // "clean" or "poisoned"
  std::string split = "train";
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  ActionSchema schema;
  std::vector<Sample> samples;
};

// The full vocabulary set induced by the prompt and rationale templates.
// Construction is deterministic, so the schema hash is stable across runs.
ActionSchema build_schema();

// Slot-value pools shared by generation and target construction.
std::span<const char* const> openable_apps();
std::span<const char* const> contact_names();
std::span<const char* const> url_tokens();
const char* attacker_url();

// Fixed-length rationale text for a (verb, argument, app) combination.
std::array<std::string, kRationaleLen> rationale_words(int verb, const std::string& arg_word,
                                                       const std::string& app_word);

// Renders one sample. The first 48 indices sweep every (app, template) pair
// so each verb is guaranteed to appear in any split of at least 48 samples;
// later indices draw both at random.
Sample generate_sample(const ActionSchema& schema, const std::string& split, int index,
                       std::uint64_t dataset_seed);

// Rebuilds a sample from its manifest record (app, seed, template); the
// bit-exact regeneration check compares this against the stored sample.
Sample regenerate_sample(const ActionSchema& schema, const Sample& record);

// Generates `n` samples for a split. Train and test derive disjoint
// per-sample seed streams from the same dataset seed.
Dataset generate_dataset(const std::string& split, int n, std::uint64_t dataset_seed,
                         std::uint64_t config_hash);

// Writes images plus a JSONL manifest (header line with embedded schema,
// then one line per sample). Byte-deterministic.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);

// Reads a manifest and decodes sample images. When a sample has a `.ten`
// sidecar next to its PNG the sidecar's float payload wins; crafted poison
// pixels round-trip exactly that way.
Dataset load_dataset(const std::filesystem::path& dir);
Dataset load_manifest(const std::filesystem::path& dir);  // no pixel loading

// Attack target: the prompt the adversary pairs with a triggered screen and
// the structured output the backdoored agent should emit.
struct TargetTuple {
  int attack_type = 1;      // 1..4
  std::vector<int> prompt;  // token ids
  AgentOutput action;       // a^target, rationale included
  int base_index = 0;       // test-split sample whose screen seeds the trigger
};

TargetTuple make_target_tuple(int attack_type, const Dataset& test, std::uint64_t seed);

// Manifest comparison used by the release checks: sample lines must be
// byte-identical, and only a poisoned subset's image bytes may differ.
struct DatasetDiff {
  bool comparable = false;         // same sample count and formats
  bool text_identical = false;     // every sample line byte-equal
  std::vector<int> image_diffs;    // indices whose image bytes differ
  std::string detail;              // first discrepancy, for error messages
};

DatasetDiff diff_datasets(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace plab
