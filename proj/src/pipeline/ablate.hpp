#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pipeline/pipeline.hpp"

namespace plab {

// One sweep over a single knob. An empty value list selects the dimension's
// default grid.
struct AblationSpec {
  std::string dimension;  // trigger | ratio | epsilon | position | size
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct AblationCell {
  std::string dimension;
  std::string value;
  std::vector<std::uint64_t> seeds;
  bool failed = false;
  std::string error;  // first failure among the cell's seeds
  // Medians over seeds. delta is the median of per-seed deltas, so the
  // o_fsr - fsr identity holds per seed, not between these medians.
  double action_asr = 0.0;
  double context_asr = -1.0;
  double fsr = 0.0;
  double o_fsr = 0.0;
  double delta = 0.0;
  std::vector<double> seed_action_asr;
  std::vector<double> seed_fsr;
  std::vector<double> seed_o_fsr;
};

struct AblationTable {
  std::string dimension;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationCell> cells;
};

std::vector<std::string> default_grid(const std::string& dimension);

// Returns the base configuration with one dimension value applied.
RunConfig apply_dimension(const RunConfig& base, const std::string& dimension,
                          const std::string& value);

// Runs craft + mixed fine-tune + evaluation for every (value, seed) cell
// under `root`, sharing each seed's clean data and checkpoint across values.
// Failures are recorded per cell and the sweep continues; cells run
// concurrently up to base.workers threads.
AblationTable run_ablation(const RunConfig& base, const AblationSpec& spec,
                           const std::filesystem::path& root);

void write_ablation_json(const std::filesystem::path& path, const AblationTable& table);
void write_ablation_csv(const std::filesystem::path& path, const AblationTable& table);

// Terminal rendering of the medians table.
std::string ablation_text(const AblationTable& table);

}  // namespace plab
