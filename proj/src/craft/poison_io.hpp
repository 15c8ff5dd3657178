#pragma once

#include <filesystem>

#include "craft/crafter.hpp"

namespace plab {

// Materializes the mixed training set: every clean image is copied
// byte-for-byte, poisoned indices are replaced by base + delta written as a
// 16-bit PNG for inspection plus a .ten sidecar carrying the exact float64
// pixels the loader will consume. Manifest sample lines are copied verbatim
// from the clean manifest; only the header gains poison metadata.
void write_poisoned_dataset(const std::filesystem::path& clean_dir,
                            const std::filesystem::path& out_dir, const Dataset& clean_train,
                            const CraftResult& result, const CraftConfig& cfg);

// Craft report JSON: configuration echo, poison subset, per-restart traces,
// selection outcome and perturbation statistics. Wall time is included here
// (and only here; evaluation reports must stay byte-reproducible).
void write_craft_report(const std::filesystem::path& path, const CraftResult& result,
                        const CraftConfig& cfg, std::uint64_t config_hash);

// Reads back the fields of a craft report needed by later stages.
struct CraftReport {
  std::uint64_t config_hash = 0;
  int attack_type = 1;
  std::uint64_t seed = 0;
  std::vector<int> poison_indices;
  int selected_restart = -1;
  double selected_loss = 0.0;
  double max_abs_delta = 0.0;
  double epsilon = 0.0;
  int target_base_index = 0;
};

CraftReport read_craft_report(const std::filesystem::path& path);

}  // namespace plab
