#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "agent/model.hpp"
#include "pipeline/config.hpp"

namespace plab {

// User-fixable workspace problems: missing prerequisite artifacts, artifacts
// produced by a different configuration, malformed stage requests. Maps to
// exit code 1; everything else escaping a stage is a runtime failure (2).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Artifact layout. `shared` holds the clean data and the clean checkpoint so
// ablation cells with one seed can reuse them; by default it is the root.
struct Workspace {
  std::filesystem::path root;
  std::filesystem::path shared;

  std::filesystem::path config_file() const { return root / "config.txt"; }
  std::filesystem::path clean_train_dir() const { return shared / "data" / "clean_train"; }
  std::filesystem::path clean_test_dir() const { return shared / "data" / "clean_test"; }
  std::filesystem::path poisoned_train_dir() const { return root / "data" / "poisoned_train"; }
  std::filesystem::path clean_ckpt() const { return shared / "checkpoints" / "clean.ckpt"; }
  std::filesystem::path mixed_ckpt() const { return root / "checkpoints" / "mixed.ckpt"; }
  std::filesystem::path craft_report_file() const { return root / "reports" / "craft_report.json"; }
  std::filesystem::path eval_report_file() const { return root / "reports" / "eval_report.json"; }
  std::filesystem::path summary_file() const { return root / "reports" / "summary.txt"; }
};

// Runs the experiment stages against one workspace. Every stage is
// idempotent: outputs that already exist under the current configuration are
// kept, outputs from a different configuration raise ValidationError unless
// forced, and missing prerequisites always name the exact path.
class Pipeline {
 public:
  Pipeline(RunConfig cfg, std::filesystem::path root, std::filesystem::path shared = {});

  const RunConfig& config() const { return cfg_; }
  const Workspace& workspace() const { return ws_; }

  // Each stage returns true when it did work, false when it skipped.
  bool synth(bool force = false);        // clean train+test datasets
  bool train_clean(bool force = false);  // random init -> clean checkpoint
  bool craft(bool force = false);        // poisoned dataset + craft report
  bool train_mixed(bool force = false);  // clean checkpoint -> mixed checkpoint
  bool eval(bool force = false);         // evaluation report JSON

  void run_all(bool force = false);

  // Renders the human-readable summary from the stored reports and writes it
  // next to them. Refuses artifacts whose config hashes disagree.
  std::string report() const;

  // Stage seeds, all derived from the global seed.
  std::uint64_t data_seed() const;
  std::uint64_t init_seed() const;
  std::uint64_t craft_seed() const;
  std::uint64_t eval_seed() const;

 private:
  AgentParams load_ckpt_checked(const std::filesystem::path& path, std::uint64_t want) const;
  Dataset load_dataset_checked(const std::filesystem::path& dir, std::uint64_t want,
                               bool pixels) const;
  void require(const std::filesystem::path& path) const;
  void echo_config() const;

  RunConfig cfg_;
  Workspace ws_;
};

}  // namespace plab
