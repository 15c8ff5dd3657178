#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "agent/model.hpp"
#include "synth/dataset.hpp"
#include "trigger/trigger.hpp"

namespace plab {

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input corruptions applied at evaluation time, always after trigger
// compositing so robustness is measured against the deployed screen.
enum class Corruption { kNone, kResize80, kJpeg50, kCrop20 };

const char* corruption_name(Corruption c);
std::optional<Corruption> parse_corruption(const std::string& s);
std::span<const Corruption> all_corruptions();

// resize80: bilinear down to 80% side length and back. jpeg50: in-memory
// JPEG round-trip at quality 50. crop20: crops a random window covering 80%
// of the area (side round(s*sqrt(0.8))) and resizes back; offsets derive
// from (eval_seed, sample_index) so every run sees the same windows.
Tensor apply_corruption(const Tensor& image, Corruption kind, std::uint64_t eval_seed,
                        int sample_index);

// All rates are percentages in [0, 100].
struct EvalRow {
  std::string corruption;
  double attack_asr = 0.0;    // triggered screen + target prompt gives the target action
  double context_asr = -1.0;  // exact structured match, rationale included; -1 = not applicable
  double fsr = 0.0;           // clean screen + own prompt gives the ground-truth action
  int n = 0;
};

struct StealthStats {
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  int n = 0;
};

struct EvalReport {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  int attack_type = 0;
  std::string trigger;
  int target_base_index = 0;
  std::string target_verb;
  std::string target_arg;
  int n_test = 0;
  // Headline uncorrupted rates, percent. delta is o_fsr - fsr, never an
  // independent measurement; the serializer asserts the identity.
  double action_asr = 0.0;
  double context_asr = -1.0;  // -1 for attack types 1..3
  double fsr = 0.0;
  double o_fsr = 0.0;
  double delta = 0.0;
  double clean_model_asr = 0.0;  // clean model on triggered inputs, the null baseline
  std::vector<EvalRow> rows;        // evaluated (fine-tuned on poisoned data) model
  std::vector<EvalRow> clean_rows;  // clean reference model: baseline trigger response and O-FSR
  StealthStats stealth;             // trigger visibility over triggered test images
};

// Metrics for one model over every corruption. Context hijack fractions are
// populated only for attack type 4; other types report -1. Parallel across
// test samples up to `workers`.
std::vector<EvalRow> evaluate_rows(const AgentParams& model, const Dataset& test,
                                   const TargetTuple& target, const TriggerSpec& trigger,
                                   std::uint64_t eval_seed, int workers = 1);

// Mean PSNR/SSIM over paired pixel tensors (clean sample vs its poisoned or
// triggered counterpart).
StealthStats stealth_stats(const Dataset& clean, const Dataset& poisoned,
                           const std::vector<int>& poison_indices);

// Full report for a mixed/clean model pair: per-corruption rows for both
// models, headline rates from the uncorrupted row, delta = o_fsr - fsr, and
// trigger stealth over the test split.
EvalReport evaluate_attack(const AgentParams& mixed, const AgentParams& clean,
                           const Dataset& test, const TargetTuple& target,
                           const TriggerSpec& trigger, std::uint64_t eval_seed,
                           int workers = 1);

// Byte-reproducible JSON: no timestamps, no wall time, fixed key order.
// Writing asserts the delta identity; reading re-checks it.
void write_eval_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_eval_report(const std::filesystem::path& path);

}  // namespace plab
