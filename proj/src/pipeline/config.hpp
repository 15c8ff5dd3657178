#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "synth/dataset.hpp"
#include "trigger/trigger.hpp"

namespace plab {

// User-fixable configuration problems. The CLI maps this (and every other
// validation failure) to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One experiment, fully determined by these knobs plus the code. `workers`
// only schedules work and is excluded from every hash.
struct RunConfig {
  std::uint64_t seed = 1;
  int workers = 1;

  int n_train = 500;
  int n_test = 100;

  int conv1_channels = 8;
  int conv2_channels = 16;
  int vision_dim = 64;
  int embed_dim = 16;
  int fusion_dim = 64;
  int lora_rank = 0;  // 0 = full model; >0 = adapters during mixed fine-tuning

  double train_lr = 1e-3;
  int train_batch = 16;
  int train_epochs = 30;

  double craft_epsilon = 8.0 / 255.0;
  int craft_steps = 5;
  int craft_restarts = 20;
  double craft_lr = 0.01;
  int craft_batch = 10;
  double craft_ratio = 0.20;

  int attack_type = 1;

  std::string trigger_kind = "hoverball";
  std::string trigger_position = "default";  // default|top_left|center|button|background
  double trigger_size = 0.0;                 // mask area fraction, 0 = kind default
  double trigger_opacity = 0.2;              // blended compositing weight

  void validate() const;  // throws ConfigError

  // Sorted `key = value` lines; parse(canonical()) round-trips exactly.
  std::string canonical() const;

  // Artifact identity at three dependency depths: datasets depend on the
  // data keys alone, the clean checkpoint adds model and training keys, and
  // everything downstream of crafting carries the full hash.
  std::uint64_t data_hash() const;
  std::uint64_t prefix_hash() const;
  std::uint64_t hash() const;

  // Trigger with kind defaults plus the size/opacity overrides. The position
  // keeps the kind's anchor; resolve_trigger applies the position key.
  TriggerSpec trigger_base() const;
};

// Maps the position name onto the screen that seeds the trigger: fixed names
// become fractional anchors, button/background read the screen's widgets.
TriggerSpec resolve_trigger(const RunConfig& cfg, const Sample& base_sample);

// Plain-text `key = value` lines, one per knob, `#` comments, dotted keys.
// Unknown and duplicate keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::filesystem::path& path);

// Applies one `key=value` pair on top of an existing config.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Defaults with their documentation, the --print-config payload.
std::string default_config_text();

}  // namespace plab
