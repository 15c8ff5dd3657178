#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "agent/model.hpp"
#include "synth/dataset.hpp"

namespace plab {

struct TrainConfig {
  double lr = 1e-3;
  int batch = 16;
  int epochs = 30;
  double weight_decay = 0.0;  // decoupled, applied as lr * decay * theta
  std::uint64_t seed = 0;
  std::function<void(int epoch, double loss)> on_epoch;

  void validate() const;
};

struct TrainResult {
  AgentParams params;
  std::vector<double> epoch_losses;  // dataset mean loss per epoch
  double wall_seconds = 0.0;
};

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fine-tunes a copy of `start` on the dataset with plain Adam over the
// trainable blocks. Batches follow a fresh Fisher-Yates shuffle each epoch;
// the trailing partial batch is kept. Zero epochs returns the start
// parameters bit-exactly. Any non-finite loss or gradient aborts with the
// epoch and batch in the error message.
TrainResult finetune(const AgentParams& start, const Dataset& data, const TrainConfig& cfg);

}  // namespace plab
