#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "agent/model.hpp"
#include "core/grad.hpp"
#include "synth/dataset.hpp"
#include "trigger/trigger.hpp"

namespace plab {

struct CraftConfig {
  double epsilon = 8.0 / 255.0;  // per-pixel perturbation bound
  int steps = 5;                 // optimizer steps per restart
  int restarts = 20;
  double lr = 0.01;
  int batch = 10;
  double ratio = 0.20;  // poisoned fraction of the training split
  int attack_type = 1;
  TriggerSpec trigger = TriggerSpec::hoverball_default();
  std::uint64_t seed = 0;
  int workers = 1;
  bool keep_restarts = false;  // retain every restart's perturbations
  std::function<void(int restart, int step, double loss)> on_step;

  void validate() const;
};

struct RestartTrace {
  int index = 0;
  std::uint64_t seed = 0;
  std::vector<double> step_losses;  // per-step mean alignment loss across batches
  double final_loss = 0.0;          // full-subset alignment loss after the last step
  bool aborted = false;
  std::string abort_reason;
};

struct CraftResult {
  std::vector<int> poison_indices;  // ascending indices into the train split
  TargetTuple target;
  std::vector<Tensor> deltas;  // selected restart's perturbations, one per poison index
  int selected_restart = -1;
  double selected_loss = 0.0;
  double target_grad_norm = 0.0;
  double max_abs_delta = 0.0;
  double mean_abs_delta = 0.0;
  double wall_seconds = 0.0;
  std::vector<RestartTrace> traces;
  std::vector<std::vector<Tensor>> restart_deltas;  // populated when keep_restarts
};

struct CraftError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Distinct sample indices forming the poison subset, floor(ratio * n) of them,
// in ascending order.
std::vector<int> choose_poison_indices(int n, double ratio, std::uint64_t seed);

// Gradient of the target loss at the frozen model, taken on the triggered
// base screen with the target prompt and action. Throws DegenerateGradient
// when its norm vanishes.
GradientVector target_gradient(const AgentParams& frozen, const Dataset& test,
                               const TargetTuple& target, const TriggerSpec& trigger);

// Full alignment loss 1 - cos over a poison set evaluated in one pass, used
// for restart selection and for re-scoring emitted artifacts.
double full_alignment_loss(const AgentParams& frozen, const Dataset& train,
                           const std::vector<int>& poison_indices,
                           const std::vector<Tensor>& deltas, const GradientVector& tgrad);

// One batch of the crafting objective: the alignment loss over the given
// poison set and its gradient with respect to every perturbation, optionally
// through per-sample augmentations. This is the exact computation a craft
// step performs; exposed so tests can pin it against finite differences.
struct AlignmentEval {
  double loss = 0.0;
  std::vector<Tensor> delta_grads;
};

struct AugSpec;  // craft/augment.hpp

AlignmentEval alignment_eval(const AgentParams& frozen, const Dataset& train,
                             const std::vector<int>& poison_indices,
                             const std::vector<Tensor>& deltas,
                             const std::vector<AugSpec>& augmentations,
                             const GradientVector& tgrad);

// Gradient-alignment poison crafting with random restarts. The model is
// never modified; restarts are independent and may run concurrently.
CraftResult craft_poison(const AgentParams& frozen, const Dataset& train, const Dataset& test,
                         const CraftConfig& cfg);

}  // namespace plab
