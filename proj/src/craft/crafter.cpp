#include "craft/crafter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>

#include "core/pool.hpp"
#include "core/rng.hpp"
#include "craft/adam.hpp"
#include "craft/augment.hpp"

namespace plab {
namespace {

struct PoisonSlot {
  const Sample* sample = nullptr;
  std::shared_ptr<const Tensor> base;
};

// Appends one batch of forward passes plus their parameter gradients and
// returns the flattened, unscaled sum of the per-sample gradients. The
// per-sample perturbations enter as graph inputs, recorded in
// `delta_inputs`.
NodeId append_batch_grad_sum(Graph& g, ModelGraph& m, std::span<const PoisonSlot> slots,
                             std::span<const std::shared_ptr<const IndexMap>> maps,
                             std::vector<NodeId>& delta_inputs) {
  const auto& theta = m.trainable_nodes();
  std::vector<NodeId> acc(theta.size(), NodeId{-1});
  for (std::size_t s = 0; s < slots.size(); ++s) {
    NodeId delta = g.input(slots[s].base->shape);
    delta_inputs.push_back(delta);
    NodeId x = g.add(g.constant(slots[s].base), delta);
    if (!maps.empty()) x = g.gather(x, maps[s], slots[s].base->shape);
    HeadNodes h = m.heads(x, slots[s].sample->prompt);
    NodeId loss = m.loss(h, slots[s].sample->action);
    std::vector<NodeId> grads = append_gradient(g, loss, theta);
    for (std::size_t k = 0; k < acc.size(); ++k)
      acc[k] = acc[k] < 0 ? grads[k] : g.add(acc[k], grads[k]);
  }
  std::vector<NodeId> flat;
  flat.reserve(acc.size());
  for (NodeId a : acc) flat.push_back(g.flatten(a));
  return g.concat(flat);
}

struct BatchEval {
  double loss = 0.0;
  std::vector<std::vector<double>> delta_grads;
};

BatchEval alignment_batch(const AgentParams& frozen, std::span<const PoisonSlot> slots,
                          std::span<const std::shared_ptr<const IndexMap>> maps,
                          std::span<const Tensor* const> deltas,
                          const std::shared_ptr<const Tensor>& tgrad) {
  Graph g;
  ModelGraph m(g, frozen, ParamMode::kConstDiff);
  std::vector<NodeId> delta_inputs;
  NodeId sum = append_batch_grad_sum(g, m, slots, maps, delta_inputs);
  NodeId gbar = g.scale_by(sum, 1.0 / static_cast<double>(slots.size()));
  NodeId align = append_alignment_loss(g, gbar, g.constant(tgrad));
  std::vector<NodeId> dgrads = append_gradient(g, align, delta_inputs);

  std::vector<Tensor> inputs;
  inputs.reserve(slots.size());
  for (const Tensor* d : deltas) inputs.push_back(*d);
  Evaluation ev = g.evaluate(inputs);

  BatchEval out;
  out.loss = ev.at(align).scalar_value();
  out.delta_grads.reserve(dgrads.size());
  for (NodeId id : dgrads) out.delta_grads.push_back(ev.take(id).data);
  return out;
}

double full_loss_over_slots(const AgentParams& frozen, std::span<const PoisonSlot> slots,
                            std::span<const Tensor> deltas, const GradientVector& tgrad) {
  constexpr std::size_t kChunk = 10;
  std::vector<double> acc(tgrad.size(), 0.0);
  for (std::size_t lo = 0; lo < slots.size(); lo += kChunk) {
    std::size_t hi = std::min(lo + kChunk, slots.size());
    Graph g;
    ModelGraph m(g, frozen, ParamMode::kConstDiff);
    std::vector<NodeId> delta_inputs;
    NodeId sum = append_batch_grad_sum(g, m, slots.subspan(lo, hi - lo), {}, delta_inputs);
    std::vector<Tensor> inputs(deltas.begin() + static_cast<std::ptrdiff_t>(lo),
                               deltas.begin() + static_cast<std::ptrdiff_t>(hi));
    Evaluation ev = g.evaluate(inputs);
    const Tensor& part = ev.at(sum);
    if (part.data.size() != acc.size())
      throw CraftError("parameter gradient width changed between batches");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += part.data[i];
  }
  for (double& v : acc) v /= static_cast<double>(slots.size());
  GradientVector gbar{std::move(acc)};
  return 1.0 - cosine_alignment(gbar, tgrad);
}

struct RestartOut {
  std::vector<Tensor> deltas;
  RestartTrace trace;
};

RestartOut run_restart(const AgentParams& frozen, const std::vector<PoisonSlot>& slots,
                       const std::shared_ptr<const Tensor>& tgrad_tensor,
                       const GradientVector& tgrad, const CraftConfig& cfg, int r) {
  const int p = static_cast<int>(slots.size());
  const int size = static_cast<int>(slots[0].base->shape[1]);
  RestartOut out;
  out.trace.index = r;
  out.trace.seed = Rng::derive(cfg.seed, "restart", static_cast<std::uint64_t>(r));
  const std::uint64_t seed_r = out.trace.seed;
  auto abort = [&](const std::string& why) {
    out.trace.aborted = true;
    out.trace.abort_reason = why;
  };

  Rng init_rng(Rng::derive(seed_r, "init"));
  out.deltas.reserve(static_cast<std::size_t>(p));
  std::vector<Adam> adams;
  adams.reserve(static_cast<std::size_t>(p));
  for (int s = 0; s < p; ++s) {
    Tensor d = Tensor::zeros(slots[static_cast<std::size_t>(s)].base->shape);
    for (double& v : d.data) v = init_rng.uniform(-cfg.epsilon, cfg.epsilon);
    project_delta(*slots[static_cast<std::size_t>(s)].base, d, cfg.epsilon);
    out.deltas.push_back(std::move(d));
    adams.emplace_back(out.deltas.back().data.size(), cfg.lr, /*signed_update=*/true);
  }

  for (int step = 0; step < cfg.steps && !out.trace.aborted; ++step) {
    std::vector<int> perm(static_cast<std::size_t>(p));
    std::iota(perm.begin(), perm.end(), 0);
    Rng shuffle_rng(Rng::derive(seed_r, "shuffle", static_cast<std::uint64_t>(step)));
    for (int i = p - 1; i > 0; --i)
      std::swap(perm[static_cast<std::size_t>(i)],
                perm[static_cast<std::size_t>(shuffle_rng.below(i + 1))]);

    // Augmentations resample every step, drawn in slot order.
    Rng aug_rng(Rng::derive(seed_r, "aug", static_cast<std::uint64_t>(step)));
    std::vector<std::shared_ptr<const IndexMap>> maps(static_cast<std::size_t>(p));
    for (int s = 0; s < p; ++s) maps[static_cast<std::size_t>(s)] = make_aug_map(draw_augmentation(aug_rng, size), size);

    double weighted_loss = 0.0;
    for (int lo = 0; lo < p && !out.trace.aborted; lo += cfg.batch) {
      int hi = std::min(lo + cfg.batch, p);
      std::vector<PoisonSlot> bslots;
      std::vector<std::shared_ptr<const IndexMap>> bmaps;
      std::vector<const Tensor*> bdeltas;
      for (int i = lo; i < hi; ++i) {
        int slot = perm[static_cast<std::size_t>(i)];
        bslots.push_back(slots[static_cast<std::size_t>(slot)]);
        bmaps.push_back(maps[static_cast<std::size_t>(slot)]);
        bdeltas.push_back(&out.deltas[static_cast<std::size_t>(slot)]);
      }
      BatchEval be;
      try {
        be = alignment_batch(frozen, bslots, bmaps, bdeltas, tgrad_tensor);
      } catch (const DegenerateGradient& e) {
        abort(std::string("degenerate poison gradient at step ") + std::to_string(step) + ": " + e.what());
        break;
      }
      bool finite = std::isfinite(be.loss);
      for (const auto& gvec : be.delta_grads)
        for (double v : gvec)
          if (!std::isfinite(v)) finite = false;
      if (!finite) {
        abort("non-finite loss or gradient at step " + std::to_string(step));
        break;
      }
      weighted_loss += be.loss * static_cast<double>(hi - lo);
      for (int i = lo; i < hi; ++i) {
        int slot = perm[static_cast<std::size_t>(i)];
        Tensor& d = out.deltas[static_cast<std::size_t>(slot)];
        adams[static_cast<std::size_t>(slot)].step(be.delta_grads[static_cast<std::size_t>(i - lo)], d.data);
        project_delta(*slots[static_cast<std::size_t>(slot)].base, d, cfg.epsilon);
      }
    }
    if (out.trace.aborted) break;
    double mean = weighted_loss / static_cast<double>(p);
    out.trace.step_losses.push_back(mean);
    if (cfg.on_step) cfg.on_step(r, step, mean);
  }

  if (!out.trace.aborted) {
    try {
      out.trace.final_loss = full_loss_over_slots(frozen, slots, out.deltas, tgrad);
    } catch (const DegenerateGradient& e) {
      abort(std::string("degenerate gradient in final scoring: ") + e.what());
    }
    if (!out.trace.aborted && !std::isfinite(out.trace.final_loss))
      abort("non-finite final loss");
  }
  return out;
}

std::vector<PoisonSlot> build_slots(const Dataset& train, const std::vector<int>& indices) {
  std::vector<PoisonSlot> slots;
  slots.reserve(indices.size());
  for (int idx : indices) {
    const Sample& s = train.samples[static_cast<std::size_t>(idx)];
    if (s.pixels.data.empty()) throw CraftError("train sample has no pixels loaded");
    slots.push_back({&s, std::make_shared<Tensor>(s.pixels)});
  }
  return slots;
}

}  // namespace

void CraftConfig::validate() const {
  if (!(epsilon > 0.0) || epsilon > 1.0) throw CraftError("epsilon must lie in (0, 1]");
  if (steps < 1) throw CraftError("steps must be at least 1");
  if (restarts < 1) throw CraftError("restarts must be at least 1");
  if (!(lr > 0.0)) throw CraftError("learning rate must be positive");
  if (batch < 1) throw CraftError("batch size must be at least 1");
  if (!(ratio > 0.0) || ratio > 1.0) throw CraftError("poison ratio must lie in (0, 1]");
  if (attack_type < 1 || attack_type > 4) throw CraftError("attack type must be 1..4");
  if (workers < 1) throw CraftError("workers must be at least 1");
}

std::vector<int> choose_poison_indices(int n, double ratio, std::uint64_t seed) {
  if (n < 1) throw CraftError("empty training split");
  int p = static_cast<int>(std::floor(ratio * n));
  if (p < 1) throw CraftError("poison ratio " + std::to_string(ratio) + " leaves no samples at n=" +
                              std::to_string(n));
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (int i = 0; i < p; ++i) {
    int j = i + static_cast<int>(rng.below(n - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(p));
  std::sort(idx.begin(), idx.end());
  return idx;
}

GradientVector target_gradient(const AgentParams& frozen, const Dataset& test,
                               const TargetTuple& target, const TriggerSpec& trigger) {
  const Sample& base = test.samples.at(static_cast<std::size_t>(target.base_index));
  Tensor triggered = apply_trigger(base.pixels, trigger);
  Graph g;
  ModelGraph m(g, frozen, ParamMode::kConstDiff);
  NodeId img = g.constant(std::make_shared<Tensor>(std::move(triggered)));
  NodeId loss = m.loss(m.heads(img, target.prompt), target.action);
  GradientVector grad = compute_gradient(g, loss, m.trainable_nodes(), {});
  if (grad.norm() < kDegenerateNorm)
    throw DegenerateGradient("target gradient norm below 1e-12");
  return grad;
}

double full_alignment_loss(const AgentParams& frozen, const Dataset& train,
                           const std::vector<int>& poison_indices,
                           const std::vector<Tensor>& deltas, const GradientVector& tgrad) {
  if (poison_indices.size() != deltas.size())
    throw CraftError("poison index and delta counts differ");
  std::vector<PoisonSlot> slots = build_slots(train, poison_indices);
  return full_loss_over_slots(frozen, slots, deltas, tgrad);
}

AlignmentEval alignment_eval(const AgentParams& frozen, const Dataset& train,
                             const std::vector<int>& poison_indices,
                             const std::vector<Tensor>& deltas,
                             const std::vector<AugSpec>& augmentations,
                             const GradientVector& tgrad) {
  if (poison_indices.size() != deltas.size())
    throw CraftError("poison index and delta counts differ");
  if (!augmentations.empty() && augmentations.size() != deltas.size())
    throw CraftError("augmentation and delta counts differ");
  std::vector<PoisonSlot> slots = build_slots(train, poison_indices);
  const int size = static_cast<int>(slots[0].base->shape[1]);
  std::vector<std::shared_ptr<const IndexMap>> maps;
  for (const AugSpec& a : augmentations) maps.push_back(make_aug_map(a, size));
  std::vector<const Tensor*> dptrs;
  for (const Tensor& d : deltas) dptrs.push_back(&d);
  auto tgrad_tensor = std::make_shared<Tensor>(Tensor{
      {static_cast<std::int64_t>(tgrad.size())}, tgrad.values});
  BatchEval be = alignment_batch(frozen, slots, maps, dptrs, tgrad_tensor);
  AlignmentEval out;
  out.loss = be.loss;
  for (std::size_t s = 0; s < deltas.size(); ++s)
    out.delta_grads.push_back(Tensor{deltas[s].shape, std::move(be.delta_grads[s])});
  return out;
}

CraftResult craft_poison(const AgentParams& frozen, const Dataset& train, const Dataset& test,
                         const CraftConfig& cfg) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();

  CraftResult res;
  res.poison_indices = choose_poison_indices(static_cast<int>(train.samples.size()), cfg.ratio,
                                             Rng::derive(cfg.seed, "subset"));
  res.target = make_target_tuple(cfg.attack_type, test, Rng::derive(cfg.seed, "target"));

  GradientVector tgrad = target_gradient(frozen, test, res.target, cfg.trigger);
  res.target_grad_norm = tgrad.norm();
  auto tgrad_tensor = std::make_shared<Tensor>(Tensor{
      {static_cast<std::int64_t>(tgrad.size())}, tgrad.values});

  const std::uint64_t purity = frozen.content_hash();
  std::vector<PoisonSlot> slots = build_slots(train, res.poison_indices);

  std::vector<RestartOut> outs(static_cast<std::size_t>(cfg.restarts));
  parallel_for(cfg.workers, cfg.restarts, [&](int r) {
    outs[static_cast<std::size_t>(r)] = run_restart(frozen, slots, tgrad_tensor, tgrad, cfg, r);
  });

  int best = -1;
  for (int r = 0; r < cfg.restarts; ++r) {
    res.traces.push_back(outs[static_cast<std::size_t>(r)].trace);
    const RestartTrace& t = res.traces.back();
    if (!t.aborted && (best < 0 || t.final_loss < res.traces[static_cast<std::size_t>(best)].final_loss))
      best = r;
  }
  if (best < 0) throw CraftError("all restarts aborted; no usable perturbation");
  res.selected_restart = best;
  res.selected_loss = res.traces[static_cast<std::size_t>(best)].final_loss;
  if (cfg.keep_restarts)
    for (const auto& o : outs) res.restart_deltas.push_back(o.deltas);
  res.deltas = std::move(outs[static_cast<std::size_t>(best)].deltas);

  double sum_abs = 0.0;
  std::size_t count = 0;
  for (const Tensor& d : res.deltas) {
    for (double v : d.data) {
      res.max_abs_delta = std::max(res.max_abs_delta, std::abs(v));
      sum_abs += std::abs(v);
    }
    count += d.data.size();
  }
  res.mean_abs_delta = count ? sum_abs / static_cast<double>(count) : 0.0;

  if (frozen.content_hash() != purity)
    throw CraftError("frozen model parameters changed during crafting");
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace plab
