#include "train/train.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>

#include "core/rng.hpp"
#include "craft/adam.hpp"

namespace plab {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw TrainError("learning rate must be positive");
  if (batch < 1) throw TrainError("batch size must be at least 1");
  if (epochs < 0) throw TrainError("epoch count must be non-negative");
  if (weight_decay < 0.0) throw TrainError("weight decay must be non-negative");
}

TrainResult finetune(const AgentParams& start, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.samples.empty()) throw TrainError("empty training dataset");
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult res;
  res.params = start;
  AgentParams& params = res.params;
  const std::vector<int> train_blocks = params.trainable_indices();
  if (train_blocks.empty()) throw TrainError("model has no trainable blocks");

  const int n = static_cast<int>(data.samples.size());
  std::vector<std::shared_ptr<const Tensor>> images;
  images.reserve(data.samples.size());
  for (const Sample& s : data.samples) {
    if (s.pixels.data.empty()) throw TrainError("training sample has no pixels loaded");
    images.push_back(std::make_shared<Tensor>(s.pixels));
  }

  Adam opt(static_cast<std::size_t>(params.trainable_count()), cfg.lr, /*signed_update=*/false);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng shuffle_rng(Rng::derive(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i)
      std::swap(perm[static_cast<std::size_t>(i)],
                perm[static_cast<std::size_t>(shuffle_rng.below(i + 1))]);

    double weighted_loss = 0.0;
    for (int lo = 0; lo < n; lo += cfg.batch) {
      const int hi = std::min(lo + cfg.batch, n);
      const int b = hi - lo;

      Graph g;
      ModelGraph m(g, params, ParamMode::kTrainInputs);
      NodeId acc = -1;
      for (int i = lo; i < hi; ++i) {
        const Sample& s = data.samples[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        NodeId img = g.constant(images[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
        NodeId sample = m.loss(m.heads(img, s.prompt), s.action);
        acc = acc < 0 ? sample : g.add(acc, sample);
      }
      NodeId mean = g.scale_by(acc, 1.0 / static_cast<double>(b));
      std::vector<NodeId> grads = append_gradient(g, mean, m.trainable_nodes());

      std::vector<Tensor> inputs;
      inputs.reserve(train_blocks.size());
      for (int bi : train_blocks) inputs.push_back(params.blocks[static_cast<std::size_t>(bi)].value);
      Evaluation ev = g.evaluate(inputs);

      const double loss = ev.at(mean).scalar_value();
      std::vector<double> flat;
      flat.reserve(static_cast<std::size_t>(params.trainable_count()));
      for (NodeId id : grads) {
        const Tensor& t = ev.at(id);
        flat.insert(flat.end(), t.data.begin(), t.data.end());
      }
      bool finite = std::isfinite(loss);
      for (double v : flat)
        if (!std::isfinite(v)) finite = false;
      if (!finite)
        throw TrainError("non-finite loss or gradient at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(lo / cfg.batch));

      std::vector<double> theta;
      theta.reserve(flat.size());
      for (int bi : train_blocks) {
        const Tensor& t = params.blocks[static_cast<std::size_t>(bi)].value;
        theta.insert(theta.end(), t.data.begin(), t.data.end());
      }
      if (cfg.weight_decay > 0.0) {
        const double shrink = cfg.lr * cfg.weight_decay;
        for (double& v : theta) v -= shrink * v;
      }
      opt.step(flat, theta);
      std::size_t off = 0;
      for (int bi : train_blocks) {
        Tensor& t = params.blocks[static_cast<std::size_t>(bi)].value;
        std::copy(theta.begin() + static_cast<std::ptrdiff_t>(off),
                  theta.begin() + static_cast<std::ptrdiff_t>(off + t.data.size()),
                  t.data.begin());
        off += t.data.size();
      }
      weighted_loss += loss * static_cast<double>(b);
    }
    const double epoch_loss = weighted_loss / static_cast<double>(n);
    res.epoch_losses.push_back(epoch_loss);
    if (cfg.on_epoch) cfg.on_epoch(epoch, epoch_loss);
  }

  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace plab
