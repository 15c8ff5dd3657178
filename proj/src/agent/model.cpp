#include "agent/model.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "core/hash.hpp"

namespace plab {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("model config: " + msg);
}

Tensor uniform_tensor(Shape shape, double scale, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

double fan_in_scale(std::int64_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

constexpr double kEmbedScale = 0.1;

struct LinearSpec {
  std::string name;
  std::int64_t in = 0;
  std::int64_t out = 0;
};

std::vector<LinearSpec> linear_specs(const ModelConfig& c) {
  std::vector<LinearSpec> specs;
  specs.push_back({"vision", c.patch_dim(), c.vision_dim});
  specs.push_back({"fusion", c.vision_dim + c.embed_dim, c.fusion_dim});
  specs.push_back({"verb", c.fusion_dim, c.n_verbs});
  specs.push_back({"arg", c.fusion_dim, c.n_args});
  for (int i = 0; i < kRationaleLen; ++i)
    specs.push_back({"rat" + std::to_string(i), c.fusion_dim, c.n_rationale});
  return specs;
}

}  // namespace

ModelConfig ModelConfig::for_schema(const ActionSchema& schema) {
  ModelConfig c;
  c.n_verbs = static_cast<int>(schema.verbs.size());
  c.n_args = static_cast<int>(schema.args.size());
  c.n_rationale = static_cast<int>(schema.rationale.size());
  c.n_prompt = static_cast<int>(schema.prompt.size());
  c.schema_hash = schema.hash();
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  require(image_size > 0, "image_size must be positive");
  require(pool > 1, "pool must exceed 1");
  require(image_size % (pool * pool) == 0, "image_size must divide by pool^2");
  require(conv1_channels > 0 && conv2_channels > 0, "conv channels must be positive");
  require(vision_dim > 0 && embed_dim > 0 && fusion_dim > 0, "feature dims must be positive");
  require(lora_rank >= 0, "lora_rank must be non-negative");
  require(n_verbs > 0 && n_args > 0 && n_rationale > 0 && n_prompt > 0,
          "vocabulary sizes must be positive");
}

int ModelConfig::patch_dim() const {
  int side = image_size / (pool * pool);
  return conv2_channels * side * side;
}

std::uint64_t ModelConfig::hash() const {
  std::uint64_t h = kFnvOffset;
  for (int v : {image_size, conv1_channels, conv2_channels, pool, vision_dim, embed_dim,
                fusion_dim, lora_rank, n_verbs, n_args, n_rationale, n_prompt})
    h = fnv1a_u64(h, static_cast<std::uint64_t>(v));
  h = fnv1a_u64(h, schema_hash);
  return h;
}

const ParamBlock& AgentParams::at(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw std::out_of_range("no parameter block named " + name);
}

std::vector<int> AgentParams::trainable_indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].trainable) out.push_back(static_cast<int>(i));
  return out;
}

std::int64_t AgentParams::trainable_count() const {
  std::int64_t n = 0;
  for (const auto& b : blocks)
    if (b.trainable) n += static_cast<std::int64_t>(b.value.data.size());
  return n;
}

std::uint64_t AgentParams::content_hash() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& b : blocks) {
    h = fnv1a(h, b.name);
    h = fnv1a(h, "\x1f", 1);
    h = fnv1a(h, b.value.data.data(), b.value.data.size() * sizeof(double));
  }
  return h;
}

AgentParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  AgentParams p;
  p.config = config;
  p.init_seed = seed;

  auto weight = [&](const std::string& name, Shape shape, std::int64_t fan_in) {
    Rng rng(Rng::derive(seed, name));
    p.blocks.push_back({name, uniform_tensor(std::move(shape), fan_in_scale(fan_in), rng)});
  };
  auto zeros = [&](const std::string& name, Shape shape) {
    p.blocks.push_back({name, Tensor::zeros(std::move(shape))});
  };

  const int c1 = config.conv1_channels;
  const int c2 = config.conv2_channels;
  weight("conv1.kernel", {c1, 3, 3, 3}, 3 * 9);
  zeros("conv1.bias", {c1});
  weight("conv2.kernel", {c2, c1, 3, 3}, static_cast<std::int64_t>(c1) * 9);
  zeros("conv2.bias", {c2});

  for (const auto& spec : linear_specs(config)) {
    if (spec.name == "fusion") {
      // The embedding table sits between the vision projection and the
      // fusion layer in the declared order.
      Rng rng(Rng::derive(seed, "embed.table"));
      p.blocks.push_back({"embed.table",
                          uniform_tensor({config.n_prompt, config.embed_dim}, kEmbedScale, rng)});
    }
    weight(spec.name + ".weight", {spec.out, spec.in}, spec.in);
    zeros(spec.name + ".bias", {spec.out});
  }

  if (config.lora_rank > 0) {
    for (auto& b : p.blocks) b.trainable = false;
    for (const auto& spec : linear_specs(config)) {
      Rng rng(Rng::derive(seed, spec.name + ".lora_a"));
      p.blocks.push_back({spec.name + ".lora_a",
                          uniform_tensor({config.lora_rank, spec.in}, fan_in_scale(spec.in), rng)});
      p.blocks.push_back({spec.name + ".lora_b", Tensor::zeros({spec.out, config.lora_rank})});
    }
  }
  return p;
}

AgentParams attach_adapters(const AgentParams& base, int rank, std::uint64_t seed) {
  if (rank <= 0) throw std::invalid_argument("adapter rank must be positive");
  if (base.config.lora_rank != 0)
    throw std::invalid_argument("model already carries adapters");
  AgentParams p = base;
  p.config.lora_rank = rank;
  for (auto& b : p.blocks) b.trainable = false;
  for (const auto& spec : linear_specs(p.config)) {
    Rng rng(Rng::derive(seed, spec.name + ".lora_a"));
    p.blocks.push_back(
        {spec.name + ".lora_a", uniform_tensor({rank, spec.in}, fan_in_scale(spec.in), rng)});
    p.blocks.push_back({spec.name + ".lora_b", Tensor::zeros({spec.out, rank})});
  }
  return p;
}

std::int64_t count_params(const ModelConfig& config) {
  const auto c1 = static_cast<std::int64_t>(config.conv1_channels);
  const auto c2 = static_cast<std::int64_t>(config.conv2_channels);
  std::int64_t n = c1 * 3 * 9 + c1 + c2 * c1 * 9 + c2;
  n += static_cast<std::int64_t>(config.n_prompt) * config.embed_dim;
  for (const auto& spec : linear_specs(config)) n += spec.out * spec.in + spec.out;
  if (config.lora_rank > 0)
    for (const auto& spec : linear_specs(config))
      n += static_cast<std::int64_t>(config.lora_rank) * (spec.in + spec.out);
  return n;
}

std::int64_t count_trainable_params(const ModelConfig& config) {
  if (config.lora_rank == 0) return count_params(config);
  std::int64_t n = 0;
  for (const auto& spec : linear_specs(config))
    n += static_cast<std::int64_t>(config.lora_rank) * (spec.in + spec.out);
  return n;
}

ModelGraph::ModelGraph(Graph& g, const AgentParams& params, ParamMode mode)
    : g_(&g), params_(&params) {
  params.config.validate();
  block_nodes_.reserve(params.blocks.size());
  for (const auto& b : params.blocks) {
    NodeId id;
    if (b.trainable && mode == ParamMode::kTrainInputs) {
      id = g.input(b.value.shape);
    } else {
      bool diff = b.trainable && mode == ParamMode::kConstDiff;
      id = g.constant(std::make_shared<Tensor>(b.value), diff);
    }
    block_nodes_.push_back(id);
    if (b.trainable) trainable_nodes_.push_back(id);
  }
}

int ModelGraph::block_index(const std::string& name) const {
  for (std::size_t i = 0; i < params_->blocks.size(); ++i)
    if (params_->blocks[i].name == name) return static_cast<int>(i);
  throw std::out_of_range("no parameter block named " + name);
}

NodeId ModelGraph::block_node(const std::string& name) const {
  return block_nodes_[static_cast<std::size_t>(block_index(name))];
}

NodeId ModelGraph::linear(const std::string& name, NodeId x) {
  NodeId out = g_->affine(block_node(name + ".weight"), x, block_node(name + ".bias"));
  if (params_->config.lora_rank > 0) {
    NodeId low = g_->matvec(block_node(name + ".lora_a"), x);
    out = g_->add(out, g_->matvec(block_node(name + ".lora_b"), low));
  }
  return out;
}

NodeId ModelGraph::image_input() {
  const int s = params_->config.image_size;
  return g_->input({3, s, s});
}

HeadNodes ModelGraph::heads(NodeId image, std::span<const int> prompt_tokens) {
  if (prompt_tokens.empty())
    throw GraphError(image, "prompt must contain at least one token");
  const ModelConfig& c = params_->config;

  NodeId x = g_->conv2d(image, block_node("conv1.kernel"), block_node("conv1.bias"), 1);
  x = g_->mean_pool(g_->relu(x), c.pool);
  x = g_->conv2d(x, block_node("conv2.kernel"), block_node("conv2.bias"), 1);
  x = g_->mean_pool(g_->relu(x), c.pool);
  NodeId vis = linear("vision", g_->flatten(x));

  NodeId emb = g_->row_mean(g_->embedding(block_node("embed.table"), prompt_tokens));

  std::array<NodeId, 2> joint{vis, emb};
  NodeId fused = g_->relu(linear("fusion", g_->concat(joint)));

  HeadNodes h;
  h.verb = linear("verb", fused);
  h.arg = linear("arg", fused);
  for (int i = 0; i < kRationaleLen; ++i)
    h.rationale.push_back(linear("rat" + std::to_string(i), fused));
  return h;
}

NodeId ModelGraph::loss(const HeadNodes& heads, const AgentOutput& target) {
  const ModelConfig& c = params_->config;
  auto check = [](int id, int size, const char* what) {
    if (id < 0 || id >= size)
      throw std::out_of_range(std::string(what) + " target id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(size));
  };
  check(target.verb, c.n_verbs, "verb");
  check(target.arg, c.n_args, "argument");
  for (int t : target.rationale) check(t, c.n_rationale, "rationale");

  NodeId total = g_->add(g_->softmax_cross_entropy(heads.verb, target.verb),
                         g_->softmax_cross_entropy(heads.arg, target.arg));
  for (int i = 0; i < kRationaleLen; ++i)
    total = g_->add(total, g_->softmax_cross_entropy(heads.rationale[i], target.rationale[i]));
  return total;
}

LogitsBundle forward(const AgentParams& params, const Tensor& image,
                     std::span<const int> prompt_tokens) {
  Graph g;
  ModelGraph m(g, params, ParamMode::kFrozen);
  NodeId img = m.image_input();
  HeadNodes h = m.heads(img, prompt_tokens);
  Tensor input = image;
  Evaluation ev = g.evaluate(std::span<const Tensor>(&input, 1));
  LogitsBundle out;
  out.verb = ev.at(h.verb);
  out.arg = ev.at(h.arg);
  for (NodeId id : h.rationale) out.rationale.push_back(ev.at(id));
  return out;
}

double sample_loss(const AgentParams& params, const Tensor& image,
                   std::span<const int> prompt_tokens, const AgentOutput& target) {
  Graph g;
  ModelGraph m(g, params, ParamMode::kFrozen);
  NodeId img = m.image_input();
  NodeId l = m.loss(m.heads(img, prompt_tokens), target);
  Tensor input = image;
  return g.evaluate(std::span<const Tensor>(&input, 1)).at(l).scalar_value();
}

int argmax_lowest(const Tensor& logits) {
  if (logits.data.empty()) throw std::invalid_argument("argmax over empty logits");
  int best = 0;
  for (std::size_t i = 1; i < logits.data.size(); ++i)
    if (logits.data[i] > logits.data[best]) best = static_cast<int>(i);
  return best;
}

AgentOutput decode(const LogitsBundle& logits) {
  AgentOutput out;
  out.verb = argmax_lowest(logits.verb);
  out.arg = argmax_lowest(logits.arg);
  if (logits.rationale.size() != static_cast<std::size_t>(kRationaleLen))
    throw std::invalid_argument("rationale head count mismatch");
  for (int i = 0; i < kRationaleLen; ++i) out.rationale[i] = argmax_lowest(logits.rationale[i]);
  return out;
}

}  // namespace plab
