#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "agent/schema.hpp"
#include "core/graph.hpp"
#include "core/rng.hpp"

namespace plab {

// Architecture hyperparameters. Vocabulary sizes are copied from the schema
// so a checkpoint can detect schema drift via the embedded hash.
struct ModelConfig {
  int image_size = 64;  // square RGB input
  int conv1_channels = 8;
  int conv2_channels = 16;
  int pool = 4;  // per-stage mean pooling factor
  int vision_dim = 64;
  int embed_dim = 16;
  int fusion_dim = 64;
  int lora_rank = 0;  // 0 = full model, >0 = adapters on linear layers
  int n_verbs = 0;
  int n_args = 0;
  int n_rationale = 0;
  int n_prompt = 0;
  std::uint64_t schema_hash = 0;

  static ModelConfig for_schema(const ActionSchema& schema);

  void validate() const;  // throws std::invalid_argument
  int patch_dim() const;  // flattened vision trunk output size
  std::uint64_t hash() const;

  bool operator==(const ModelConfig&) const = default;
};

struct ParamBlock {
  std::string name;
  Tensor value;
  bool trainable = true;
};

// Model state. Block order is fixed by init_params and is load-bearing:
// checkpoints, flattened gradients and the optimizer all follow it.
struct AgentParams {
  ModelConfig config;
  std::uint64_t init_seed = 0;
  std::vector<ParamBlock> blocks;

  const ParamBlock& at(const std::string& name) const;
  std::vector<int> trainable_indices() const;
  std::int64_t trainable_count() const;
  std::uint64_t content_hash() const;  // bytes of every block, order-sensitive
};

// Seeded initialization. Identical (config, seed) gives bit-identical blocks.
AgentParams init_params(const ModelConfig& config, std::uint64_t seed);

// Copies a full model and appends zero-impact adapters (B = 0), freezing
// every base block.
AgentParams attach_adapters(const AgentParams& base, int rank, std::uint64_t seed);

// Closed-form parameter counts; test oracle is enumeration over blocks.
std::int64_t count_params(const ModelConfig& config);
std::int64_t count_trainable_params(const ModelConfig& config);

struct HeadNodes {
  NodeId verb = -1;
  NodeId arg = -1;
  std::vector<NodeId> rationale;
};

struct LogitsBundle {
  Tensor verb;
  Tensor arg;
  std::vector<Tensor> rationale;
};

enum class ParamMode {
  kTrainInputs,  // trainable blocks become graph inputs, frozen blocks constants
  kConstDiff,    // all blocks constants; trainable ones differentiable
  kFrozen,       // all blocks plain constants
};

// Builds the agent forward pass into an existing graph. Parameter nodes are
// created once and shared by every sample added through heads().
class ModelGraph {
 public:
  ModelGraph(Graph& g, const AgentParams& params, ParamMode mode);

  Graph& graph() { return *g_; }
  const AgentParams& params() const { return *params_; }

  // Ids of the parameter nodes for trainable blocks, in block order. These
  // are the wrt leaves for gradients and, in kTrainInputs mode, the leading
  // evaluation inputs.
  const std::vector<NodeId>& trainable_nodes() const { return trainable_nodes_; }

  NodeId image_input();  // fresh [3, s, s] graph input
  HeadNodes heads(NodeId image, std::span<const int> prompt_tokens);
  NodeId loss(const HeadNodes& heads, const AgentOutput& target);

 private:
  int block_index(const std::string& name) const;
  NodeId block_node(const std::string& name) const;
  NodeId linear(const std::string& name, NodeId x);

  Graph* g_;
  const AgentParams* params_;
  std::vector<NodeId> block_nodes_;
  std::vector<NodeId> trainable_nodes_;
};

// Convenience single-sample entry points.
LogitsBundle forward(const AgentParams& params, const Tensor& image,
                     std::span<const int> prompt_tokens);
double sample_loss(const AgentParams& params, const Tensor& image,
                   std::span<const int> prompt_tokens, const AgentOutput& target);

// Per-head argmax; ties resolve to the lowest id.
AgentOutput decode(const LogitsBundle& logits);
int argmax_lowest(const Tensor& logits);

}  // namespace plab
