#include "agent/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace plab {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::ofstream out;
  explicit Writer(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  }
  void bytes(const void* p, std::size_t n) { out.write(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void i32(std::int32_t v) { bytes(&v, 4); }
  void i64(std::int64_t v) { bytes(&v, 8); }
};

struct Reader {
  std::ifstream in;
  std::string path;
  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw std::runtime_error("cannot open checkpoint: " + p);
  }
  void bytes(void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
      throw std::runtime_error("truncated checkpoint: " + path);
  }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  std::int32_t i32() { std::int32_t v; bytes(&v, 4); return v; }
  std::int64_t i64() { std::int64_t v; bytes(&v, 8); return v; }
};

}  // namespace

void save_checkpoint(const std::string& path, const AgentParams& params,
                     std::uint64_t run_config_hash) {
  params.config.validate();
  Writer w(path);
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.u64(run_config_hash);
  w.u64(params.init_seed);
  w.u64(params.config.hash());
  const ModelConfig& c = params.config;
  for (int v : {c.image_size, c.conv1_channels, c.conv2_channels, c.pool, c.vision_dim,
                c.embed_dim, c.fusion_dim, c.lora_rank, c.n_verbs, c.n_args, c.n_rationale,
                c.n_prompt})
    w.i32(v);
  w.u64(c.schema_hash);
  w.u32(static_cast<std::uint32_t>(params.blocks.size()));
  for (const auto& b : params.blocks) {
    w.u32(static_cast<std::uint32_t>(b.name.size()));
    w.bytes(b.name.data(), b.name.size());
    w.u32(b.trainable ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(b.value.shape.size()));
    for (std::int64_t d : b.value.shape) w.i64(d);
    w.bytes(b.value.data.data(), b.value.data.size() * sizeof(double));
  }
  w.out.flush();
  if (!w.out) throw std::runtime_error("checkpoint write failed: " + path);
}

AgentParams load_checkpoint(const std::string& path, std::uint64_t* run_config_hash) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  if (r.u32() != kVersion) throw std::runtime_error("unsupported checkpoint version: " + path);
  std::uint64_t rch = r.u64();
  if (run_config_hash) *run_config_hash = rch;

  AgentParams p;
  p.init_seed = r.u64();
  std::uint64_t stored_hash = r.u64();
  ModelConfig& c = p.config;
  for (int* f : {&c.image_size, &c.conv1_channels, &c.conv2_channels, &c.pool, &c.vision_dim,
                 &c.embed_dim, &c.fusion_dim, &c.lora_rank, &c.n_verbs, &c.n_args,
                 &c.n_rationale, &c.n_prompt})
    *f = r.i32();
  c.schema_hash = r.u64();
  c.validate();
  if (c.hash() != stored_hash)
    throw std::runtime_error("checkpoint config hash mismatch: " + path);

  std::uint32_t count = r.u32();
  if (count > 4096) throw std::runtime_error("implausible checkpoint block count: " + path);
  p.blocks.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamBlock b;
    std::uint32_t name_len = r.u32();
    if (name_len > 256) throw std::runtime_error("implausible block name length: " + path);
    b.name.resize(name_len);
    r.bytes(b.name.data(), name_len);
    b.trainable = r.u32() != 0;
    std::uint32_t rank = r.u32();
    if (rank > 8) throw std::runtime_error("implausible block rank: " + path);
    Shape shape(rank);
    std::int64_t total = 1;
    for (auto& d : shape) {
      d = r.i64();
      if (d <= 0 || d > (1 << 24)) throw std::runtime_error("implausible block dim: " + path);
      total *= d;
    }
    b.value = Tensor::zeros(shape);
    r.bytes(b.value.data.data(), static_cast<std::size_t>(total) * sizeof(double));
    p.blocks.push_back(std::move(b));
  }
  return p;
}

}  // namespace plab
