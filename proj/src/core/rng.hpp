#pragma once

#include <cstdint>
#include <string_view>

namespace plab {

// Deterministic PRNG used everywhere in the project. std::mt19937 engines are
// portable but the standard distributions are not, so all random draws go
// through this splitmix64 generator with explicitly specified mappings.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is negligible for desk-scale n and
  // the mapping is fixed, which is what reproducibility needs.
  std::int64_t below(std::int64_t n) {
    return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Stable seed derivation: mixes a tag string and an index into a parent
  // seed. Stage seeds, per-restart seeds and per-sample seeds are all derived
  // this way from the single global seed.
  static std::uint64_t derive(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : tag) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
      h *= 0x100000001B3ULL;
    }
    Rng mixer(seed ^ h ^ (index * 0x9E3779B97F4A7C15ULL));
    mixer.next_u64();
    return mixer.next_u64();
  }

  Rng fork(std::string_view tag, std::uint64_t index = 0) { return Rng(derive(state_, tag, index)); }

private:
  std::uint64_t state_;
};

}  // namespace plab
