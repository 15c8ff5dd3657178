#pragma once

#include <cstdint>
#include <string_view>

namespace plab {

// FNV-1a, used for stable content hashes in manifests and checkpoints.
// Not cryptographic; collisions only need to be unlikely, not hard.
inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  return fnv1a(h, s.data(), s.size());
}

inline std::uint64_t fnv1a_u64(std::uint64_t h, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  return fnv1a(h, b, 8);
}

}  // namespace plab
