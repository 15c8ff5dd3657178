#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "core/tensor.hpp"

namespace plab {

// Baseline sequential JPEG, 4:2:0 chroma subsampling, standard quantization
// and Huffman tables with the usual linear quality scaling. Both directions
// live here so compression round-trips are fully reproducible and need no
// system codec.
std::vector<std::uint8_t> encode_jpeg(const Tensor& image, int quality);
Tensor decode_jpeg(const std::vector<std::uint8_t>& bytes);

// The two 8x8 base tables in row-major order, scaled per quality. Exposed
// for verification.
extern const std::uint16_t kLumaQuantBase[64];
extern const std::uint16_t kChromaQuantBase[64];
std::array<std::uint16_t, 64> scaled_quant_table(const std::uint16_t base[64], int quality);

}  // namespace plab
