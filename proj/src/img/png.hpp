#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "core/tensor.hpp"

namespace plab {

// Images travel as [3,H,W] tensors with values in [0,1]; single-channel
// masks as [H,W]. Files are written at 16 bits per sample so crafted
// sub-8-bit perturbations survive the trip to disk.
std::vector<std::uint8_t> encode_png(const Tensor& image);
void write_png(const std::filesystem::path& path, const Tensor& image);

// Accepts 8- and 16-bit grayscale, RGB and RGBA (alpha dropped),
// non-interlaced. Grayscale comes back as [H,W], everything else [3,H,W].
Tensor decode_png(const std::vector<std::uint8_t>& bytes);
Tensor read_png(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace plab
