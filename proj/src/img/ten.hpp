#pragma once

#include <filesystem>

#include "core/tensor.hpp"

namespace plab {

// Raw tensor container: exact float64 payload, used beside 16-bit image
// files wherever bit-for-bit reload matters.
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace plab
