#include "img/ten.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace plab {

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes little-endian storage");

namespace {
constexpr char kMagic[4] = {'P', 'T', 'E', 'N'};
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(kMagic, 4);
  const auto rank = static_cast<std::uint32_t>(t.shape.size());
  f.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
  for (std::int64_t d : t.shape) f.write(reinterpret_cast<const char*>(&d), sizeof(d));
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!f) throw std::runtime_error("short write to " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error(path.string() + " is not a tensor file");
  }
  std::uint32_t rank = 0;
  f.read(reinterpret_cast<char*>(&rank), sizeof(rank));
  if (!f || rank > 8) throw std::runtime_error(path.string() + ": bad tensor rank");
  Shape shape(rank);
  for (auto& d : shape) f.read(reinterpret_cast<char*>(&d), sizeof(d));
  if (!f) throw std::runtime_error(path.string() + ": truncated shape");
  const std::int64_t count = shape_size(shape);
  if (count < 0) throw std::runtime_error(path.string() + ": negative dimension");
  std::vector<double> data(static_cast<std::size_t>(count));
  f.read(reinterpret_cast<char*>(data.data()),
         static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!f) throw std::runtime_error(path.string() + ": truncated payload");
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace plab
