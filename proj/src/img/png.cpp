#include "img/png.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace plab {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const auto crc = crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

std::vector<std::uint8_t> deflate_bytes(const std::vector<std::uint8_t>& raw) {
  uLongf cap = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> out(cap);
  if (compress2(out.data(), &cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw std::runtime_error("png: deflate failed");
  }
  out.resize(cap);
  return out;
}

std::vector<std::uint8_t> inflate_bytes(const std::uint8_t* data, std::size_t size,
                                        std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  uLongf got = static_cast<uLongf>(expected);
  if (uncompress(out.data(), &got, data, static_cast<uLong>(size)) != Z_OK || got != expected) {
    throw std::runtime_error("png: inflate failed or size mismatch");
  }
  return out;
}

constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Tensor& image) {
  const bool gray = image.shape.size() == 2;
  if (!gray && (image.shape.size() != 3 || image.shape[0] != 3)) {
    throw std::invalid_argument("encode_png: expects [3,H,W] or [H,W], got " +
                                shape_str(image.shape));
  }
  const std::int64_t h = gray ? image.shape[0] : image.shape[1];
  const std::int64_t w = gray ? image.shape[1] : image.shape[2];
  const int channels = gray ? 1 : 3;

  // Filter 0 on every row; 16 bits per sample, big-endian.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(h * (1 + w * channels * 2)));
  for (std::int64_t y = 0; y < h; ++y) {
    raw.push_back(0);
    for (std::int64_t x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t idx = gray ? static_cast<std::size_t>(y * w + x)
                                     : static_cast<std::size_t>((c * h + y) * w + x);
        double v = image.data[idx];
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        const auto s = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        raw.push_back(static_cast<std::uint8_t>(s >> 8));
        raw.push_back(static_cast<std::uint8_t>(s & 0xFF));
      }
    }
  }

  std::vector<std::uint8_t> out(kSig, kSig + 8);
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(w));
  put_u32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(16);                      // bit depth
  ihdr.push_back(gray ? 0 : 2);            // color type
  ihdr.push_back(0);                       // compression
  ihdr.push_back(0);                       // filter method
  ihdr.push_back(0);                       // no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", deflate_bytes(raw));
  put_chunk(out, "IEND", {});
  return out;
}

Tensor decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSig, 8) != 0) {
    throw std::runtime_error("png: bad signature");
  }
  std::size_t pos = 8;
  std::uint32_t w = 0, h = 0;
  int depth = 0, color = 0;
  std::vector<std::uint8_t> idat;
  bool seen_ihdr = false;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = get_u32(bytes.data() + pos);
    if (pos + 12 + len > bytes.size()) throw std::runtime_error("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const std::uint8_t* payload = bytes.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw std::runtime_error("png: bad IHDR");
      w = get_u32(payload);
      h = get_u32(payload + 4);
      depth = payload[8];
      color = payload[9];
      if (payload[12] != 0) throw std::runtime_error("png: interlaced images unsupported");
      if ((depth != 8 && depth != 16) || (color != 0 && color != 2 && color != 6)) {
        throw std::runtime_error("png: unsupported depth/color combination");
      }
      seen_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!seen_ihdr || w == 0 || h == 0) throw std::runtime_error("png: missing IHDR");

  const int channels = color == 0 ? 1 : (color == 2 ? 3 : 4);
  const int sample_bytes = depth / 8;
  const std::size_t bpp = static_cast<std::size_t>(channels) * static_cast<std::size_t>(sample_bytes);
  const std::size_t stride = bpp * w;
  std::vector<std::uint8_t> raw = inflate_bytes(idat.data(), idat.size(), (stride + 1) * h);

  // Undo per-row filters in place, producing plain scanlines.
  std::vector<std::uint8_t> px(stride * h);
  for (std::uint32_t y = 0; y < h; ++y) {
    const std::uint8_t filter = raw[(stride + 1) * y];
    const std::uint8_t* src = raw.data() + (stride + 1) * y + 1;
    std::uint8_t* dst = px.data() + stride * y;
    const std::uint8_t* up = y > 0 ? px.data() + stride * (y - 1) : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= bpp ? dst[i - bpp] : 0;
      const int b = up ? up[i] : 0;
      const int c = (up && i >= bpp) ? up[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw std::runtime_error("png: unknown filter type");
      }
      dst[i] = static_cast<std::uint8_t>(v);
    }
  }

  const double denom = depth == 16 ? 65535.0 : 255.0;
  const auto sample = [&](std::uint32_t y, std::uint32_t x, int c) {
    const std::uint8_t* p = px.data() + stride * y + bpp * x + static_cast<std::size_t>(c * sample_bytes);
    const std::uint32_t v = depth == 16 ? (static_cast<std::uint32_t>(p[0]) << 8 | p[1]) : p[0];
    return static_cast<double>(v) / denom;
  };

  if (color == 0) {
    Tensor t = Tensor::zeros({static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)});
    for (std::uint32_t y = 0; y < h; ++y)
      for (std::uint32_t x = 0; x < w; ++x) t.data[static_cast<std::size_t>(y) * w + x] = sample(y, x, 0);
    return t;
  }
  Tensor t = Tensor::zeros({3, static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)});
  for (int c = 0; c < 3; ++c)
    for (std::uint32_t y = 0; y < h; ++y)
      for (std::uint32_t x = 0; x < w; ++x)
        t.data[(static_cast<std::size_t>(c) * h + y) * w + x] = sample(y, x, c);
  return t;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  write_file(path, encode_png(image));
}

Tensor read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write to " + path.string());
}

}  // namespace plab
