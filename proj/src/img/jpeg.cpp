#include "img/jpeg.hpp"

#include "img/resize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

namespace plab {

const std::uint16_t kLumaQuantBase[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

const std::uint16_t kChromaQuantBase[64] = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

std::array<std::uint16_t, 64> scaled_quant_table(const std::uint16_t base[64], int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg: quality out of range");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<std::uint16_t, 64> out{};
  for (int i = 0; i < 64; ++i) {
    int v = (base[i] * scale + 50) / 100;
    out[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(std::clamp(v, 1, 255));
  }
  return out;
}

namespace {

constexpr std::uint8_t kZigzag[64] = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

// Standard Huffman table specifications: counts per code length 1..16, then
// the symbol values in code order.
constexpr std::uint8_t kDcLumaBits[16] = {0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
constexpr std::uint8_t kDcLumaVals[] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
constexpr std::uint8_t kDcChromaBits[16] = {0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
constexpr std::uint8_t kDcChromaVals[] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
constexpr std::uint8_t kAcLumaBits[16] = {0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d};
constexpr std::uint8_t kAcLumaVals[] = {
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61,
    0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52,
    0xd1, 0xf0, 0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25,
    0x26, 0x27, 0x28, 0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45,
    0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64,
    0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83,
    0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99,
    0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6,
    0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3,
    0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8,
    0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa};
constexpr std::uint8_t kAcChromaBits[16] = {0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77};
constexpr std::uint8_t kAcChromaVals[] = {
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61,
    0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33,
    0x52, 0xf0, 0x15, 0x62, 0x72, 0xd1, 0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18,
    0x19, 0x1a, 0x26, 0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44,
    0x45, 0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63,
    0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a,
    0x82, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97,
    0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4,
    0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca,
    0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7,
    0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa};

struct HuffEncodeTable {
  std::array<std::uint16_t, 256> code{};
  std::array<std::uint8_t, 256> length{};
};

HuffEncodeTable build_encode_table(const std::uint8_t bits[16], const std::uint8_t* vals) {
  HuffEncodeTable t;
  std::uint16_t code = 0;
  std::size_t k = 0;
  for (int len = 1; len <= 16; ++len) {
    for (int i = 0; i < bits[len - 1]; ++i) {
      t.code[vals[k]] = code;
      t.length[vals[k]] = static_cast<std::uint8_t>(len);
      ++k;
      ++code;
    }
    code <<= 1;
  }
  return t;
}

struct HuffDecodeTable {
  // Canonical decode: per length, smallest/largest code and the offset of
  // the first symbol of that length.
  std::array<std::int32_t, 17> min_code{}, max_code{}, val_off{};
  std::vector<std::uint8_t> vals;
  bool present = false;
};

HuffDecodeTable build_decode_table(const std::uint8_t bits[16], const std::uint8_t* vals,
                                   std::size_t nvals) {
  HuffDecodeTable t;
  t.vals.assign(vals, vals + nvals);
  std::int32_t code = 0;
  std::size_t k = 0;
  for (int len = 1; len <= 16; ++len) {
    t.val_off[static_cast<std::size_t>(len)] = static_cast<std::int32_t>(k);
    t.min_code[static_cast<std::size_t>(len)] = code;
    code += bits[len - 1];
    k += bits[len - 1];
    t.max_code[static_cast<std::size_t>(len)] = code - 1;
    if (bits[len - 1] == 0) t.max_code[static_cast<std::size_t>(len)] = -1;
    code <<= 1;
  }
  t.present = true;
  return t;
}

class BitWriter {
public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}
  void put(std::uint32_t bits, int count) {
    for (int i = count - 1; i >= 0; --i) {
      cur_ = static_cast<std::uint8_t>((cur_ << 1) | ((bits >> i) & 1));
      if (++filled_ == 8) {
        out_.push_back(cur_);
        if (cur_ == 0xFF) out_.push_back(0x00);
        cur_ = 0;
        filled_ = 0;
      }
    }
  }
  void flush() {
    while (filled_ != 0) put(1, 1);  // pad with ones per the format
  }

private:
  std::vector<std::uint8_t>& out_;
  std::uint8_t cur_ = 0;
  int filled_ = 0;
};

class BitReader {
public:
  BitReader(const std::uint8_t* data, std::size_t size, std::size_t pos)
      : data_(data), size_(size), pos_(pos) {}
  int bit() {
    if (avail_ == 0) {
      if (pos_ >= size_) throw std::runtime_error("jpeg: entropy data exhausted");
      cur_ = data_[pos_++];
      if (cur_ == 0xFF) {
        if (pos_ >= size_) throw std::runtime_error("jpeg: dangling 0xFF");
        const std::uint8_t next = data_[pos_++];
        if (next != 0x00) throw std::runtime_error("jpeg: unexpected marker inside scan");
      }
      avail_ = 8;
    }
    --avail_;
    return (cur_ >> avail_) & 1;
  }
  std::int32_t bits(int count) {
    std::int32_t v = 0;
    for (int i = 0; i < count; ++i) v = (v << 1) | bit();
    return v;
  }
  std::size_t pos() const { return pos_; }

private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_;
  std::uint8_t cur_ = 0;
  int avail_ = 0;
};

int bit_size(int v) {
  int a = v < 0 ? -v : v;
  int n = 0;
  while (a != 0) {
    a >>= 1;
    ++n;
  }
  return n;
}

void fdct8(double* v, std::ptrdiff_t stride) {
  double out[8];
  for (int u = 0; u < 8; ++u) {
    const double cu = u == 0 ? std::numbers::sqrt2 / 2.0 : 1.0;
    double acc = 0.0;
    for (int x = 0; x < 8; ++x) {
      acc += v[x * stride] * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    out[u] = 0.5 * cu * acc;
  }
  for (int u = 0; u < 8; ++u) v[u * stride] = out[u];
}

void idct8(double* v, std::ptrdiff_t stride) {
  double out[8];
  for (int x = 0; x < 8; ++x) {
    double acc = 0.0;
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::numbers::sqrt2 / 2.0 : 1.0;
      acc += cu * v[u * stride] * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    out[x] = 0.5 * acc;
  }
  for (int x = 0; x < 8; ++x) v[x * stride] = out[x];
}

void fdct_block(double block[64]) {
  for (int y = 0; y < 8; ++y) fdct8(block + y * 8, 1);
  for (int x = 0; x < 8; ++x) fdct8(block + x, 8);
}

void idct_block(double block[64]) {
  for (int x = 0; x < 8; ++x) idct8(block + x, 8);
  for (int y = 0; y < 8; ++y) idct8(block + y * 8, 1);
}

struct Plane {
  std::int64_t w = 0, h = 0;
  std::vector<double> px;  // 0..255 scale
  double at(std::int64_t y, std::int64_t x) const {
    y = std::clamp<std::int64_t>(y, 0, h - 1);
    x = std::clamp<std::int64_t>(x, 0, w - 1);
    return px[static_cast<std::size_t>(y * w + x)];
  }
};

void put_marker(std::vector<std::uint8_t>& out, std::uint8_t m) {
  out.push_back(0xFF);
  out.push_back(m);
}

void put_segment(std::vector<std::uint8_t>& out, std::uint8_t m,
                 const std::vector<std::uint8_t>& payload) {
  put_marker(out, m);
  const auto len = static_cast<std::uint16_t>(payload.size() + 2);
  out.push_back(static_cast<std::uint8_t>(len >> 8));
  out.push_back(static_cast<std::uint8_t>(len & 0xFF));
  out.insert(out.end(), payload.begin(), payload.end());
}

void encode_block(BitWriter& bw, const double block[64], const std::array<std::uint16_t, 64>& q,
                  const HuffEncodeTable& dc, const HuffEncodeTable& ac, int& prev_dc) {
  int zz[64];
  for (int i = 0; i < 64; ++i) {
    const double coef = block[kZigzag[i]];
    zz[i] = static_cast<int>(std::lround(coef / q[static_cast<std::size_t>(i)]));
  }
  const int diff = zz[0] - prev_dc;
  prev_dc = zz[0];
  const int dsz = bit_size(diff);
  bw.put(dc.code[static_cast<std::size_t>(dsz)], dc.length[static_cast<std::size_t>(dsz)]);
  if (dsz > 0) {
    const int extra = diff >= 0 ? diff : diff + (1 << dsz) - 1;
    bw.put(static_cast<std::uint32_t>(extra), dsz);
  }
  int run = 0;
  for (int i = 1; i < 64; ++i) {
    if (zz[i] == 0) {
      ++run;
      continue;
    }
    while (run >= 16) {
      bw.put(ac.code[0xF0], ac.length[0xF0]);
      run -= 16;
    }
    const int asz = bit_size(zz[i]);
    const int sym = (run << 4) | asz;
    bw.put(ac.code[static_cast<std::size_t>(sym)], ac.length[static_cast<std::size_t>(sym)]);
    const int extra = zz[i] >= 0 ? zz[i] : zz[i] + (1 << asz) - 1;
    bw.put(static_cast<std::uint32_t>(extra), asz);
    run = 0;
  }
  if (run > 0) bw.put(ac.code[0x00], ac.length[0x00]);
}

void load_block(const Plane& p, std::int64_t by, std::int64_t bx, double block[64]) {
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) block[y * 8 + x] = p.at(by + y, bx + x) - 128.0;
}

}  // namespace

std::vector<std::uint8_t> encode_jpeg(const Tensor& image, int quality) {
  if (image.shape.size() != 3 || image.shape[0] != 3) {
    throw std::invalid_argument("encode_jpeg: expects [3,H,W], got " + shape_str(image.shape));
  }
  const std::int64_t h = image.shape[1], w = image.shape[2];
  if (h == 0 || w == 0) throw std::invalid_argument("encode_jpeg: empty image");

  // 8-bit quantization, then full-range YCbCr.
  Plane Y{w, h}, Cb, Cr;
  Y.px.resize(static_cast<std::size_t>(w * h));
  std::vector<double> cbf(static_cast<std::size_t>(w * h)), crf(static_cast<std::size_t>(w * h));
  for (std::int64_t i = 0; i < w * h; ++i) {
    const auto q8 = [&](int c) {
      double v = image.data[static_cast<std::size_t>(c * h * w + i)];
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      return static_cast<double>(std::lround(v * 255.0));
    };
    const double r = q8(0), g = q8(1), b = q8(2);
    Y.px[static_cast<std::size_t>(i)] = 0.299 * r + 0.587 * g + 0.114 * b;
    cbf[static_cast<std::size_t>(i)] = -0.168735892 * r - 0.331264108 * g + 0.5 * b + 128.0;
    crf[static_cast<std::size_t>(i)] = 0.5 * r - 0.418687589 * g - 0.081312411 * b + 128.0;
  }
  // 2x2 box subsampling.
  Cb.w = (w + 1) / 2;
  Cb.h = (h + 1) / 2;
  Cr.w = Cb.w;
  Cr.h = Cb.h;
  Cb.px.resize(static_cast<std::size_t>(Cb.w * Cb.h));
  Cr.px.resize(static_cast<std::size_t>(Cb.w * Cb.h));
  for (std::int64_t cy = 0; cy < Cb.h; ++cy) {
    for (std::int64_t cx = 0; cx < Cb.w; ++cx) {
      double sb = 0.0, sr = 0.0;
      int cnt = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const std::int64_t y = cy * 2 + dy, x = cx * 2 + dx;
          if (y >= h || x >= w) continue;
          sb += cbf[static_cast<std::size_t>(y * w + x)];
          sr += crf[static_cast<std::size_t>(y * w + x)];
          ++cnt;
        }
      }
      Cb.px[static_cast<std::size_t>(cy * Cb.w + cx)] = sb / cnt;
      Cr.px[static_cast<std::size_t>(cy * Cb.w + cx)] = sr / cnt;
    }
  }

  const auto ql = scaled_quant_table(kLumaQuantBase, quality);
  const auto qc = scaled_quant_table(kChromaQuantBase, quality);
  const HuffEncodeTable dcl = build_encode_table(kDcLumaBits, kDcLumaVals);
  const HuffEncodeTable dcc = build_encode_table(kDcChromaBits, kDcChromaVals);
  const HuffEncodeTable acl = build_encode_table(kAcLumaBits, kAcLumaVals);
  const HuffEncodeTable acc = build_encode_table(kAcChromaBits, kAcChromaVals);

  std::vector<std::uint8_t> out;
  put_marker(out, 0xD8);  // SOI
  {
    std::vector<std::uint8_t> app0{'J', 'F', 'I', 'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0};
    put_segment(out, 0xE0, app0);
  }
  for (int t = 0; t < 2; ++t) {
    std::vector<std::uint8_t> dqt;
    dqt.push_back(static_cast<std::uint8_t>(t));  // 8-bit precision, table id
    const auto& q = t == 0 ? ql : qc;
    for (int i = 0; i < 64; ++i) dqt.push_back(static_cast<std::uint8_t>(q[static_cast<std::size_t>(i)]));
    put_segment(out, 0xDB, dqt);
  }
  {
    std::vector<std::uint8_t> sof;
    sof.push_back(8);  // precision
    sof.push_back(static_cast<std::uint8_t>(h >> 8));
    sof.push_back(static_cast<std::uint8_t>(h & 0xFF));
    sof.push_back(static_cast<std::uint8_t>(w >> 8));
    sof.push_back(static_cast<std::uint8_t>(w & 0xFF));
    sof.push_back(3);
    sof.insert(sof.end(), {1, 0x22, 0});  // Y: 2x2 sampling, quant table 0
    sof.insert(sof.end(), {2, 0x11, 1});  // Cb
    sof.insert(sof.end(), {3, 0x11, 1});  // Cr
    put_segment(out, 0xC0, sof);
  }
  const auto put_dht = [&](int cls, int id, const std::uint8_t bits[16], const std::uint8_t* vals) {
    std::vector<std::uint8_t> dht;
    dht.push_back(static_cast<std::uint8_t>((cls << 4) | id));
    std::size_t n = 0;
    for (int i = 0; i < 16; ++i) {
      dht.push_back(bits[i]);
      n += bits[i];
    }
    dht.insert(dht.end(), vals, vals + n);
    put_segment(out, 0xC4, dht);
  };
  put_dht(0, 0, kDcLumaBits, kDcLumaVals);
  put_dht(1, 0, kAcLumaBits, kAcLumaVals);
  put_dht(0, 1, kDcChromaBits, kDcChromaVals);
  put_dht(1, 1, kAcChromaBits, kAcChromaVals);
  {
    std::vector<std::uint8_t> sos{3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0};
    put_segment(out, 0xDA, sos);
  }

  BitWriter bw(out);
  const std::int64_t mcux = (w + 15) / 16, mcuy = (h + 15) / 16;
  int pdy = 0, pdb = 0, pdr = 0;
  double block[64];
  for (std::int64_t my = 0; my < mcuy; ++my) {
    for (std::int64_t mx = 0; mx < mcux; ++mx) {
      for (int sub = 0; sub < 4; ++sub) {
        load_block(Y, my * 16 + (sub / 2) * 8, mx * 16 + (sub % 2) * 8, block);
        fdct_block(block);
        encode_block(bw, block, ql, dcl, acl, pdy);
      }
      load_block(Cb, my * 8, mx * 8, block);
      fdct_block(block);
      encode_block(bw, block, qc, dcc, acc, pdb);
      load_block(Cr, my * 8, mx * 8, block);
      fdct_block(block);
      encode_block(bw, block, qc, dcc, acc, pdr);
    }
  }
  bw.flush();
  put_marker(out, 0xD9);  // EOI
  return out;
}

Tensor decode_jpeg(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  const auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw std::runtime_error("jpeg: truncated stream");
  };
  need(2);
  if (bytes[0] != 0xFF || bytes[1] != 0xD8) throw std::runtime_error("jpeg: missing SOI");
  pos = 2;

  std::array<std::array<std::uint16_t, 64>, 4> quant{};
  std::array<bool, 4> quant_seen{};
  std::array<HuffDecodeTable, 4> dc_tables, ac_tables;
  std::int64_t w = 0, h = 0;
  struct Comp {
    int id = 0, hs = 0, vs = 0, tq = 0, td = 0, ta = 0;
  };
  std::array<Comp, 3> comps{};
  int ncomp = 0;
  std::size_t scan_start = 0;

  while (true) {
    need(2);
    if (bytes[pos] != 0xFF) throw std::runtime_error("jpeg: marker expected");
    const std::uint8_t m = bytes[pos + 1];
    pos += 2;
    if (m == 0xD9) throw std::runtime_error("jpeg: no scan data before EOI");
    need(2);
    const std::size_t len = (static_cast<std::size_t>(bytes[pos]) << 8) | bytes[pos + 1];
    need(len);
    const std::uint8_t* seg = bytes.data() + pos + 2;
    const std::size_t seglen = len - 2;
    if (m == 0xDB) {
      std::size_t p = 0;
      while (p < seglen) {
        const int pq = seg[p] >> 4, tq = seg[p] & 0x0F;
        ++p;
        if (tq > 3) throw std::runtime_error("jpeg: bad quant table id");
        for (int i = 0; i < 64; ++i) {
          std::uint16_t v;
          if (pq == 0) {
            v = seg[p++];
          } else {
            v = static_cast<std::uint16_t>((seg[p] << 8) | seg[p + 1]);
            p += 2;
          }
          quant[static_cast<std::size_t>(tq)][kZigzag[i]] = v;
        }
        quant_seen[static_cast<std::size_t>(tq)] = true;
      }
    } else if (m == 0xC0 || m == 0xC1) {
      if (seg[0] != 8) throw std::runtime_error("jpeg: only 8-bit precision supported");
      h = (seg[1] << 8) | seg[2];
      w = (seg[3] << 8) | seg[4];
      ncomp = seg[5];
      if (ncomp != 3) throw std::runtime_error("jpeg: expected 3 components");
      for (int c = 0; c < 3; ++c) {
        comps[static_cast<std::size_t>(c)].id = seg[6 + c * 3];
        comps[static_cast<std::size_t>(c)].hs = seg[7 + c * 3] >> 4;
        comps[static_cast<std::size_t>(c)].vs = seg[7 + c * 3] & 0x0F;
        comps[static_cast<std::size_t>(c)].tq = seg[8 + c * 3];
      }
      if (comps[0].hs != 2 || comps[0].vs != 2 || comps[1].hs != 1 || comps[1].vs != 1 ||
          comps[2].hs != 1 || comps[2].vs != 1) {
        throw std::runtime_error("jpeg: only 4:2:0 sampling supported");
      }
    } else if (m >= 0xC2 && m <= 0xCF && m != 0xC4 && m != 0xC8 && m != 0xCC) {
      throw std::runtime_error("jpeg: non-baseline frame type");
    } else if (m == 0xC4) {
      std::size_t p = 0;
      while (p < seglen) {
        const int cls = seg[p] >> 4, id = seg[p] & 0x0F;
        ++p;
        if (id > 3) throw std::runtime_error("jpeg: bad huffman table id");
        std::uint8_t bits[16];
        std::size_t n = 0;
        for (int i = 0; i < 16; ++i) {
          bits[i] = seg[p + static_cast<std::size_t>(i)];
          n += bits[i];
        }
        p += 16;
        auto& slot = cls == 0 ? dc_tables[static_cast<std::size_t>(id)]
                              : ac_tables[static_cast<std::size_t>(id)];
        slot = build_decode_table(bits, seg + p, n);
        p += n;
      }
    } else if (m == 0xDA) {
      const int ns = seg[0];
      if (ns != 3) throw std::runtime_error("jpeg: expected 3 scan components");
      for (int c = 0; c < 3; ++c) {
        const int cid = seg[1 + c * 2];
        for (auto& comp : comps) {
          if (comp.id == cid) {
            comp.td = seg[2 + c * 2] >> 4;
            comp.ta = seg[2 + c * 2] & 0x0F;
          }
        }
      }
      scan_start = pos + len;
      break;
    } else if (m == 0xDD) {
      throw std::runtime_error("jpeg: restart intervals unsupported");
    }
    // APPn, COM and anything else: skipped.
    pos += len;
  }
  if (w == 0 || h == 0) throw std::runtime_error("jpeg: missing frame header");
  for (const auto& c : comps) {
    if (!quant_seen[static_cast<std::size_t>(c.tq)] ||
        !dc_tables[static_cast<std::size_t>(c.td)].present ||
        !ac_tables[static_cast<std::size_t>(c.ta)].present) {
      throw std::runtime_error("jpeg: missing table referenced by scan");
    }
  }

  BitReader br(bytes.data(), bytes.size(), scan_start);
  const auto decode_symbol = [&](const HuffDecodeTable& t) -> std::uint8_t {
    std::int32_t code = 0;
    for (int len = 1; len <= 16; ++len) {
      code = (code << 1) | br.bit();
      if (t.max_code[static_cast<std::size_t>(len)] >= 0 &&
          code <= t.max_code[static_cast<std::size_t>(len)]) {
        const std::int32_t idx = t.val_off[static_cast<std::size_t>(len)] +
                                 (code - t.min_code[static_cast<std::size_t>(len)]);
        return t.vals[static_cast<std::size_t>(idx)];
      }
    }
    throw std::runtime_error("jpeg: invalid huffman code");
  };
  const auto extend = [](std::int32_t v, int size) {
    return v < (1 << (size - 1)) ? v - (1 << size) + 1 : v;
  };

  const std::int64_t mcux = (w + 15) / 16, mcuy = (h + 15) / 16;
  Plane Y{mcux * 16, mcuy * 16}, Cb{mcux * 8, mcuy * 8}, Cr{mcux * 8, mcuy * 8};
  Y.px.assign(static_cast<std::size_t>(Y.w * Y.h), 0.0);
  Cb.px.assign(static_cast<std::size_t>(Cb.w * Cb.h), 0.0);
  Cr.px.assign(static_cast<std::size_t>(Cr.w * Cr.h), 0.0);

  std::array<int, 3> pred{};
  double block[64];
  const auto decode_block = [&](const Comp& c, Plane& plane, std::int64_t by, std::int64_t bx,
                                int comp_idx) {
    const auto& dct = dc_tables[static_cast<std::size_t>(c.td)];
    const auto& act = ac_tables[static_cast<std::size_t>(c.ta)];
    const auto& q = quant[static_cast<std::size_t>(c.tq)];
    std::fill(block, block + 64, 0.0);
    const int dsz = decode_symbol(dct);
    int diff = 0;
    if (dsz > 0) diff = extend(br.bits(dsz), dsz);
    pred[static_cast<std::size_t>(comp_idx)] += diff;
    block[0] = static_cast<double>(pred[static_cast<std::size_t>(comp_idx)]) * q[0];
    int k = 1;
    while (k < 64) {
      const std::uint8_t sym = decode_symbol(act);
      if (sym == 0x00) break;  // EOB
      const int run = sym >> 4, size = sym & 0x0F;
      if (size == 0) {
        if (run != 15) throw std::runtime_error("jpeg: bad AC symbol");
        k += 16;
        continue;
      }
      k += run;
      if (k > 63) throw std::runtime_error("jpeg: AC index overflow");
      const std::int32_t v = extend(br.bits(size), size);
      block[kZigzag[k]] = static_cast<double>(v) * q[kZigzag[k]];
      ++k;
    }
    idct_block(block);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        const std::int64_t py = by + y, px = bx + x;
        if (py < plane.h && px < plane.w) {
          plane.px[static_cast<std::size_t>(py * plane.w + px)] = block[y * 8 + x] + 128.0;
        }
      }
    }
  };

  for (std::int64_t my = 0; my < mcuy; ++my) {
    for (std::int64_t mx = 0; mx < mcux; ++mx) {
      for (int sub = 0; sub < 4; ++sub) {
        decode_block(comps[0], Y, my * 16 + (sub / 2) * 8, mx * 16 + (sub % 2) * 8, 0);
      }
      decode_block(comps[1], Cb, my * 8, mx * 8, 1);
      decode_block(comps[2], Cr, my * 8, mx * 8, 2);
    }
  }

  // Triangle-filter chroma upsampling via the half-pixel bilinear resizer.
  const std::int64_t ch = (h + 1) / 2, cw = (w + 1) / 2;
  Tensor cb_t = Tensor::zeros({ch, cw}), cr_t = Tensor::zeros({ch, cw});
  for (std::int64_t y = 0; y < ch; ++y) {
    for (std::int64_t x = 0; x < cw; ++x) {
      cb_t.data[static_cast<std::size_t>(y * cw + x)] = Cb.px[static_cast<std::size_t>(y * Cb.w + x)];
      cr_t.data[static_cast<std::size_t>(y * cw + x)] = Cr.px[static_cast<std::size_t>(y * Cr.w + x)];
    }
  }
  const Tensor cb_up = resize_bilinear(cb_t, h, w);
  const Tensor cr_up = resize_bilinear(cr_t, h, w);

  Tensor out = Tensor::zeros({3, h, w});
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const double yy = Y.px[static_cast<std::size_t>(y * Y.w + x)];
      const double cb = cb_up.data[static_cast<std::size_t>(y * w + x)] - 128.0;
      const double cr = cr_up.data[static_cast<std::size_t>(y * w + x)] - 128.0;
      const auto store = [&](int c, double v) {
        const long q = std::lround(v);
        out.data[static_cast<std::size_t>((c * h + y) * w + x)] =
            static_cast<double>(std::clamp<long>(q, 0, 255)) / 255.0;
      };
      store(0, yy + 1.402 * cr);
      store(1, yy - 0.344136286 * cb - 0.714136286 * cr);
      store(2, yy + 1.772 * cb);
    }
  }
  return out;
}

}  // namespace plab
