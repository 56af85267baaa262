#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clem/tensor.hpp"

namespace clem {

// ---------------------------------------------------------------------------
// little-endian byte IO
// ---------------------------------------------------------------------------

class ByteWriter {
 public:
  void u8(uint8_t x) { buf_.push_back(x); }
  void u16(uint16_t x) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<uint8_t>(x >> (8 * i)));
  }
  void u32(uint32_t x) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(x >> (8 * i)));
  }
  void u64(uint64_t x) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(x >> (8 * i)));
  }
  void f32(float x) {
    uint32_t bits;
    std::memcpy(&bits, &x, 4);
    u32(bits);
  }
  void bytes(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void tensor(const Tensor<float>& t) {
    if (t.shape.empty() && t.v.empty()) {  // absent section: canonical empty form
      u32(1);
      u32(0);
      return;
    }
    u32(static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) u32(static_cast<uint32_t>(d));
    for (float x : t.v) f32(x);
  }

  const std::vector<uint8_t>& data() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> b) : buf_(b) {}

  uint8_t u8() { return take(1)[0]; }
  uint16_t u16() {
    auto b = take(2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  uint32_t u32() {
    auto b = take(4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }
  uint64_t u64() {
    uint64_t lo = u32();
    uint64_t hi = u32();
    return lo | (hi << 32);
  }
  float f32() {
    uint32_t bits = u32();
    float x;
    std::memcpy(&x, &bits, 4);
    return x;
  }
  std::string str() {
    uint32_t n = u32();
    auto b = take(n);
    return std::string(reinterpret_cast<const char*>(b.data()), n);
  }
  std::span<const uint8_t> raw(size_t n) { return take(n); }
  Tensor<float> tensor() {
    uint32_t rank = u32();
    if (rank > 4) throw std::runtime_error("deserialize: bad tensor rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(u32());
    Tensor<float> t(shape);
    for (auto& x : t.v) x = f32();
    return t;
  }

  size_t pos() const { return pos_; }
  size_t remaining() const { return buf_.size() - pos_; }

 private:
  std::span<const uint8_t> take(size_t n) {
    if (pos_ + n > buf_.size()) throw std::runtime_error("deserialize: truncated buffer");
    auto s = buf_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::span<const uint8_t> buf_;
  size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// CRC-32 (IEEE, reflected)
// ---------------------------------------------------------------------------

inline uint32_t crc32(std::span<const uint8_t> data) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int j = 0; j < 8; ++j) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = 0xFFFFFFFFu;
  for (uint8_t b : data) crc = table[(crc ^ b) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

// ---------------------------------------------------------------------------
// variable-width bit packing (LSB-first within little-endian bytes)
// ---------------------------------------------------------------------------

/// Entry i occupies bits [i*b, (i+1)*b), filled LSB-first; the result is
/// zero-padded to a byte boundary. b == 0 yields an empty buffer.
inline std::vector<uint8_t> pack_bits(std::span<const uint32_t> entries, int bits) {
  if (bits == 0) return {};
  std::vector<uint8_t> out((entries.size() * bits + 7) / 8, 0);
  size_t bitpos = 0;
  for (uint32_t e : entries) {
    for (int j = 0; j < bits; ++j, ++bitpos) {
      if ((e >> j) & 1u) out[bitpos / 8] |= static_cast<uint8_t>(1u << (bitpos % 8));
    }
  }
  return out;
}

inline std::vector<uint32_t> unpack_bits(std::span<const uint8_t> bytes, size_t count, int bits) {
  std::vector<uint32_t> out(count, 0);
  if (bits == 0) return out;
  if (bytes.size() < (count * bits + 7) / 8) throw std::runtime_error("unpack_bits: short buffer");
  size_t bitpos = 0;
  for (size_t i = 0; i < count; ++i) {
    uint32_t e = 0;
    for (int j = 0; j < bits; ++j, ++bitpos) {
      if (bytes[bitpos / 8] & (1u << (bitpos % 8))) e |= 1u << j;
    }
    out[i] = e;
  }
  return out;
}

inline int bits_for(int k) {
  int b = 0;
  while ((1 << b) < k) ++b;  // ceil(log2 k); k==1 -> 0
  return b;
}

// ---------------------------------------------------------------------------
// file helpers
// ---------------------------------------------------------------------------

inline void write_file(const std::string& path, std::span<const uint8_t> data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open: " + path);
  auto n = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> out(static_cast<size_t>(n));
  f.read(reinterpret_cast<char*>(out.data()), n);
  if (!f) throw std::runtime_error("read failed: " + path);
  return out;
}

}  // namespace clem
