// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// TSR1 tensor files: "TSR1", u8 dtype (0 f32, 1 u8), u8 ndim, ndim u32
// extents, payload. Every integer and float is little-endian.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "geoadapt/errors.hpp"
#include "geoadapt/tensor.hpp"

namespace geoadapt {

static_assert(std::endian::native == std::endian::little, "serialisation assumes a little-endian host");

namespace io {

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

template <typename V>
void put(std::vector<char>& buf, V v) {
  char raw[sizeof(V)];
  std::memcpy(raw, &v, sizeof(V));
  buf.insert(buf.end(), raw, raw + sizeof(V));
}

/// Bounds-checked cursor over a byte buffer.
class Reader {
 public:
  Reader(const std::vector<char>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  template <typename V>
  V get() {
    V v;
    bytes(&v, sizeof(V));
    return v;
  }

  void bytes(void* dst, std::size_t n) {
    if (n > buf_.size() - pos_) throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_));
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }

  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<char>& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace io

enum class TsrType : std::uint8_t { kF32 = 0, kU8 = 1 };

inline std::vector<char> encode_tsr_header(TsrType type, const Shape& shape) {
  std::vector<char> buf{'T', 'S', 'R', '1'};
  io::put(buf, static_cast<std::uint8_t>(type));
  io::put(buf, static_cast<std::uint8_t>(shape.size()));
  for (auto e : shape) io::put(buf, static_cast<std::uint32_t>(e));
  return buf;
}

inline void save_tsr(const std::filesystem::path& path, const Tensor& t) {
  auto buf = encode_tsr_header(TsrType::kF32, t.shape());
  const char* p = reinterpret_cast<const char*>(t.data());
  buf.insert(buf.end(), p, p + t.size() * 4);
  io::write_file(path, buf);
}

inline void save_tsr_u8(const std::filesystem::path& path, const Shape& shape,
                        const std::vector<int>& values) {
  if (static_cast<std::int64_t>(values.size()) != shape_size(shape))
    throw DimensionError("u8 tensor: " + std::to_string(values.size()) + " values for shape " +
                         shape_str(shape));
  auto buf = encode_tsr_header(TsrType::kU8, shape);
  for (int v : values) {
    if (v < 0 || v > 255) throw DataError("value " + std::to_string(v) + " does not fit in u8");
    buf.push_back(static_cast<char>(static_cast<std::uint8_t>(v)));
  }
  io::write_file(path, buf);
}

struct TsrFile {
  TsrType type = TsrType::kF32;
  Shape shape;
  std::vector<float> f32;
  std::vector<int> u8;
};

inline TsrFile load_tsr_any(const std::filesystem::path& path) {
  const auto buf = io::read_file(path);
  io::Reader r(buf, path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "TSR1", 4) != 0) throw FormatError(path.string() + ": bad magic, not a TSR1 file");
  TsrFile f;
  const auto dtype = r.get<std::uint8_t>();
  if (dtype > 1) throw FormatError(path.string() + ": unknown dtype " + std::to_string(dtype));
  f.type = static_cast<TsrType>(dtype);
  const auto ndim = r.get<std::uint8_t>();
  for (int i = 0; i < ndim; ++i) {
    const auto e = r.get<std::uint32_t>();
    if (e == 0) throw FormatError(path.string() + ": zero extent");
    f.shape.push_back(e);
  }
  const auto n = static_cast<std::size_t>(shape_size(f.shape));
  if (f.type == TsrType::kF32) {
    f.f32.resize(n);
    r.bytes(f.f32.data(), n * 4);
  } else {
    std::vector<std::uint8_t> raw(n);
    r.bytes(raw.data(), n);
    f.u8.assign(raw.begin(), raw.end());
  }
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after payload");
  return f;
}

inline Tensor load_tsr(const std::filesystem::path& path) {
  auto f = load_tsr_any(path);
  if (f.type != TsrType::kF32) throw FormatError(path.string() + ": expected f32 tensor");
  return Tensor(f.shape, std::move(f.f32));
}

inline std::vector<int> load_tsr_u8(const std::filesystem::path& path, Shape* shape = nullptr) {
  auto f = load_tsr_any(path);
  if (f.type != TsrType::kU8) throw FormatError(path.string() + ": expected u8 tensor");
  if (shape) *shape = f.shape;
  return f.u8;
}

}  // namespace geoadapt
