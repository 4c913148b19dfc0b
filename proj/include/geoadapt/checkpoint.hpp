// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// TSMC checkpoints: "TSMC", u32 version, u32 entry count, then per entry a
// u16 name length, the UTF-8 name, u8 ndim, u32 extents and f32 payload.
// Entries are written in name order; frozen-ness follows the "frozen/" prefix.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "geoadapt/params.hpp"
#include "geoadapt/tsr.hpp"

namespace geoadapt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<char> encode_checkpoint(const ModelState& s) {
  std::vector<char> buf{'T', 'S', 'M', 'C'};
  io::put(buf, kCheckpointVersion);
  io::put(buf, static_cast<std::uint32_t>(s.size()));
  for (const auto& [name, e] : s.entries()) {
    if (name.size() > 0xffff) throw FormatError("parameter name too long: " + name);
    io::put(buf, static_cast<std::uint16_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    io::put(buf, static_cast<std::uint8_t>(e.value.ndim()));
    for (auto d : e.value.shape()) io::put(buf, static_cast<std::uint32_t>(d));
    const char* p = reinterpret_cast<const char*>(e.value.data());
    buf.insert(buf.end(), p, p + e.value.size() * 4);
  }
  return buf;
}

inline ModelState decode_checkpoint(const std::vector<char>& buf, const std::string& what) {
  io::Reader r(buf, what);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "TSMC", 4) != 0) throw FormatError(what + ": bad magic, not a TSMC checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  ModelState s;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    const auto ndim = r.get<std::uint8_t>();
    if (ndim == 0) throw FormatError(what + ": entry '" + name + "' has no extents");
    Shape shape;
    for (int k = 0; k < ndim; ++k) {
      const auto e = r.get<std::uint32_t>();
      if (e == 0) throw FormatError(what + ": entry '" + name + "' has a zero extent");
      shape.push_back(e);
    }
    std::vector<float> data(static_cast<std::size_t>(shape_size(shape)));
    r.bytes(data.data(), data.size() * 4);
    if (s.contains(name)) throw FormatError(what + ": duplicate entry '" + name + "'");
    s.add(name, Tensor(shape, std::move(data)), has_prefix(name, kFrozenPrefix));
  }
  if (!r.at_end()) throw FormatError(what + ": trailing bytes after last entry");
  return s;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelState& s) {
  io::write_file(path, encode_checkpoint(s));
}

inline ModelState load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace geoadapt
