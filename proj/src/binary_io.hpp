// SPDX-License-Identifier: Apache-2.0
// Little-endian float32 helpers shared by the scene and checkpoint writers.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

namespace lrc::detail {

inline std::uint32_t to_le(std::uint32_t v) noexcept {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
}

inline void write_f32_le(std::ostream& os, std::span<const float> values) {
  std::vector<std::uint32_t> buf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) buf[i] = to_le(std::bit_cast<std::uint32_t>(values[i]));
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
}

inline bool read_f32_le(std::istream& is, std::span<float> out) {
  std::vector<std::uint32_t> buf(out.size());
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
  if (static_cast<std::size_t>(is.gcount()) != buf.size() * sizeof(std::uint32_t)) return false;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(to_le(buf[i]));
  return true;
}

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool read_u64_le(std::istream& is, std::uint64_t& v) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (is.gcount() != 8) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return true;
}

}  // namespace lrc::detail
