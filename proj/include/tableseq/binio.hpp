// SPDX-License-Identifier: Apache-2.0
// Little-endian primitives for the binary container formats.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "tableseq/error.hpp"

namespace tableseq::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

inline void put_f32(std::ostream& out, float v) { out.write(reinterpret_cast<const char*>(&v), 4); }

inline void put_bytes(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw Error(ErrorCode::kFormat, "truncated binary file");
  return v;
}

inline float get_f32(std::istream& in) {
  float v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw Error(ErrorCode::kFormat, "truncated binary file");
  return v;
}

inline std::string get_bytes(std::istream& in, std::uint32_t limit = 1u << 24) {
  const std::uint32_t n = get_u32(in);
  if (n > limit) throw Error(ErrorCode::kFormat, "string field too long");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw Error(ErrorCode::kFormat, "truncated binary file");
  return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
  char buf[4];
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw Error(ErrorCode::kFormat, std::string("bad magic, expected ") + magic);
  }
}

}  // namespace tableseq::binio
