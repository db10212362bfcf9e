#pragma once

// Little-endian primitives for the binary file formats (feature files and
// model checkpoints); the formats do not depend on host byte order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "seqfuse/numeric.hpp"

namespace seqfuse::bin {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_u8(std::ostream& os, std::uint8_t v) {
  os.put(static_cast<char>(v));
}

inline void put_f32(std::ostream& os, float v) {
  put_u32(os, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64(std::ostream& os, double v) {
  const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& what) {
  char b[4];
  if (!is.read(b, 4)) throw DataError("truncated file while reading " + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

inline std::uint8_t get_u8(std::istream& is, const std::string& what) {
  char c;
  if (!is.get(c)) throw DataError("truncated file while reading " + what);
  return static_cast<std::uint8_t>(c);
}

inline float get_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get_u32(is, what));
}

inline double get_f64(std::istream& is, const std::string& what) {
  char b[8];
  if (!is.read(b, 8)) throw DataError("truncated file while reading " + what);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return std::bit_cast<double>(u);
}

inline void put_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char magic[4], const std::string& file) {
  char b[4];
  if (!is.read(b, 4) || std::memcmp(b, magic, 4) != 0)
    throw DataError("bad magic in " + file + " (expected " + std::string(magic, 4) + ")");
}

}  // namespace seqfuse::bin
