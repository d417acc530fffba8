#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "dsr/types.hpp"

namespace dsr::binio {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  auto u = static_cast<std::make_unsigned_t<T>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFFu);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

inline void put_f32(std::ostream& out, float value) { put_le(out, std::bit_cast<std::uint32_t>(value)); }

template <typename T>
T get_le(std::istream& in, const char* what) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw FormatError(std::string("truncated input while reading ") + what);
  }
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(bytes[i]) << (8 * i);
  return static_cast<T>(u);
}

inline float get_f32(std::istream& in, const char* what) {
  return std::bit_cast<float>(get_le<std::uint32_t>(in, what));
}

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
  char got[4];
  if (!in.read(got, 4)) throw FormatError("truncated input while reading magic bytes");
  if (std::memcmp(got, magic, 4) != 0) {
    throw FormatError(std::string("bad magic bytes, expected \"") + magic + "\"");
  }
}

inline void expect_end(std::istream& in) {
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after payload");
}

}  // namespace dsr::binio
