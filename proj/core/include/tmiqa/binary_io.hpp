#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "tmiqa/error.hpp"

// Little-endian primitives shared by the .plsr and feature-cache formats.
namespace tmiqa::binary {

namespace detail {

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xFF));
    }
    return out;
  }
  return v;
}

template <typename U>
void put_raw(std::ostream& out, U v) {
  v = to_little(v);
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.write(buf, sizeof(U));
}

template <typename U>
U get_raw(std::istream& in, std::string_view what) {
  char buf[sizeof(U)];
  if (!in.read(buf, sizeof(U))) {
    throw Error(Errc::kBadFileFormat, "truncated file while reading " + std::string(what));
  }
  U v;
  std::memcpy(&v, buf, sizeof(U));
  return to_little(v);
}

}  // namespace detail

inline void put_u32(std::ostream& out, std::uint32_t v) { detail::put_raw(out, v); }
inline void put_f32(std::ostream& out, float v) { detail::put_raw(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { detail::put_raw(out, std::bit_cast<std::uint64_t>(v)); }

/// u32 byte length followed by the UTF-8 bytes.
inline void put_string(std::ostream& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& in, std::string_view what) {
  return detail::get_raw<std::uint32_t>(in, what);
}
inline float get_f32(std::istream& in, std::string_view what) {
  return std::bit_cast<float>(detail::get_raw<std::uint32_t>(in, what));
}
inline double get_f64(std::istream& in, std::string_view what) {
  return std::bit_cast<double>(detail::get_raw<std::uint64_t>(in, what));
}

inline std::string get_string(std::istream& in, std::string_view what, std::uint32_t max_len = 1u << 24) {
  const auto len = get_u32(in, what);
  if (len > max_len) throw Error(Errc::kBadFileFormat, "implausible string length for " + std::string(what));
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len)) {
    throw Error(Errc::kBadFileFormat, "truncated file while reading " + std::string(what));
  }
  return s;
}

inline void expect_magic(std::istream& in, std::string_view magic, std::string_view what) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(magic.size())) || got != magic) {
    throw Error(Errc::kBadFileFormat, std::string(what) + ": bad magic, expected '" + std::string(magic) + "'");
  }
}

}  // namespace tmiqa::binary
