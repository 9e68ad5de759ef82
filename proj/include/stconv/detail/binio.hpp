#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>

#include "stconv/errors.hpp"

namespace stconv::detail {

inline std::uint32_t byteswap32(std::uint32_t u) {
  return (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
}

inline void write_le_floats(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) {
      const auto u = byteswap32(std::bit_cast<std::uint32_t>(v));
      os.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
}

inline void read_le_floats(std::istream& is, std::span<float> values) {
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if constexpr (std::endian::native != std::endian::little) {
    for (float& v : values) v = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(v)));
  }
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw FormatError("cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw FormatError("cannot write " + p.string());
  os << text;
  if (!os) throw FormatError("write failed for " + p.string());
}

}  // namespace stconv::detail
