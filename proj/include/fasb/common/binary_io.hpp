#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fasb/common/error.hpp"

// Little-endian helpers for the on-disk tensor formats. The host is assumed
// little-endian (checked at compile time); floats are written as raw IEEE-754.
namespace fasb::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline void write_u32(std::ostream& out, std::uint32_t value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t value = 0;
  in.read(reinterpret_cast<char*>(&value), sizeof(value));
  require(static_cast<bool>(in), "io_error", "unexpected end of file reading u32");
  return value;
}

inline void write_f32(std::ostream& out, std::span<const float> values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
}

inline void read_f32(std::istream& in, std::span<float> values) {
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size_bytes()));
  require(static_cast<bool>(in), "io_error", "unexpected end of file reading float32 data");
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace fasb::io
