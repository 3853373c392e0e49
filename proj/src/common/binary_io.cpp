#include "fasb/common/binary_io.hpp"

#include <fstream>
#include <sstream>

namespace fasb::io {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.is_open(), "io_error", "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.is_open(), "io_error", "cannot write " + path);
  out << contents;
  require(static_cast<bool>(out), "io_error", "write failed for " + path);
}

}  // namespace fasb::io
