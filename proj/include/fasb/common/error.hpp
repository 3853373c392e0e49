#pragma once

#include <stdexcept>
#include <string>

namespace fasb {

// All library failures surface as fasb::Error. The code is a short stable
// identifier (e.g. "prompt_too_long", "bad_frame") used by the CLI and the
// bridge protocol's error frames.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& message) {
  throw Error(std::move(code), message);
}

inline void require(bool condition, std::string code, const std::string& message) {
  if (!condition) fail(std::move(code), message);
}

}  // namespace fasb
