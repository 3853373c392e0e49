#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fasb/model/types.hpp"

// Wire format: every frame is a 4-byte little-endian body length followed by
// a UTF-8 JSON body.
//
//   request   {"id": n, "method": str, "params": {...}}
//   response  {"id": n, "result": {...}}
//   error     {"id": n | null, "error": {"code": str, "message": str}}
//
// Tensors travel as {"shape": [n], "data": base64 of little-endian float32}.
// Methods: hello, model_info, prime, step, rollback, close.
namespace fasb::bridge {

inline constexpr std::string_view kProtocolVersion = "fasb-bridge/1";
inline constexpr std::uint32_t kMaxFrameBytes = 64U << 20;

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws Error("bad_tensor") on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

nlohmann::json encode_tensor(const Eigen::VectorXf& v);
// Checks that the declared shape matches the payload length.
Eigen::VectorXf decode_tensor(const nlohmann::json& j);

nlohmann::json encode_head(const HeadId& head);
HeadId decode_head(const nlohmann::json& j);

nlohmann::json encode_steering(const SteeringSpec& spec);
SteeringSpec decode_steering(const nlohmann::json& j);

nlohmann::json encode_step_output(const StepOutput& output);
StepOutput decode_step_output(const nlohmann::json& j);

// 4-byte length prefix followed by `body`.
std::string encode_frame(std::string_view body);

// Connected TCP stream, closed on destruction.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  static Socket connect(const std::string& host, std::uint16_t port);

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close();
  // Unblocks a reader on another thread.
  void shutdown();

  void write_frame(std::string_view body);
  // nullopt on clean end of stream before a frame starts. Throws
  // Error("bad_frame") for oversize frames and Error("connection_lost") on
  // a truncated frame.
  std::optional<std::string> read_frame();

 private:
  void send_all(const char* data, std::size_t n);
  bool recv_exact(char* data, std::size_t n);

  int fd_ = -1;
};

// "host:port"
std::pair<std::string, std::uint16_t> parse_address(const std::string& address);

}  // namespace fasb::bridge
