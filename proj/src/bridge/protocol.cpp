#include "fasb/bridge/protocol.hpp"

#include <cstring>
#include <sstream>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>

#include "fasb/common/binary_io.hpp"
#include "fasb/common/error.hpp"

namespace fasb::bridge {

using io::read_f32;
using io::read_u32;
using io::write_f32;
using io::write_u32;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  require(text.size() % 4 == 0, "bad_tensor", "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  if (text.empty()) return out;
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  require(n >= 0, "bad_tensor", "invalid base64 payload");
  std::size_t padding = 0;
  if (text.back() == '=') ++padding;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

nlohmann::json encode_tensor(const Eigen::VectorXf& v) {
  std::ostringstream buf;
  write_f32(buf, std::span<const float>(v.data(), static_cast<std::size_t>(v.size())));
  const std::string bytes = buf.str();
  const auto* data = reinterpret_cast<const std::uint8_t*>(bytes.data());
  return nlohmann::json{{"shape", {v.size()}}, {"data", base64_encode({data, bytes.size()})}};
}

Eigen::VectorXf decode_tensor(const nlohmann::json& j) {
  try {
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    require(shape.size() == 1, "bad_tensor", "only rank-1 tensors are supported");
    const auto bytes = base64_decode(j.at("data").get<std::string>());
    require(bytes.size() == 4 * shape[0], "bad_tensor",
            "shape declares " + std::to_string(shape[0]) + " floats but payload has " +
                std::to_string(bytes.size()) + " bytes");
    Eigen::VectorXf v(static_cast<Eigen::Index>(shape[0]));
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    read_f32(in, std::span<float>(v.data(), shape[0]));
    return v;
  } catch (const nlohmann::json::exception& e) {
    fail("bad_tensor", e.what());
  }
}

nlohmann::json encode_head(const HeadId& head) { return {{"layer", head.layer}, {"head", head.head}}; }

HeadId decode_head(const nlohmann::json& j) {
  return HeadId{j.at("layer").get<std::size_t>(), j.at("head").get<std::size_t>()};
}

nlohmann::json encode_steering(const SteeringSpec& spec) {
  auto out = nlohmann::json::array();
  for (const auto& e : spec.entries()) {
    auto entry = encode_head(e.head);
    entry["strength"] = e.strength;
    entry["direction"] = encode_tensor(e.direction);
    out.push_back(std::move(entry));
  }
  return out;
}

SteeringSpec decode_steering(const nlohmann::json& j) {
  SteeringSpec spec;
  for (const auto& entry : j)
    spec.add(decode_head(entry), decode_tensor(entry.at("direction")), entry.at("strength").get<float>());
  return spec;
}

nlohmann::json encode_step_output(const StepOutput& output) {
  auto heads = nlohmann::json::array();
  for (const auto& [head, activation] : output.head_activations) {
    auto entry = encode_head(head);
    entry["activation"] = encode_tensor(activation);
    heads.push_back(std::move(entry));
  }
  return {{"logits", encode_tensor(output.logits)}, {"heads", std::move(heads)}};
}

StepOutput decode_step_output(const nlohmann::json& j) {
  StepOutput out;
  out.logits = decode_tensor(j.at("logits"));
  for (const auto& entry : j.at("heads")) out.head_activations[decode_head(entry)] = decode_tensor(entry.at("activation"));
  return out;
}

std::string encode_frame(std::string_view body) {
  require(body.size() <= kMaxFrameBytes, "bad_frame", "frame body too large");
  std::ostringstream frame;
  write_u32(frame, static_cast<std::uint32_t>(body.size()));
  frame << body;
  return frame.str();
}

Socket::~Socket() { close(); }

Socket::Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Socket Socket::connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &found);
  require(rc == 0, "connection_failed", "cannot resolve " + host + ": " + gai_strerror(rc));
  Socket sock;
  for (addrinfo* ai = found; ai != nullptr; ai = ai->ai_next) {
    Socket candidate(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!candidate.valid()) continue;
    if (::connect(candidate.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
      sock = std::move(candidate);
      break;
    }
  }
  ::freeaddrinfo(found);
  require(sock.valid(), "connection_failed",
          "cannot connect to " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  int one = 1;
  ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return sock;
}

void Socket::send_all(const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t sent = ::send(fd_, data, n, MSG_NOSIGNAL);
    if (sent < 0 && errno == EINTR) continue;
    require(sent > 0, "connection_lost", std::string("send failed: ") + std::strerror(errno));
    data += sent;
    n -= static_cast<std::size_t>(sent);
  }
}

bool Socket::recv_exact(char* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd_, data + got, n - got, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r == 0 && got == 0) return false;
    require(r > 0, "connection_lost", "connection closed mid-frame");
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void Socket::write_frame(std::string_view body) {
  const std::string frame = encode_frame(body);
  send_all(frame.data(), frame.size());
}

std::optional<std::string> Socket::read_frame() {
  char prefix[4];
  if (!recv_exact(prefix, 4)) return std::nullopt;
  std::istringstream in(std::string(prefix, 4));
  const std::uint32_t n = read_u32(in);
  require(n <= kMaxFrameBytes, "bad_frame", "frame of " + std::to_string(n) + " bytes exceeds the limit");
  std::string body(n, '\0');
  if (n > 0) require(recv_exact(body.data(), n), "connection_lost", "connection closed mid-frame");
  return body;
}

std::pair<std::string, std::uint16_t> parse_address(const std::string& address) {
  const auto colon = address.rfind(':');
  require(colon != std::string::npos && colon > 0 && colon + 1 < address.size(), "invalid_argument",
          "address must be host:port, got '" + address + "'");
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(address.substr(colon + 1), &used);
    require(used == address.size() - colon - 1, "invalid_argument", "bad port in '" + address + "'");
  } catch (const std::logic_error&) {
    fail("invalid_argument", "bad port in '" + address + "'");
  }
  require(port >= 0 && port <= 65535, "invalid_argument", "port out of range in '" + address + "'");
  return {address.substr(0, colon), static_cast<std::uint16_t>(port)};
}

}  // namespace fasb::bridge
