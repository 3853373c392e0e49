#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "fasb/bridge/protocol.hpp"
#include "fasb/model/session.hpp"
#include "fasb/model/tokenizer.hpp"

namespace fasb::bridge {

// One connection to a bridge server. Calls are serialized; each request
// waits for its response before the next is sent.
class BridgeClient {
 public:
  // Connects and performs the version handshake. Throws
  // Error("version_mismatch") if the server speaks another protocol.
  BridgeClient(const std::string& host, std::uint16_t port);

  // Sends one request. An error frame is rethrown as fasb::Error carrying
  // the remote code and message.
  nlohmann::json call(const std::string& method, const nlohmann::json& params);

  // Sends a raw frame body and returns the raw response, for protocol tests.
  nlohmann::json call_raw(const std::string& body);

 private:
  nlohmann::json receive(std::optional<std::uint64_t> expected_id);

  std::mutex mutex_;
  Socket socket_;
  std::uint64_t next_id_ = 1;
};

// Backend that drives a model hosted behind a bridge server. Sessions keep
// their token and output history locally; the server holds the cache.
class BridgeBackend final : public Backend {
 public:
  BridgeBackend(const std::string& host, std::uint16_t port);
  explicit BridgeBackend(const std::string& address);

  const ModelConfig& config() const override { return config_; }
  // Word list published by the server, if it has one.
  const std::optional<Vocabulary>& vocabulary() const { return vocab_; }

  std::unique_ptr<GenerationSession> prime(std::span<const TokenId> prompt,
                                           std::span<const HeadId> taps) override;

 private:
  std::shared_ptr<BridgeClient> client_;
  ModelConfig config_;
  std::optional<Vocabulary> vocab_;
};

}  // namespace fasb::bridge
