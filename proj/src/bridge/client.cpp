#include "fasb/bridge/client.hpp"

#include "fasb/common/error.hpp"

namespace fasb::bridge {

BridgeClient::BridgeClient(const std::string& host, std::uint16_t port) : socket_(Socket::connect(host, port)) {
  const auto hello = call("hello", {{"version", kProtocolVersion}});
  const auto version = hello.value("version", std::string());
  require(version == kProtocolVersion, "version_mismatch",
          "server speaks '" + version + "', expected '" + std::string(kProtocolVersion) + "'");
}

nlohmann::json BridgeClient::receive(std::optional<std::uint64_t> expected_id) {
  const auto frame = socket_.read_frame();
  require(frame.has_value(), "connection_lost", "server closed the connection");
  nlohmann::json response;
  try {
    response = nlohmann::json::parse(*frame);
  } catch (const nlohmann::json::exception& e) {
    fail("bad_frame", std::string("unparseable response: ") + e.what());
  }
  if (expected_id) {
    require(response.contains("id") && response["id"].is_number_unsigned() &&
                response["id"].get<std::uint64_t>() == *expected_id,
            "bad_frame", "response id does not match request id " + std::to_string(*expected_id));
  }
  return response;
}

nlohmann::json BridgeClient::call(const std::string& method, const nlohmann::json& params) {
  std::lock_guard lock(mutex_);
  const std::uint64_t id = next_id_++;
  socket_.write_frame(nlohmann::json{{"id", id}, {"method", method}, {"params", params}}.dump());
  auto response = receive(id);
  if (response.contains("error")) {
    const auto& err = response["error"];
    fail(err.value("code", std::string("remote_error")), err.value("message", std::string("remote error")));
  }
  require(response.contains("result"), "bad_frame", "response has neither result nor error");
  return std::move(response["result"]);
}

nlohmann::json BridgeClient::call_raw(const std::string& body) {
  std::lock_guard lock(mutex_);
  socket_.write_frame(body);
  return receive(std::nullopt);
}

namespace {

class BridgeSession final : public GenerationSession {
 public:
  BridgeSession(std::shared_ptr<BridgeClient> client, std::span<const TokenId> prompt, std::span<const HeadId> taps)
      : client_(std::move(client)) {
    auto heads = nlohmann::json::array();
    for (const auto& h : taps) heads.push_back(encode_head(h));
    const auto result = client_->call(
        "prime", {{"tokens", std::vector<TokenId>(prompt.begin(), prompt.end())}, {"taps", std::move(heads)}});
    id_ = result.at("session").get<std::uint64_t>();
    init(prompt, decode_step_output(result.at("output")));
  }

  ~BridgeSession() override {
    try {
      client_->call("close", {{"session", id_}});
    } catch (const std::exception&) {
      // The server drops sessions with the connection anyway.
    }
  }

 protected:
  StepOutput forward(TokenId token, const SteeringSpec& steering) override {
    const auto result =
        client_->call("step", {{"session", id_}, {"token", token}, {"steering", encode_steering(steering)}});
    return decode_step_output(result.at("output"));
  }

  void truncate_positions(std::size_t n) override { client_->call("rollback", {{"session", id_}, {"keep_len", n}}); }

 private:
  std::shared_ptr<BridgeClient> client_;
  std::uint64_t id_ = 0;
};

}  // namespace

BridgeBackend::BridgeBackend(const std::string& host, std::uint16_t port)
    : client_(std::make_shared<BridgeClient>(host, port)) {
  const auto info = client_->call("model_info", nlohmann::json::object());
  config_ = info.at("config").get<ModelConfig>();
  config_.validate();
  if (info.contains("vocab") && info["vocab"].is_array()) vocab_.emplace(info["vocab"].get<std::vector<std::string>>());
}

BridgeBackend::BridgeBackend(const std::string& address)
    : BridgeBackend(parse_address(address).first, parse_address(address).second) {}

std::unique_ptr<GenerationSession> BridgeBackend::prime(std::span<const TokenId> prompt,
                                                        std::span<const HeadId> taps) {
  validate_prompt(config_, prompt);
  return std::make_unique<BridgeSession>(client_, prompt, taps);
}

}  // namespace fasb::bridge
