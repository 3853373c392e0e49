#include "fasb/bridge/server.hpp"

#include <cstring>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>

#include "fasb/common/error.hpp"
#include "fasb/model/session.hpp"

namespace fasb::bridge {

namespace {

nlohmann::json error_response(const nlohmann::json& id, const std::string& code, const std::string& message) {
  return {{"id", id}, {"error", {{"code", code}, {"message", message}}}};
}

}  // namespace

BridgeServer::BridgeServer(std::shared_ptr<const Transformer> model, std::optional<Vocabulary> vocab)
    : model_(std::move(model)), vocab_(std::move(vocab)) {}

BridgeServer::~BridgeServer() { stop(); }

void BridgeServer::listen(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* found = nullptr;
  const int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &found);
  require(rc == 0, "bind_failed", "cannot resolve " + host + ": " + gai_strerror(rc));
  for (addrinfo* ai = found; ai != nullptr && !listener_.valid(); ai = ai->ai_next) {
    Socket candidate(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!candidate.valid()) continue;
    int one = 1;
    ::setsockopt(candidate.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(candidate.fd(), ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(candidate.fd(), 16) == 0)
      listener_ = std::move(candidate);
  }
  ::freeaddrinfo(found);
  require(listener_.valid(), "bind_failed",
          "cannot listen on " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                     : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
}

void BridgeServer::run() {
  require(listener_.valid(), "not_listening", "listen() must be called before run()");
  while (!stopping_) {
    const int fd = ::accept(listener_.fd(), nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    reap_finished();
    std::lock_guard lock(connections_mutex_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    auto& conn = connections_.emplace_back();
    conn.socket = Socket(fd);
    const std::uint64_t id = next_connection_++;
    conn.thread = std::thread([this, &conn, id] { serve_connection(conn, id); });
  }
}

void BridgeServer::start() {
  require(listener_.valid(), "not_listening", "listen() must be called before start()");
  accept_thread_ = std::thread([this] { run(); });
}

void BridgeServer::stop() {
  if (stopping_.exchange(true)) return;
  listener_.shutdown();
  if (accept_thread_.joinable()) accept_thread_.join();
  std::list<Connection> connections;
  {
    std::lock_guard lock(connections_mutex_);
    for (auto& conn : connections_) conn.socket.shutdown();
    connections.splice(connections.end(), connections_);
  }
  for (auto& conn : connections)
    if (conn.thread.joinable()) conn.thread.join();
  listener_.close();
}

void BridgeServer::reap_finished() {
  std::lock_guard lock(connections_mutex_);
  for (auto it = connections_.begin(); it != connections_.end();) {
    if (it->done) {
      it->thread.join();
      it = connections_.erase(it);
    } else {
      ++it;
    }
  }
}

void BridgeServer::serve_connection(Connection& conn, std::uint64_t id) {
  ConnectionState state{id, false};
  try {
    while (auto body = conn.socket.read_frame()) conn.socket.write_frame(handle(*body, state));
  } catch (const Error& e) {
    // An oversize frame cannot be skipped; report it and drop the stream.
    if (e.code() == "bad_frame") {
      try {
        conn.socket.write_frame(error_response(nullptr, e.code(), e.what()).dump());
      } catch (const Error&) {
      }
    }
  }
  drop_sessions(id);
  conn.done = true;
}

std::string BridgeServer::handle(const std::string& body, ConnectionState& state) {
  nlohmann::json request;
  try {
    request = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    return error_response(nullptr, "bad_frame", std::string("malformed JSON: ") + e.what()).dump();
  }
  if (!request.is_object() || !request.contains("method") || !request["method"].is_string())
    return error_response(request.is_object() ? request.value("id", nlohmann::json()) : nlohmann::json(),
                          "bad_frame", "request must be an object with a string method")
        .dump();
  const nlohmann::json id = request.value("id", nlohmann::json());
  try {
    const auto params = request.value("params", nlohmann::json::object());
    return nlohmann::json{{"id", id}, {"result", dispatch(request["method"].get<std::string>(), params, state)}}
        .dump();
  } catch (const Error& e) {
    return error_response(id, e.code(), e.what()).dump();
  } catch (const nlohmann::json::exception& e) {
    return error_response(id, "bad_request", e.what()).dump();
  } catch (const std::exception& e) {
    return error_response(id, "remote_error", e.what()).dump();
  }
}

std::shared_ptr<BridgeServer::Session> BridgeServer::session(const nlohmann::json& params, std::uint64_t connection) {
  const auto sid = params.at("session").get<std::uint64_t>();
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(sid);
  require(it != sessions_.end() && it->second->connection == connection, "unknown_session",
          "no session " + std::to_string(sid));
  return it->second;
}

void BridgeServer::drop_sessions(std::uint64_t connection) {
  std::lock_guard lock(sessions_mutex_);
  std::erase_if(sessions_, [&](const auto& kv) { return kv.second->connection == connection; });
}

nlohmann::json BridgeServer::dispatch(const std::string& method, const nlohmann::json& params,
                                      ConnectionState& state) {
  if (method == "hello") {
    const auto version = params.at("version").get<std::string>();
    require(version == kProtocolVersion, "version_mismatch",
            "client speaks '" + version + "', server speaks '" + std::string(kProtocolVersion) + "'");
    state.greeted = true;
    return {{"version", kProtocolVersion}};
  }
  require(state.greeted, "handshake_required", "send hello first");

  const ModelConfig& config = model_->config();
  if (method == "model_info") {
    nlohmann::json info{{"config", config}};
    if (vocab_) {
      std::vector<std::string> words;
      for (std::size_t i = 0; i < vocab_->size(); ++i) words.push_back(vocab_->word(static_cast<TokenId>(i)));
      info["vocab"] = words;
    }
    return info;
  }
  if (method == "prime") {
    std::vector<TokenId> prompt;
    if (params.contains("text")) {
      require(vocab_.has_value(), "no_tokenizer", "server has no vocabulary for text prompts");
      prompt = vocab_->encode(params.at("text").get<std::string>());
    } else {
      prompt = params.at("tokens").get<std::vector<TokenId>>();
    }
    validate_prompt(config, prompt);
    auto s = std::make_shared<Session>(config);
    s->connection = state.id;
    for (const auto& h : params.value("taps", nlohmann::json::array())) s->taps.push_back(decode_head(h));
    std::sort(s->taps.begin(), s->taps.end());
    s->taps.erase(std::unique(s->taps.begin(), s->taps.end()), s->taps.end());
    for (const auto& h : s->taps) model_->validate_head(h);
    const SteeringSpec none;
    StepOutput output;
    for (TokenId t : prompt) output = model_->forward(s->cache, t, none, s->taps);
    std::uint64_t sid = 0;
    {
      std::lock_guard lock(sessions_mutex_);
      sid = next_session_++;
      sessions_[sid] = s;
    }
    return {{"session", sid}, {"output", encode_step_output(output)}};
  }
  if (method == "step") {
    auto s = session(params, state.id);
    std::lock_guard lock(s->mutex);
    const SteeringSpec steering = decode_steering(params.value("steering", nlohmann::json::array()));
    const auto output = model_->forward(s->cache, params.at("token").get<TokenId>(), steering, s->taps);
    return {{"output", encode_step_output(output)}};
  }
  if (method == "rollback") {
    auto s = session(params, state.id);
    std::lock_guard lock(s->mutex);
    s->cache.truncate(params.at("keep_len").get<std::size_t>());
    return {{"committed_len", s->cache.committed_len()}};
  }
  if (method == "close") {
    auto s = session(params, state.id);
    std::lock_guard lock(sessions_mutex_);
    sessions_.erase(params.at("session").get<std::uint64_t>());
    return nlohmann::json::object();
  }
  fail("unknown_method", "unknown method '" + method + "'");
}

}  // namespace fasb::bridge
