#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "fasb/bridge/protocol.hpp"
#include "fasb/model/kv_cache.hpp"
#include "fasb/model/tokenizer.hpp"
#include "fasb/model/transformer.hpp"

namespace fasb::bridge {

// Bridge server over the in-process reference transformer. One thread per
// connection; sessions are owned by the connection that primed them and
// dropped when it closes.
class BridgeServer {
 public:
  BridgeServer(std::shared_ptr<const Transformer> model, std::optional<Vocabulary> vocab = std::nullopt);
  ~BridgeServer();
  BridgeServer(const BridgeServer&) = delete;
  BridgeServer& operator=(const BridgeServer&) = delete;

  // Binds and listens; port 0 picks a free port.
  void listen(const std::string& host, std::uint16_t port);
  std::uint16_t port() const { return port_; }

  // Accept loop on the calling thread until stop().
  void run();
  // Accept loop on a background thread.
  void start();
  void stop();

 private:
  struct ConnectionState {
    std::uint64_t id = 0;
    bool greeted = false;
  };
  struct Session {
    std::mutex mutex;
    std::uint64_t connection = 0;
    std::vector<HeadId> taps;
    KvCache cache;

    explicit Session(const ModelConfig& config) : cache(config) {}
  };
  struct Connection {
    Socket socket;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  std::string handle(const std::string& body, ConnectionState& state);
  nlohmann::json dispatch(const std::string& method, const nlohmann::json& params, ConnectionState& state);
  std::shared_ptr<Session> session(const nlohmann::json& params, std::uint64_t connection);
  void serve_connection(Connection& conn, std::uint64_t id);
  void drop_sessions(std::uint64_t connection);
  void reap_finished();

  std::shared_ptr<const Transformer> model_;
  std::optional<Vocabulary> vocab_;
  Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;

  std::mutex sessions_mutex_;
  std::map<std::uint64_t, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 1;

  std::mutex connections_mutex_;
  std::list<Connection> connections_;
  std::uint64_t next_connection_ = 1;
};

}  // namespace fasb::bridge
