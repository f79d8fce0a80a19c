#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "huddle/service/api.hpp"

namespace huddle::service {

struct ServerOptions {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  int threads = 2;
};

/// HTTP/1.1 + WebSocket front end for an Api. The listening socket is bound
/// in the constructor, so a busy port fails there with ErrorCode::config.
class Server {
 public:
  Server(Api& api, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const;

  void start();  // returns once worker threads are running
  void stop();   // idempotent; joins the workers
  /// start(), then block until SIGINT/SIGTERM or stop().
  void run_until_signal();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace huddle::service
