#pragma once

// Live guidance sessions: one controller and one pen filter per client,
// driven by newline-delimited JSON messages.

#include <atomic>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include <json.hpp>

#include "emguide/estimation.hpp"
#include "emguide/mpcc.hpp"
#include "emguide/reference_path.hpp"

namespace emguide::session {

struct SessionConfig {
  mpcc::ControllerConfig controller;
  KalmanNoise kalman;
  PathOptions path_options;
  PathKind default_kind = PathKind::Spline;
};

/// Message handler. Replies depend only on the messages received so far.
///
/// client → server
///   {"type":"pen_sample","t":s,"x":m,"y":m}
///   {"type":"set_path","points":[[x,y],...],"kind":"spline"|"polyline"}
///   {"type":"set_weights","weights":{"w_f":10,...}}   partial update
///   {"type":"reset"}
/// server → client
///   {"type":"state","t","magnet_x","magnet_y","alpha","theta","fx","fy",
///    "setpoint_x","setpoint_y","costs":{...},"iterations","converged"}
///   {"type":"path_ack","length","theta","points"}
///   {"type":"weights_ack","weights":{...}}
///   {"type":"reset_ack"}
///   {"type":"error","text":"..."}
class Session {
 public:
  explicit Session(SessionConfig config = {});

  /// Exactly one reply per message; a bad message gets an error reply and
  /// leaves the session untouched.
  nlohmann::json handle(const nlohmann::json& message);
  std::string handle_line(std::string_view line);

  bool has_path() const { return path_.has_value(); }
  bool started() const { return started_; }
  const mpcc::SystemState& state() const { return state_; }
  const mpcc::Weights& weights() const { return controller_.config().weights; }

 private:
  nlohmann::json on_pen_sample(const nlohmann::json& m);
  nlohmann::json on_set_path(const nlohmann::json& m);
  nlohmann::json on_set_weights(const nlohmann::json& m);
  nlohmann::json on_reset();

  SessionConfig config_;
  std::optional<ReferencePath> path_;
  PenTracker tracker_;
  mpcc::Controller controller_;
  mpcc::SystemState state_;
  bool started_ = false;
  std::optional<double> last_t_;
};

nlohmann::json error_message(const std::string& text);

/// TCP service. Each connection gets its own thread and Session. A client
/// that opens with an HTTP GET is upgraded to a WebSocket; every text frame
/// then carries one message.
class Server {
 public:
  explicit Server(SessionConfig config = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and listens; port 0 picks a free one. Returns the bound port.
  /// Throws std::runtime_error when the address cannot be bound.
  int listen(const std::string& host, int port);
  /// Accept loop; returns after stop().
  void run();
  void stop();

  int port() const { return port_; }
  std::size_t active_sessions() const;

 private:
  struct Connection {
    std::thread thread;
    std::atomic<bool> done{false};
  };
  void serve_connection(int fd, Connection* self);
  void reap(bool all);

  SessionConfig config_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  mutable std::mutex mutex_;
  std::list<std::unique_ptr<Connection>> connections_;
};

/// RFC 6455 accept token for a Sec-WebSocket-Key.
std::string websocket_accept_key(const std::string& client_key);

}  // namespace emguide::session
