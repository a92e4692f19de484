#include "emguide/session.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "emguide/em_model.hpp"
#include "emguide/harness.hpp"

namespace emguide::session {

using nlohmann::json;

json error_message(const std::string& text) { return {{"type", "error"}, {"text", text}}; }

namespace {

double finite_number(const json& m, const char* key) {
  if (!m.contains(key) || !m[key].is_number()) {
    throw std::invalid_argument(std::string("missing numeric field '") + key + "'");
  }
  const double v = m[key].get<double>();
  if (!std::isfinite(v)) throw std::invalid_argument(std::string("field '") + key + "' is not finite");
  return v;
}

json terms_json(const mpcc::StageTerms& t) {
  return {{"force", t.force},        {"distance", t.distance}, {"intensity", t.intensity},
          {"lag", t.lag},            {"contour", t.contour},   {"progress", t.progress},
          {"progress_rate", t.progress_rate}, {"input", t.input}};
}

}  // namespace

Session::Session(SessionConfig config)
    : config_(config), tracker_(config.kalman), controller_(config.controller, mpcc::Controller::Mode::Mpcc) {}

json Session::handle(const json& m) {
  try {
    if (!m.is_object() || !m.contains("type") || !m["type"].is_string()) {
      return error_message("message must be an object with a string 'type'");
    }
    const std::string type = m["type"].get<std::string>();
    if (type == "pen_sample") return on_pen_sample(m);
    if (type == "set_path") return on_set_path(m);
    if (type == "set_weights") return on_set_weights(m);
    if (type == "reset") return on_reset();
    return error_message("unknown message type '" + type + "'");
  } catch (const std::exception& e) {
    return error_message(e.what());
  }
}

std::string Session::handle_line(std::string_view line) {
  json m;
  try {
    m = json::parse(line);
  } catch (const json::exception& e) {
    return error_message(std::string("malformed message: ") + e.what()).dump();
  }
  return handle(m).dump();
}

json Session::on_pen_sample(const json& m) {
  const double t = finite_number(m, "t");
  const Vec2 p(finite_number(m, "x"), finite_number(m, "y"));
  if (!path_) return error_message("no path set");
  if (last_t_ && !(t > *last_t_)) return error_message("t must increase within a session");

  const mpcc::Constraints& box = config_.controller.constraints;
  // Work on copies so a failing solve leaves the session as it was.
  PenTracker tracker = tracker_;
  tracker.observe(t, p);
  mpcc::SystemState x = state_;
  if (!started_) {
    x = {};
    x.magnet_pos = p.cwiseMax(box.workspace_min).cwiseMin(box.workspace_max);
    x.alpha = box.alpha_min;
    x.theta = path_->closest_progress_global(p);
  }
  mpcc::Controller controller = controller_;
  const mpcc::SolveResult plan = controller.step(x, tracker.estimate(), *path_, t);
  x = mpcc::Controller::next_state(plan);

  tracker_ = tracker;
  controller_ = controller;
  state_ = x;
  started_ = true;
  last_t_ = t;

  const Vec2 force = em::planar_force(p, x.magnet_pos, x.alpha, config_.controller.em).in_plane;
  const Vec2 setpoint = path_->evaluate(x.theta);
  return {{"type", "state"},
          {"t", t},
          {"magnet_x", x.magnet_pos.x()},
          {"magnet_y", x.magnet_pos.y()},
          {"alpha", x.alpha},
          {"theta", x.theta},
          {"fx", force.x()},
          {"fy", force.y()},
          {"setpoint_x", setpoint.x()},
          {"setpoint_y", setpoint.y()},
          {"costs", terms_json(plan.weighted_terms)},
          {"iterations", plan.iterations},
          {"converged", plan.converged}};
}

json Session::on_set_path(const json& m) {
  if (!m.contains("points") || !m["points"].is_array()) {
    return error_message("set_path needs a 'points' array");
  }
  std::vector<Vec2> points;
  for (const json& q : m["points"]) {
    if (!q.is_array() || q.size() != 2 || !q[0].is_number() || !q[1].is_number()) {
      return error_message("points must be [x, y] pairs");
    }
    points.emplace_back(q[0].get<double>(), q[1].get<double>());
  }
  PathKind kind = config_.default_kind;
  if (m.contains("kind")) {
    const std::string k = m["kind"].get<std::string>();
    if (k == "polyline") kind = PathKind::Polyline;
    else if (k == "spline") kind = PathKind::Spline;
    else return error_message("unknown path kind '" + k + "'");
  }
  ReferencePath path = ReferencePath::build(points, kind, config_.path_options);
  double theta = 0.0;
  if (path_ && started_) {
    const Vec2 setpoint = path_->evaluate(state_.theta);
    theta = path.closest_progress_global(setpoint);
    state_.theta = theta;
    controller_.reset();
  }
  path_ = std::move(path);
  return {{"type", "path_ack"},
          {"length", path_->length()},
          {"theta", theta},
          {"points", points.size()}};
}

json Session::on_set_weights(const json& m) {
  if (!m.contains("weights")) return error_message("set_weights needs a 'weights' object");
  const mpcc::Weights w = harness::weights_from_json(m["weights"], controller_.config().weights);
  controller_.set_weights(w);
  return {{"type", "weights_ack"}, {"weights", harness::weights_to_json(w)}};
}

json Session::on_reset() {
  tracker_.reset();
  controller_.reset();
  state_ = {};
  started_ = false;
  last_t_.reset();
  return {{"type", "reset_ack"}};
}

// ---------------------------------------------------------------------------
// WebSocket handshake helpers

namespace {

std::array<std::uint8_t, 20> sha1(const std::string& msg) {
  std::uint32_t h[5] = {0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0};
  std::vector<std::uint8_t> data(msg.begin(), msg.end());
  const std::uint64_t bits = std::uint64_t(data.size()) * 8;
  data.push_back(0x80);
  while (data.size() % 64 != 56) data.push_back(0);
  for (int i = 7; i >= 0; --i) data.push_back(std::uint8_t(bits >> (8 * i)));

  auto rotl = [](std::uint32_t v, int s) { return (v << s) | (v >> (32 - s)); };
  for (std::size_t off = 0; off < data.size(); off += 64) {
    std::uint32_t w[80];
    for (int i = 0; i < 16; ++i) {
      w[i] = std::uint32_t(data[off + 4 * i]) << 24 | std::uint32_t(data[off + 4 * i + 1]) << 16 |
             std::uint32_t(data[off + 4 * i + 2]) << 8 | std::uint32_t(data[off + 4 * i + 3]);
    }
    for (int i = 16; i < 80; ++i) w[i] = rotl(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
    for (int i = 0; i < 80; ++i) {
      std::uint32_t f, k;
      if (i < 20) { f = (b & c) | (~b & d); k = 0x5A827999; }
      else if (i < 40) { f = b ^ c ^ d; k = 0x6ED9EBA1; }
      else if (i < 60) { f = (b & c) | (b & d) | (c & d); k = 0x8F1BBCDC; }
      else { f = b ^ c ^ d; k = 0xCA62C1D6; }
      const std::uint32_t tmp = rotl(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rotl(b, 30);
      b = a;
      a = tmp;
    }
    h[0] += a; h[1] += b; h[2] += c; h[3] += d; h[4] += e;
  }
  std::array<std::uint8_t, 20> out{};
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 4; ++j) out[4 * i + j] = std::uint8_t(h[i] >> (24 - 8 * j));
  }
  return out;
}

std::string base64(const std::uint8_t* p, std::size_t n) {
  static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  for (std::size_t i = 0; i < n; i += 3) {
    const std::uint32_t v = std::uint32_t(p[i]) << 16 | (i + 1 < n ? std::uint32_t(p[i + 1]) << 8 : 0) |
                            (i + 2 < n ? p[i + 2] : 0);
    out += tbl[(v >> 18) & 63];
    out += tbl[(v >> 12) & 63];
    out += i + 1 < n ? tbl[(v >> 6) & 63] : '=';
    out += i + 2 < n ? tbl[v & 63] : '=';
  }
  return out;
}

bool send_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t k = ::send(fd, data, n, MSG_NOSIGNAL);
    if (k <= 0) return false;
    data += k;
    n -= std::size_t(k);
  }
  return true;
}

bool send_ws_text(int fd, const std::string& payload) {
  std::string frame;
  frame += char(0x81);
  if (payload.size() < 126) {
    frame += char(payload.size());
  } else if (payload.size() < 65536) {
    frame += char(126);
    frame += char((payload.size() >> 8) & 0xFF);
    frame += char(payload.size() & 0xFF);
  } else {
    frame += char(127);
    for (int i = 7; i >= 0; --i) frame += char((std::uint64_t(payload.size()) >> (8 * i)) & 0xFF);
  }
  frame += payload;
  return send_all(fd, frame.data(), frame.size());
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return s;
}

}  // namespace

std::string websocket_accept_key(const std::string& client_key) {
  const auto digest = sha1(client_key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11");
  return base64(digest.data(), digest.size());
}

// ---------------------------------------------------------------------------
// Server

Server::Server(SessionConfig config) : config_(config) {}

Server::~Server() {
  stop();
  reap(true);
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

int Server::listen(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res) != 0 || !res) {
    throw std::runtime_error("cannot resolve " + host);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw std::runtime_error("socket() failed");
  }
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 16) != 0) {
    ::freeaddrinfo(res);
    ::close(fd);
    throw std::runtime_error("cannot bind " + host + ":" + service + ": " + std::strerror(errno));
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  listen_fd_ = fd;
  port_ = ntohs(bound.sin_port);
  return port_;
}

void Server::run() {
  if (listen_fd_ < 0) throw std::runtime_error("Server::run before listen");
  while (!stopping_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    if (::poll(&pfd, 1, 100) <= 0) {
      reap(false);
      continue;
    }
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(mutex_);
    auto conn = std::make_unique<Connection>();
    Connection* raw = conn.get();
    connections_.push_back(std::move(conn));
    raw->thread = std::thread([this, fd, raw] { serve_connection(fd, raw); });
  }
  reap(true);
}

void Server::stop() { stopping_ = true; }

std::size_t Server::active_sessions() const {
  std::lock_guard lock(mutex_);
  return std::size_t(std::count_if(connections_.begin(), connections_.end(),
                                   [](const auto& c) { return !c->done; }));
}

void Server::reap(bool all) {
  std::list<std::unique_ptr<Connection>> finished;
  {
    std::lock_guard lock(mutex_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if (all || (*it)->done) {
        finished.push_back(std::move(*it));
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : finished) {
    if (c->thread.joinable()) c->thread.join();
  }
}

void Server::serve_connection(int fd, Connection* self) {
  Session session(config_);
  std::string buffer;
  bool websocket = false;
  bool handshake_done = false;
  std::string fragments;
  char chunk[4096];

  auto read_more = [&]() -> bool {
    while (!stopping_) {
      pollfd pfd{fd, POLLIN, 0};
      const int r = ::poll(&pfd, 1, 100);
      if (r < 0) return false;
      if (r == 0) continue;
      const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n <= 0) return false;
      buffer.append(chunk, std::size_t(n));
      return true;
    }
    return false;
  };

  // Handles every complete unit in `buffer`; false ends the connection.
  auto drain = [&]() -> bool {
    if (!handshake_done) {
      const std::string_view get = "GET ";
      if (buffer.size() < get.size() && get.substr(0, buffer.size()) == buffer) return true;
      if (buffer.compare(0, get.size(), get) != 0) {
        handshake_done = true;
      } else {
        const std::size_t end = buffer.find("\r\n\r\n");
        if (end == std::string::npos) return buffer.size() < 16384;
        std::string key;
        std::size_t pos = buffer.find("\r\n") + 2;
        while (pos < end) {
          const std::size_t eol = buffer.find("\r\n", pos);
          const std::string header = buffer.substr(pos, eol - pos);
          const std::size_t colon = header.find(':');
          if (colon != std::string::npos && lower(header.substr(0, colon)) == "sec-websocket-key") {
            key = header.substr(colon + 1);
            key.erase(0, key.find_first_not_of(' '));
            key.erase(key.find_last_not_of(" \t") + 1);
          }
          pos = eol + 2;
        }
        buffer.erase(0, end + 4);
        if (key.empty()) {
          const std::string resp = "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n";
          send_all(fd, resp.data(), resp.size());
          return false;
        }
        const std::string resp =
            "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
            "Sec-WebSocket-Accept: " + websocket_accept_key(key) + "\r\n\r\n";
        if (!send_all(fd, resp.data(), resp.size())) return false;
        websocket = true;
        handshake_done = true;
      }
    }

    if (!websocket) {
      std::size_t nl;
      while ((nl = buffer.find('\n')) != std::string::npos) {
        std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const std::string reply = session.handle_line(line) + "\n";
        if (!send_all(fd, reply.data(), reply.size())) return false;
      }
      return true;
    }

    while (buffer.size() >= 2) {
      const auto b0 = std::uint8_t(buffer[0]);
      const auto b1 = std::uint8_t(buffer[1]);
      const bool fin = b0 & 0x80;
      const int opcode = b0 & 0x0F;
      const bool masked = b1 & 0x80;
      std::uint64_t len = b1 & 0x7F;
      std::size_t head = 2;
      if (len == 126) {
        if (buffer.size() < 4) return true;
        len = std::uint64_t(std::uint8_t(buffer[2])) << 8 | std::uint8_t(buffer[3]);
        head = 4;
      } else if (len == 127) {
        if (buffer.size() < 10) return true;
        len = 0;
        for (int i = 0; i < 8; ++i) len = len << 8 | std::uint8_t(buffer[2 + i]);
        head = 10;
      }
      if (len > (1u << 24)) return false;
      const std::size_t mask_at = head;
      if (masked) head += 4;
      if (buffer.size() < head + len) return true;
      std::string payload = buffer.substr(head, len);
      if (masked) {
        for (std::size_t i = 0; i < payload.size(); ++i) payload[i] ^= buffer[mask_at + i % 4];
      }
      buffer.erase(0, head + len);

      if (opcode == 0x8) {
        const char close[2] = {char(0x88), 0};
        send_all(fd, close, 2);
        return false;
      }
      if (opcode == 0x9) {
        std::string pong;
        pong += char(0x8A);
        pong += char(std::min<std::size_t>(payload.size(), 125));
        pong += payload.substr(0, 125);
        if (!send_all(fd, pong.data(), pong.size())) return false;
        continue;
      }
      if (opcode == 0x1 || opcode == 0x0) {
        fragments += payload;
        if (!fin) continue;
        std::string text;
        text.swap(fragments);
        std::size_t start = 0;
        while (start <= text.size()) {
          std::size_t nl = text.find('\n', start);
          if (nl == std::string::npos) nl = text.size();
          const std::string line = text.substr(start, nl - start);
          start = nl + 1;
          if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
          if (!send_ws_text(fd, session.handle_line(line))) return false;
        }
      }
    }
    return true;
  };

  while (read_more()) {
    if (!drain()) break;
  }
  ::shutdown(fd, SHUT_RDWR);
  ::close(fd);
  self->done = true;
}

}  // namespace emguide::session
