// Copyright 2026 The Crowdbots Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "crowdbots/server.h"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <deque>
#include <vector>

#include <nlohmann/json.hpp>

namespace crowdbots {
namespace {

Error io_error(const std::string& what) {
  return Error("io_error", what + ": " + std::strerror(errno));
}

void set_nonblocking(int fd) { fcntl(fd, F_SETFL, fcntl(fd, F_GETFL, 0) | O_NONBLOCK); }

nlohmann::json envelope(std::string_view type) {
  return {{"version", kProtocolVersion}, {"type", type}};
}

nlohmann::json point(const Vec3& v) { return {v.x, v.y, v.z}; }

bool valid_username(std::string_view u) {
  if (u.empty() || u.size() > 32) return false;
  for (char c : u)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      return false;
  return true;
}

}  // namespace

Endpoint parse_endpoint(std::string_view address) {
  Endpoint e;
  std::string_view port = address;
  if (const auto colon = address.rfind(':'); colon != std::string_view::npos) {
    if (colon > 0) e.host = std::string(address.substr(0, colon));
    port = address.substr(colon + 1);
  }
  unsigned value = 0;
  auto r = std::from_chars(port.data(), port.data() + port.size(), value);
  if (port.empty() || r.ec != std::errc() || r.ptr != port.data() + port.size() || value > 65535)
    throw Error("invalid_address", "expected host:port, got '" + std::string(address) + "'");
  e.port = static_cast<std::uint16_t>(value);
  return e;
}

nlohmann::json frame_message(const FrameUpdate& f) {
  nlohmann::json j = envelope("frame");
  nlohmann::json points = nlohmann::json::array();
  for (const auto& seg : f.segment_endpoints) {
    points.push_back(point(seg[0]));
    points.push_back(point(seg[1]));
  }
  j["tick"] = f.tick;
  j["evaluation_id"] = f.evaluation_id;
  j["robot_id"] = f.robot_id;
  j["species"] = species_name(f.species);
  j["color"] = color_name(f.color);
  j["step"] = f.step;
  j["joint_angles"] = f.joint_angles;
  j["segment_endpoints"] = std::move(points);
  return j;
}

nlohmann::json panel_message(const PlatformState& s, TimeMs now) {
  nlohmann::json j = panel_json(s, now);
  j["version"] = kProtocolVersion;
  j["type"] = "panel";
  return j;
}

nlohmann::json chat_echo_message(std::string_view username, std::string_view text, TimeMs t) {
  nlohmann::json j = envelope("chat_echo");
  j["username"] = username;
  j["text"] = text;
  j["t"] = t;
  return j;
}

nlohmann::json error_message(std::string_view code, std::string_view message) {
  nlohmann::json j = envelope("error");
  j["code"] = code;
  j["message"] = message;
  return j;
}

std::optional<ChatSubmit> parse_client_message(std::string_view line,
                                               std::string_view default_username) {
  const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error("malformed_message", "expected one JSON object per line");
  const auto version = j.find("version");
  if (version == j.end()) throw Error("missing_version", "every message needs \"version\"");
  if (!version->is_number_integer() || *version != kProtocolVersion)
    throw Error("unsupported_version", "this server speaks version 1");
  const auto type = j.find("type");
  if (type == j.end() || !type->is_string()) throw Error("malformed_message", "missing \"type\"");
  if (*type == "ping") return std::nullopt;
  if (*type != "chat")
    throw Error("unknown_type", "unknown message type '" + type->get<std::string>() + "'");
  const auto text = j.find("text");
  if (text == j.end() || !text->is_string()) throw Error("malformed_message", "chat needs \"text\"");
  ChatSubmit out{std::string(default_username), text->get<std::string>()};
  if (out.text.empty() || out.text.size() > kMaxChatChars)
    throw Error("invalid_chat", "text must be 1 to 500 bytes");
  if (const auto user = j.find("username"); user != j.end()) {
    if (!user->is_string() || !valid_username(user->get<std::string>()))
      throw Error("invalid_username", "usernames are 1 to 32 of [A-Za-z0-9_.-]");
    out.username = user->get<std::string>();
  }
  return out;
}

struct Server::Client {
  int fd = -1;
  std::uint64_t id = 0;
  std::string inbuf;
  struct Out {
    std::string line;
    bool droppable = false;
  };
  std::deque<Out> out;
  std::size_t offset = 0;  // bytes of out.front() already written
  bool closing = false;
};

Server::Server(Platform& platform, const Endpoint& endpoint, std::size_t max_queued)
    : platform_(platform), max_queued_(std::max<std::size_t>(max_queued, 4)) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(endpoint.port);
  if (int rc = getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw Error("invalid_address", endpoint.host + ": " + gai_strerror(rc));
  for (addrinfo* a = res; a; a = a->ai_next) {
    const int fd = socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (bind(fd, a->ai_addr, a->ai_addrlen) == 0 && listen(fd, 16) == 0) {
      listen_fd_ = fd;
      break;
    }
    close(fd);
  }
  freeaddrinfo(res);
  if (listen_fd_ < 0) throw io_error("cannot listen on " + endpoint.host + ":" + port);
  sockaddr_storage bound{};
  socklen_t len = sizeof bound;
  getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port
                                            : reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
  set_nonblocking(listen_fd_);
  if (pipe(wake_fds_) != 0) throw io_error("pipe");
  set_nonblocking(wake_fds_[0]);
  set_nonblocking(wake_fds_[1]);
  panel_ = panel_message(platform.state(), platform.state().last_time).dump() + '\n';
  thread_ = std::thread([this] { loop(); });
}

Server::~Server() {
  stop();
  for (int fd : {listen_fd_, wake_fds_[0], wake_fds_[1]})
    if (fd >= 0) close(fd);
}

void Server::stop() {
  if (stopping_.exchange(true)) return;
  wake();
  if (thread_.joinable()) thread_.join();
  std::lock_guard lock(mutex_);
  for (auto& [fd, c] : clients_) close(fd);
  clients_.clear();
  clients_connected_ = 0;
}

void Server::wake() {
  const char b = 1;
  [[maybe_unused]] auto n = write(wake_fds_[1], &b, 1);
}

void Server::enqueue(Client& c, std::string line, bool droppable) {
  if (droppable && c.out.size() >= max_queued_) {
    // Drop the oldest frame that has not started going out.
    for (auto it = c.out.begin() + (c.offset > 0 ? 1 : 0); it != c.out.end(); ++it)
      if (it->droppable) {
        c.out.erase(it);
        ++frames_dropped_;
        break;
      }
    if (c.out.size() >= max_queued_) {
      ++frames_dropped_;
      return;
    }
  }
  c.out.push_back({std::move(line), droppable});
  if (c.out.size() > 16 * max_queued_) c.closing = true;  // not reading at all
}

void Server::broadcast(const std::string& line, bool droppable) {
  {
    std::lock_guard lock(mutex_);
    for (auto& [fd, c] : clients_) enqueue(*c, line, droppable);
  }
  wake();
}

void Server::on_event(const Event& e, const PlatformState& s) {
  switch (e.kind) {
    case EventKind::kChatMessage:
      broadcast(chat_echo_message(e.data.at("user").get<std::string>(),
                                  e.data.at("text").get<std::string>(), e.t)
                        .dump() +
                    '\n',
                false);
      return;
    case EventKind::kEvaluationStarted:
    case EventKind::kEvaluationFinished:
    case EventKind::kCommandVote:
    case EventKind::kReinforcement:
    case EventKind::kRobotReplaced:
    case EventKind::kCommandWindowClosed:
    case EventKind::kRobotInjected:
    case EventKind::kSnapshot: {
      std::string panel = panel_message(s, e.t).dump() + '\n';
      {
        std::lock_guard lock(mutex_);
        panel_ = panel;
      }
      broadcast(panel, false);
      return;
    }
    default:
      return;
  }
}

void Server::on_frame(const FrameUpdate& f) { broadcast(frame_message(f).dump() + '\n', true); }

void Server::loop() {
  std::vector<pollfd> fds;
  while (!stopping_) {
    fds.clear();
    fds.push_back({listen_fd_, POLLIN, 0});
    fds.push_back({wake_fds_[0], POLLIN, 0});
    {
      std::lock_guard lock(mutex_);
      for (auto& [fd, c] : clients_)
        fds.push_back({fd, static_cast<short>(POLLIN | (c->out.empty() ? 0 : POLLOUT)), 0});
    }
    if (poll(fds.data(), fds.size(), 500) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (fds[1].revents & POLLIN) {
      char buf[256];
      while (read(wake_fds_[0], buf, sizeof buf) > 0) {
      }
    }
    if (fds[0].revents & POLLIN) {
      while (true) {
        const int fd = accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) break;
        set_nonblocking(fd);
        auto c = std::make_unique<Client>();
        c->fd = fd;
        std::lock_guard lock(mutex_);
        c->id = next_client_id_++;
        c->out.push_back({panel_, false});  // full snapshot before any frame
        clients_.emplace(fd, std::move(c));
        clients_connected_ = clients_.size();
      }
    }

    std::lock_guard lock(mutex_);
    for (std::size_t k = 2; k < fds.size(); ++k) {
      auto it = clients_.find(fds[k].fd);
      if (it == clients_.end()) continue;
      Client& c = *it->second;
      if (fds[k].revents & (POLLERR | POLLHUP | POLLNVAL)) c.closing = true;
      if (fds[k].revents & POLLIN) {
        char buf[4096];
        while (true) {
          const ssize_t n = read(c.fd, buf, sizeof buf);
          if (n > 0) {
            c.inbuf.append(buf, static_cast<std::size_t>(n));
            continue;
          }
          if (n == 0 || (errno != EAGAIN && errno != EWOULDBLOCK)) c.closing = true;
          break;
        }
        std::size_t nl;
        while ((nl = c.inbuf.find('\n')) != std::string::npos) {
          std::string line = c.inbuf.substr(0, nl);
          c.inbuf.erase(0, nl + 1);
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (line.empty()) continue;
          try {
            // Queued right away, so a pong acknowledges every chat sent
            // before its ping. The platform never calls observers while
            // holding its chat lock, so this cannot deadlock.
            if (auto chat = parse_client_message(line, "guest-" + std::to_string(c.id)))
              platform_.submit_chat(std::move(chat->username), std::move(chat->text));
            else
              c.out.push_back({envelope("pong").dump() + '\n', false});
          } catch (const Error& e) {
            c.out.push_back({error_message(e.code(), e.what()).dump() + '\n', false});
          }
        }
        if (c.inbuf.size() > kMaxLineBytes) {
          c.out.push_back({error_message("line_too_long", "messages are limited to 64 KiB").dump() + '\n', false});
          c.inbuf.clear();
        }
      }
      while (!c.out.empty()) {
        const std::string& line = c.out.front().line;
        const ssize_t n = send(c.fd, line.data() + c.offset, line.size() - c.offset, MSG_NOSIGNAL);
        if (n < 0) {
          if (errno != EAGAIN && errno != EWOULDBLOCK) c.closing = true;
          break;
        }
        c.offset += static_cast<std::size_t>(n);
        if (c.offset < line.size()) break;
        c.out.pop_front();
        c.offset = 0;
      }
    }
    for (auto it = clients_.begin(); it != clients_.end();) {
      if (it->second->closing) {
        close(it->first);
        it = clients_.erase(it);
      } else {
        ++it;
      }
    }
    clients_connected_ = clients_.size();
  }
}

}  // namespace crowdbots
