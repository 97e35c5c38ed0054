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

// Client wire protocol over TCP: one JSON object per line, every message
// carrying "version": 1 and a "type". docs/protocol.md lists the fields.
//
//   server -> client   panel, frame, chat_echo, error, pong
//   client -> server   chat, ping
//
// A single I/O thread serves all clients. Outgoing queues are bounded; when
// a slow client falls behind, its oldest queued frames are dropped so the
// master loop never waits on the network.

#ifndef CROWDBOTS_SERVER_H_
#define CROWDBOTS_SERVER_H_

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>

#include <nlohmann/json_fwd.hpp>

#include "crowdbots/platform.h"

namespace crowdbots {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxChatChars = 500;
inline constexpr std::size_t kMaxLineBytes = 64 * 1024;

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks an ephemeral port
};

// "host:port", ":port" or "port". Throws Error("invalid_address").
Endpoint parse_endpoint(std::string_view address);

// Message builders shared by the server and its tests.
nlohmann::json frame_message(const FrameUpdate& f);
nlohmann::json panel_message(const PlatformState& s, TimeMs now);
nlohmann::json chat_echo_message(std::string_view username, std::string_view text, TimeMs t);
nlohmann::json error_message(std::string_view code, std::string_view message);

// A validated client chat submission.
struct ChatSubmit {
  std::string username;
  std::string text;
};

// Validates one client line. Returns the chat to submit, nullopt for a ping,
// or throws Error with the code to report back.
std::optional<ChatSubmit> parse_client_message(std::string_view line,
                                               std::string_view default_username);

class Server : public SessionObserver {
 public:
  // Binds and listens immediately; throws Error("io_error").
  Server(Platform& platform, const Endpoint& endpoint, std::size_t max_queued = 256);
  ~Server() override;
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const { return port_; }
  std::size_t client_count() const { return clients_connected_; }
  // Counters for tests and diagnostics.
  std::uint64_t frames_dropped() const { return frames_dropped_; }

  void stop();

  void on_event(const Event& e, const PlatformState& s) override;
  bool wants_frames() const override { return clients_connected_ > 0; }
  void on_frame(const FrameUpdate& f) override;

 private:
  struct Client;

  void loop();
  void broadcast(const std::string& line, bool droppable);
  void enqueue(Client& c, std::string line, bool droppable);
  void wake();

  Platform& platform_;
  std::size_t max_queued_;
  int listen_fd_ = -1;
  int wake_fds_[2] = {-1, -1};
  std::uint16_t port_ = 0;

  std::mutex mutex_;  // guards clients_ and panel_
  std::map<int, std::unique_ptr<Client>> clients_;
  std::string panel_;
  std::uint64_t next_client_id_ = 1;

  std::atomic<std::size_t> clients_connected_{0};
  std::atomic<std::uint64_t> frames_dropped_{0};
  std::atomic<bool> stopping_{false};
  std::thread thread_;
};

}  // namespace crowdbots

#endif  // CROWDBOTS_SERVER_H_
