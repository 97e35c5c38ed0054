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
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include <chrono>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

namespace crowdbots {
namespace {

using nlohmann::json;

// A blocking line-oriented test client.
class Client {
 public:
  explicit Client(std::uint16_t port, int rcvbuf = 0) {
    fd_ = socket(AF_INET, SOCK_STREAM, 0);
    if (rcvbuf > 0) setsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &rcvbuf, sizeof rcvbuf);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      close(fd_);
      fd_ = -1;
    }
  }
  ~Client() {
    if (fd_ >= 0) close(fd_);
  }
  bool connected() const { return fd_ >= 0; }

  void send_line(const std::string& line) { send_raw(line + "\n"); }
  void send_raw(const std::string& bytes) {
    std::size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t n = send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      ASSERT_GT(n, 0);
      off += static_cast<std::size_t>(n);
    }
  }
  void chat(const std::string& text, std::optional<std::string> user = {}) {
    json j{{"version", 1}, {"type", "chat"}, {"text", text}};
    if (user) j["username"] = *user;
    send_line(j.dump());
  }

  std::optional<json> read_message(int timeout_ms = 5000) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (true) {
      if (auto nl = buf_.find('\n'); nl != std::string::npos) {
        const std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return json::parse(line);
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{fd_, POLLIN, 0};
      if (poll(&p, 1, static_cast<int>(left.count())) <= 0) return std::nullopt;
      char tmp[65536];
      const ssize_t n = read(fd_, tmp, sizeof tmp);
      if (n <= 0) return std::nullopt;
      buf_.append(tmp, static_cast<std::size_t>(n));
    }
  }

  // Reads until a message of the given type arrives.
  std::optional<json> await(const std::string& type, int timeout_ms = 5000) {
    while (auto m = read_message(timeout_ms))
      if (m->at("type") == type) return m;
    return std::nullopt;
  }

  // Sends a ping and waits for the pong. The server has queued every chat
  // this client sent before the ping once the pong arrives.
  bool sync() {
    send_line(R"({"version":1,"type":"ping"})");
    return await("pong").has_value();
  }

 private:
  int fd_ = -1;
  std::string buf_;
};

class Recorder : public SessionObserver {
 public:
  void on_event(const Event& e, const PlatformState&) override { events.push_back(e); }
  std::vector<Event> of(EventKind k) const {
    std::vector<Event> out;
    for (const Event& e : events)
      if (e.kind == k) out.push_back(e);
    return out;
  }
  std::vector<Event> events;
};

// A live-client platform (no oracle) with a server on an ephemeral port.
struct Live {
  explicit Live(std::size_t max_queued = 256)
      : platform(SessionConfig{.seed = 5, .schedule = {.generations = 0}}),
        server(platform, Endpoint{}, max_queued) {
    platform.add_observer(&recorder);
    platform.add_observer(&server);
    platform.start();
  }
  Platform platform;
  Recorder recorder;
  Server server;
};

std::string client_error(std::string_view line) {
  try {
    parse_client_message(line, "guest-1");
  } catch (const Error& e) {
    return e.code();
  }
  return "ok";
}

TEST(Endpoint, Parsing) {
  EXPECT_EQ(parse_endpoint("0.0.0.0:8080").host, "0.0.0.0");
  EXPECT_EQ(parse_endpoint("0.0.0.0:8080").port, 8080);
  EXPECT_EQ(parse_endpoint(":9000").host, "127.0.0.1");
  EXPECT_EQ(parse_endpoint(":9000").port, 9000);
  EXPECT_EQ(parse_endpoint("9000").port, 9000);
  for (const char* bad : {"", "host:", "abc", "1.2.3.4:99999", "1.2.3.4:-1", "1.2.3.4:80x"})
    EXPECT_THROW(parse_endpoint(bad), Error) << bad;
}

TEST(ClientMessage, Validation) {
  EXPECT_EQ(client_error("not json"), "malformed_message");
  EXPECT_EQ(client_error("[1, 2]"), "malformed_message");
  EXPECT_EQ(client_error(R"({"type":"chat","text":"hi"})"), "missing_version");
  EXPECT_EQ(client_error(R"({"version":2,"type":"chat","text":"hi"})"), "unsupported_version");
  EXPECT_EQ(client_error(R"({"version":"1","type":"chat","text":"hi"})"), "unsupported_version");
  EXPECT_EQ(client_error(R"({"version":1})"), "malformed_message");
  EXPECT_EQ(client_error(R"({"version":1,"type":"frame"})"), "unknown_type");
  EXPECT_EQ(client_error(R"({"version":1,"type":"chat"})"), "malformed_message");
  EXPECT_EQ(client_error(R"({"version":1,"type":"chat","text":7})"), "malformed_message");
  EXPECT_EQ(client_error(R"({"version":1,"type":"chat","text":""})"), "invalid_chat");
  EXPECT_EQ(
      client_error(json{{"version", 1}, {"type", "chat"}, {"text", std::string(501, 'a')}}.dump()),
      "invalid_chat");
  EXPECT_EQ(client_error(R"({"version":1,"type":"chat","text":"hi","username":"a b"})"),
            "invalid_username");
  EXPECT_EQ(client_error(R"({"version":1,"type":"chat","text":"hi","username":""})"),
            "invalid_username");
  EXPECT_EQ(client_error(R"({"version":1,"type":"ping"})"), "ok");

  EXPECT_FALSE(parse_client_message(R"({"version":1,"type":"ping"})", "g").has_value());
  const auto c = parse_client_message(R"({"version":1,"type":"chat","text":"!ry"})", "guest-7");
  ASSERT_TRUE(c.has_value());
  EXPECT_EQ(c->username, "guest-7");
  EXPECT_EQ(c->text, "!ry");
  const auto named =
      parse_client_message(R"({"version":1,"type":"chat","text":"x","username":"ann_1"})", "g");
  EXPECT_EQ(named->username, "ann_1");
}

TEST(Messages, CarryVersionAndType) {
  FrameUpdate f;
  f.tick = 3;
  f.robot_id = 9;
  f.species = Species::kSnakebot;
  f.color = Color::kSilver;
  f.step = 36;
  f.joint_angles = {0.1, -0.2};
  f.segment_endpoints = {{Vec3{0, 0, 0.1}, Vec3{0.6, 0, 0.1}}};
  const json m = frame_message(f);
  EXPECT_EQ(m.at("version"), kProtocolVersion);
  EXPECT_EQ(m.at("type"), "frame");
  EXPECT_EQ(m.at("color"), "silver");
  EXPECT_EQ(m.at("step"), 36);
  // Flat [][3] point list, two consecutive points per segment.
  EXPECT_EQ(m.at("segment_endpoints"), json::parse("[[0,0,0.1],[0.6,0,0.1]]"));
  EXPECT_EQ(error_message("x", "y").at("type"), "error");
  EXPECT_EQ(error_message("x", "y").at("code"), "x");
  EXPECT_EQ(chat_echo_message("u", "t", 5).at("type"), "chat_echo");
}

TEST(Server, SendsPanelFirstOnConnect) {
  Live live;
  live.platform.run_tick();
  Client c(live.server.port());
  ASSERT_TRUE(c.connected());
  const auto first = c.read_message();
  ASSERT_TRUE(first.has_value());
  EXPECT_EQ(first->at("type"), "panel");
  EXPECT_EQ(first->at("version"), 1);
  for (const char* key : {"robot", "command", "top_commands", "top_users"})
    EXPECT_TRUE(first->contains(key)) << key;
}

TEST(Server, ChatDuringRedEvaluationBecomesReinforcement) {
  Live live;
  Client c(live.server.port());
  ASSERT_TRUE(c.await("panel"));
  c.chat("!ry", "viewer_1");
  ASSERT_TRUE(c.sync());
  live.platform.run_tick();  // tick 0 is red
  const auto started = live.recorder.of(EventKind::kEvaluationStarted);
  ASSERT_EQ(started.size(), 1u);
  ASSERT_EQ(started[0].data.at("color"), "red");
  const auto r = live.recorder.of(EventKind::kReinforcement);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].data.at("user"), "viewer_1");
  EXPECT_EQ(r[0].data.at("kind"), "yes");
  EXPECT_EQ(r[0].data.at("evaluation_id"), started[0].data.at("evaluation_id"));
  EXPECT_EQ(
      live.platform.state().primary.members[started[0].data.at("slot").get<std::size_t>()].yeses,
      1);
  const auto echo = c.await("chat_echo");
  ASSERT_TRUE(echo.has_value());
  EXPECT_EQ(echo->at("username"), "viewer_1");
  EXPECT_EQ(echo->at("text"), "!ry");
}

TEST(Server, MalformedMessageGetsErrorAndKeepsConnection) {
  Live live;
  Client c(live.server.port());
  ASSERT_TRUE(c.await("panel"));
  c.send_line("{oops");
  const auto err = c.await("error");
  ASSERT_TRUE(err.has_value());
  EXPECT_EQ(err->at("code"), "malformed_message");
  c.send_raw(std::string(kMaxLineBytes + 10, 'x'));
  const auto long_err = c.await("error");
  ASSERT_TRUE(long_err.has_value());
  EXPECT_EQ(long_err->at("code"), "line_too_long");
  EXPECT_TRUE(c.sync());
  EXPECT_EQ(live.server.client_count(), 1u);
  EXPECT_TRUE(live.recorder.of(EventKind::kChatMessage).empty());
}

TEST(Server, ConcurrentClientsLoseNothing) {
  Live live;
  constexpr int kPerClient = 100;
  auto spam = [&](const std::string& user) {
    Client c(live.server.port());
    ASSERT_TRUE(c.await("panel"));
    for (int k = 0; k < kPerClient; ++k) c.chat("msg " + std::to_string(k), user);
    ASSERT_TRUE(c.sync());
  };
  std::thread a(spam, "alice"), b(spam, "bob");
  a.join();
  b.join();
  live.platform.run_tick();
  std::map<std::string, int> next;
  int total = 0;
  for (const Event& e : live.recorder.of(EventKind::kChatMessage)) {
    const std::string user = e.data.at("user");
    // Each client's messages keep their order inside the total order.
    EXPECT_EQ(e.data.at("text"), "msg " + std::to_string(next[user]++));
    ++total;
  }
  EXPECT_EQ(total, 2 * kPerClient);
  EXPECT_EQ(next["alice"], kPerClient);
  EXPECT_EQ(next["bob"], kPerClient);
}

TEST(Server, SlowClientDropsFramesWithoutStallingTheLoop) {
  Live live(8);
  Client slow(live.server.port(), 2048);
  ASSERT_TRUE(slow.connected());
  for (int k = 0; k < 100 && live.server.client_count() == 0; ++k)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  ASSERT_EQ(live.server.client_count(), 1u);
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < 30; ++k) live.platform.run_tick();
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GT(live.server.frames_dropped(), 0u);
  EXPECT_LT(seconds, 30.0);
  // The client still gets the latest panel once it starts reading.
  std::optional<json> last_panel;
  while (auto m = slow.read_message(1000))
    if (m->at("type") == "panel") last_panel = m;
  ASSERT_TRUE(last_panel.has_value());
}

TEST(Server, FramesFollowTheOnScreenRobot) {
  Live live;
  Client c(live.server.port());
  ASSERT_TRUE(c.await("panel"));
  for (int k = 0; k < 100 && live.server.client_count() == 0; ++k)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  live.platform.run_tick();
  const auto started = live.recorder.of(EventKind::kEvaluationStarted).at(0);
  const auto f = c.await("frame");
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(f->at("robot_id"), started.data.at("robot_id"));
  EXPECT_EQ(f->at("color"), "red");
  EXPECT_EQ(f->at("step"), 0);
  const Species s = parse_species(started.data.at("species").get<std::string>());
  EXPECT_EQ(f->at("joint_angles").size(), static_cast<std::size_t>(species_spec(s).motor_count));
}

}  // namespace
}  // namespace crowdbots
