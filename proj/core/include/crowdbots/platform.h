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

// The master loop.
//
// Platform state is changed only by applying events, and the live session
// commits an event by appending it to the log and then applying it with the
// same reducer that replay uses. Anything expensive (simulation, hill
// climbing) is computed before the event and its result recorded in the
// payload, so replay never simulates.
//
// A tick is one 30-virtual-second evaluation. Within tick k (virtual time
// [30k, 30k + 30) s) the order of events is:
//   evaluation_started, chat traffic, evaluation_finished, robot_replaced?,
//   command_window_closed?, secondary_generation x120 + robot_injected?,
//   snapshot?
// where windows close after every 6th tick, the hourly injection follows
// every 120th, and snapshots are taken at tick 0, every 120 ticks and at the
// end of the session.

#ifndef CROWDBOTS_PLATFORM_H_
#define CROWDBOTS_PLATFORM_H_

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "crowdbots/critic.h"
#include "crowdbots/crowd.h"
#include "crowdbots/evolution.h"
#include "crowdbots/hash.h"
#include "crowdbots/synthcrowd.h"

namespace crowdbots {

struct Schedule {
  std::int64_t window_ticks = 6;       // 3 minutes
  std::int64_t injection_ticks = 120;  // 1 hour
  int generations = 120;               // hill-climber generations per injection
  std::int64_t snapshot_ticks = 120;
  friend bool operator==(const Schedule&, const Schedule&) = default;
};

enum class EventKind : std::uint8_t {
  kSessionStarted,
  kRobotBorn,
  kSecondaryInitialized,
  kEvaluationStarted,
  kChatMessage,
  kCommandVote,
  kReinforcement,
  kReinforcementDropped,
  kEvaluationFinished,
  kRobotReplaced,
  kCommandWindowClosed,
  kSecondaryGeneration,
  kRobotInjected,
  kSnapshot,
};

std::string_view event_kind_name(EventKind k);
// Throws FormatError.
EventKind parse_event_kind(std::string_view name);

struct Event {
  std::uint64_t seq = 0;
  TimeMs t = 0;                   // virtual ms since session start
  std::optional<std::int64_t> wall;  // unix ms, realtime sessions only
  EventKind kind = EventKind::kSessionStarted;
  nlohmann::json data;

  // {"seq": .., "t": .., "kind": .., "data": {..}[, "wall": ..]}
  nlohmann::json to_json() const;
  static Event from_json(const nlohmann::json& j);
  std::string to_line() const;  // compact JSON plus '\n'
};

// Reinforcement bookkeeping for an evaluation that is on screen or still
// inside its attribution grace window.
struct EvaluationTally {
  std::uint64_t evaluation_id = 0;
  std::int64_t tick = 0;
  std::size_t slot = 0;  // primary index
  RobotId robot_id = 0;
  Species species = Species::kStickbot;
  std::string command;
  double code = 0.0;
  Color color = Color::kRed;
  TimeMs start = 0;
  std::optional<TimeMs> end;
  std::int64_t yes = 0, no = 0, likes = 0, dislikes = 0;
  friend bool operator==(const EvaluationTally&, const EvaluationTally&) = default;
};

struct PlatformState {
  bool started = false;
  std::uint64_t seed = 0;
  Schedule schedule;
  std::uint64_t next_seq = 0;
  TimeMs last_time = 0;
  std::int64_t ticks_done = 0;
  RobotId next_robot_id = 1;
  std::uint64_t next_evaluation_id = 1;
  std::uint64_t generations = 0;
  std::uint64_t color_index = 0;  // position in the six-color cycle
  PrimaryPopulation primary;
  SecondaryPopulation secondary;
  CrowdState crowd;
  std::vector<EvaluationTally> recent;

  std::vector<BroadcastSlot> timeline() const;
  const EvaluationTally* find_evaluation(std::uint64_t id) const;
  const EvaluationTally* on_screen() const;  // the evaluation without an end

  friend bool operator==(const PlatformState&, const PlatformState&) = default;
};

// Snapshot encoding: CBOR of a versioned JSON document.
nlohmann::json state_to_json(const PlatformState& s);
PlatformState state_from_json(const nlohmann::json& j);
std::string serialize_state(const PlatformState& s);
// Throws FormatError, or Error("checksum_mismatch") for another species table.
PlatformState deserialize_state(const std::string& bytes);
std::uint64_t state_hash(const PlatformState& s);

// Throws Error("sequence_violation") unless `event` may follow `state`.
void check_event_order(const PlatformState& state, const Event& event);

// The reducer. Throws Error("sequence_violation") for an out-of-order event
// and Error("inconsistent_log") when the payload contradicts the state.
void apply_event(PlatformState& state, const Event& event);

// The event a chat message turns into (command_vote, reinforcement or
// reinforcement_dropped), or nullopt for chatter. seq and t are left unset.
std::optional<Event> interpret_chat(const PlatformState& state, const ChatMessage& msg);

struct FrameUpdate {
  std::int64_t tick = 0;
  std::uint64_t evaluation_id = 0;
  RobotId robot_id = 0;
  Species species = Species::kStickbot;
  Color color = Color::kRed;
  int step = 0;
  std::vector<double> joint_angles;
  std::vector<std::array<Vec3, 2>> segment_endpoints;
};

// Callbacks run on the master loop thread.
class SessionObserver {
 public:
  virtual ~SessionObserver() = default;
  virtual void on_event(const Event&, const PlatformState&) {}
  virtual bool wants_frames() const { return false; }
  virtual void on_frame(const FrameUpdate&) {}
  // A finished evaluation once its grace window has passed.
  virtual void on_example(const Example&) {}
};

struct SessionConfig {
  std::uint64_t seed = 1;
  Schedule schedule;
  bool realtime = false;  // pace ticks at 30 wall seconds
  std::optional<OracleConfig> oracle;
  std::optional<std::filesystem::path> out_dir;
};

class Platform {
 public:
  explicit Platform(SessionConfig config);
  ~Platform();
  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;

  void add_observer(SessionObserver* observer) { observers_.push_back(observer); }

  // Session header, initial populations and the tick-0 snapshot.
  void start();
  void run_tick();
  // Final snapshot and outputs. Idempotent.
  void finish();
  // start + n ticks + finish; returns early when stop() is called.
  void run(std::int64_t ticks);

  // Thread-safe.
  void submit_chat(std::string username, std::string text);
  void stop() { stop_requested_ = true; }
  bool stop_requested() const { return stop_requested_; }

  const SessionConfig& config() const { return config_; }
  const PlatformState& state() const { return state_; }
  std::uint64_t log_hash() const { return log_hash_.digest(); }
  std::uint64_t events_written() const { return state_.next_seq; }

 private:
  struct PendingExample;

  const Event& commit(EventKind kind, TimeMs t, nlohmann::json data);
  void process_chat(const ChatMessage& msg);
  void drain_live_chat(TimeMs t);
  void snapshot();
  void finalize_examples(TimeMs now, bool all);
  void hourly(TimeMs t);

  SessionConfig config_;
  PlatformState state_;
  std::optional<OracleCrowd> oracle_;
  std::vector<SessionObserver*> observers_;
  Fnv1a log_hash_;
  Event last_event_;
  std::ofstream log_;
  std::ofstream rows_;
  std::vector<PendingExample> pending_;
  std::optional<std::int64_t> last_snapshot_tick_;
  bool finished_ = false;

  std::mutex chat_mutex_;
  std::deque<std::pair<std::string, std::string>> chat_queue_;
  std::atomic<bool> stop_requested_{false};
};

// Outputs of a session directory.
inline constexpr std::string_view kEventLogName = "events.ndjson";
inline constexpr std::string_view kEvaluationsName = "evaluations.tsv";
inline constexpr std::string_view kLexiconName = "lexicon.json";
inline constexpr std::string_view kSnapshotDir = "snapshots";
std::string snapshot_file_name(std::int64_t tick);

// The robot, command and leaderboard panels as a protocol message body
// (without "version"/"type").
nlohmann::json panel_json(const PlatformState& state, TimeMs now);

}  // namespace crowdbots

#endif  // CROWDBOTS_PLATFORM_H_
