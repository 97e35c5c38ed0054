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

#include "crowdbots/platform.h"

#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "crowdbots/io.h"
#include "crowdbots/replay.h"
#include "support/reference.h"

namespace crowdbots {
namespace {

namespace fs = std::filesystem;

// Records everything a live session publishes.
class Recorder : public SessionObserver {
 public:
  void on_event(const Event& e, const PlatformState& s) override {
    events.push_back(e);
    hashes[e.seq] = state_hash(s);
    primary_sizes.push_back(s.primary.members.size());
    secondary_sizes.push_back(s.secondary.size());
  }
  void on_example(const Example& e) override { examples.push_back(e); }

  std::vector<Event> events;
  std::map<std::uint64_t, std::uint64_t> hashes;
  std::vector<std::size_t> primary_sizes, secondary_sizes;
  std::vector<Example> examples;

  std::vector<const Event*> of(EventKind k) const {
    std::vector<const Event*> out;
    for (const Event& e : events)
      if (e.kind == k) out.push_back(&e);
    return out;
  }
};

// A short session with an injection every 12 ticks.
struct Session {
  explicit Session(std::int64_t ticks, std::uint64_t seed = 3) : dir("platform") {
    SessionConfig config;
    config.seed = seed;
    config.schedule = {
        .window_ticks = 6, .injection_ticks = 12, .generations = 3, .snapshot_ticks = 6};
    config.oracle = OracleConfig{};
    config.out_dir = dir.path();
    Platform p(config);
    p.add_observer(&rec);
    p.run(ticks);
    log_hash = p.log_hash();
    final_hash = state_hash(p.state());
    final_state = p.state();
  }
  fs::path log() const { return dir.path() / kEventLogName; }

  testing::TempDir dir;
  Recorder rec;
  std::uint64_t log_hash = 0;
  std::uint64_t final_hash = 0;
  PlatformState final_state;
};

const Session& shared_session() {
  static const Session s(30);
  return s;
}

std::vector<std::string> log_lines(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::string replay_error(const std::string& log, const fs::path& dir) {
  std::istringstream in(log);
  try {
    replay(in, {.session_dir = dir});
  } catch (const Error& e) {
    return e.code();
  }
  return "ok";
}

TEST(Schedule, ColorsCycleThroughTheSixColorPool) {
  const auto started = shared_session().rec.of(EventKind::kEvaluationStarted);
  ASSERT_GE(started.size(), 7u);
  const std::vector<std::string> want{"red", "green", "blue", "orange", "cyan", "purple", "red"};
  for (int k = 0; k < 7; ++k) EXPECT_EQ(started[k]->data.at("color"), want[k]) << k;
}

TEST(Schedule, InjectedRobotIsShownNextInSilver) {
  const Session& s = shared_session();
  const auto injected = s.rec.of(EventKind::kRobotInjected);
  const auto started = s.rec.of(EventKind::kEvaluationStarted);
  ASSERT_EQ(injected.size(), 2u);
  for (const Event* inj : injected) {
    const std::int64_t tick = inj->data.at("tick");
    const Event* next = started.at(tick + 1);
    EXPECT_EQ(next->data.at("tick"), tick + 1);
    EXPECT_EQ(next->data.at("color"), "silver");
    EXPECT_EQ(next->data.at("robot_id"), inj->data.at("injected_id"));
    EXPECT_EQ(next->data.at("slot"), inj->data.at("primary_index"));
  }
  int silver = 0;
  for (const Event* e : started) silver += e->data.at("color") == "silver";
  EXPECT_EQ(silver, 2);
}

TEST(Schedule, BoundaryArithmetic) {
  const Session& s = shared_session();
  EXPECT_EQ(s.rec.of(EventKind::kEvaluationStarted).size(), 30u);
  EXPECT_EQ(s.rec.of(EventKind::kEvaluationFinished).size(), 30u);
  EXPECT_EQ(s.rec.of(EventKind::kCommandWindowClosed).size(), 30u / 6);
  EXPECT_EQ(s.rec.of(EventKind::kRobotInjected).size(), 30u / 12);
  EXPECT_EQ(s.rec.of(EventKind::kSecondaryGeneration).size(), 3u * (30 / 12));
  // Ticks 0, 6, .., 30 (the final snapshot coincides with the last tick).
  const auto snaps = s.rec.of(EventKind::kSnapshot);
  ASSERT_EQ(snaps.size(), 6u);
  for (std::size_t k = 0; k < snaps.size(); ++k) EXPECT_EQ(snaps[k]->data.at("tick"), 6 * k);
  // Generations come right before their injection, after the 12th tick ends.
  for (const Event* inj : s.rec.of(EventKind::kRobotInjected))
    EXPECT_EQ(inj->t, 30'000 * (inj->data.at("tick").get<std::int64_t>() + 1));
}

TEST(Schedule, SequenceNumbersAndTimesAreMonotone) {
  const auto& ev = shared_session().rec.events;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    EXPECT_EQ(ev[k].seq, k);
    if (k) EXPECT_GE(ev[k].t, ev[k - 1].t);
  }
}

TEST(PlatformProperty, PopulationSizesAreInvariant) {
  const Recorder& r = shared_session().rec;
  // The first events build the populations.
  const std::size_t ready = r.of(EventKind::kSecondaryInitialized).front()->seq;
  for (std::size_t k = ready; k < r.events.size(); ++k) {
    ASSERT_EQ(r.primary_sizes[k], 50u) << k;
    ASSERT_EQ(r.secondary_sizes[k], 200u) << k;
  }
}

// Property: every yes and no that was attributed ends up in exactly one
// dataset row.
TEST(PlatformProperty, VotesAreConserved) {
  const Recorder& r = shared_session().rec;
  std::map<std::uint64_t, std::pair<int, int>> tally;
  for (const Event* e : r.of(EventKind::kReinforcement)) {
    const std::string kind = e->data.at("kind");
    if (kind == "yes") ++tally[e->data.at("evaluation_id")].first;
    if (kind == "no") ++tally[e->data.at("evaluation_id")].second;
  }
  ASSERT_EQ(r.examples.size(), 30u);
  std::int64_t yes = 0, no = 0;
  for (const Example& e : r.examples) {
    EXPECT_EQ(e.e_y, tally[e.evaluation_id].first);
    EXPECT_EQ(e.e_n, tally[e.evaluation_id].second);
    yes += e.e_y;
    no += e.e_n;
  }
  int events = 0;
  for (const auto& [id, c] : tally) events += c.first + c.second;
  EXPECT_EQ(yes + no, events);
  const auto rows = read_dataset(shared_session().dir.path() / kEvaluationsName);
  EXPECT_EQ(rows, r.examples);
}

TEST(Platform, SameSeedSameLog) {
  const Session again(30);
  EXPECT_EQ(again.log_hash, shared_session().log_hash);
  EXPECT_EQ(read_file(again.log()), read_file(shared_session().log()));
  EXPECT_NE(Session(30, 4).log_hash, shared_session().log_hash);
}

TEST(Platform, LogHashCoversTheFileBytes) {
  Fnv1a h;
  h.update(read_file(shared_session().log()));
  EXPECT_EQ(h.digest(), shared_session().log_hash);
}

// Property: replay reproduces the live state after every single event.
TEST(ReplayProperty, EquivalentToLiveAtEveryEvent) {
  const Session& s = shared_session();
  std::size_t checked = 0;
  const ReplayResult r = replay(s.log(), {.on_event = [&](const Event& e, const PlatformState& st) {
                                  ASSERT_EQ(state_hash(st), s.rec.hashes.at(e.seq)) << e.seq;
                                  ++checked;
                                }});
  EXPECT_EQ(checked, s.rec.events.size());
  EXPECT_EQ(r.snapshots_verified, 6u);
  EXPECT_FALSE(r.truncated);
  EXPECT_EQ(r.log_hash, s.log_hash);
  EXPECT_EQ(r.state, s.final_state);
}

TEST(Replay, UntilStopsAtTheRequestedEvent) {
  const Session& s = shared_session();
  const std::uint64_t mid = s.rec.events.size() / 2;
  const ReplayResult r = replay(s.log(), {.until_seq = mid});
  EXPECT_EQ(r.events, mid + 1);
  EXPECT_EQ(state_hash(r.state), s.rec.hashes.at(mid));
}

TEST(Replay, TornFinalLineIsIgnored) {
  const Session& s = shared_session();
  auto lines = log_lines(s.log());
  const std::size_t keep = lines.size() / 3;
  std::string log;
  for (std::size_t k = 0; k < keep; ++k) log += lines[k] + "\n";
  log += lines[keep].substr(0, lines[keep].size() / 2);
  std::istringstream in(log);
  const ReplayResult r = replay(in, {.session_dir = s.dir.path()});
  EXPECT_TRUE(r.truncated);
  EXPECT_EQ(r.events, keep);
  EXPECT_EQ(state_hash(r.state), s.rec.hashes.at(keep - 1));
}

TEST(Replay, RejectsSwappedEvents) {
  const Session& s = shared_session();
  auto lines = log_lines(s.log());
  std::swap(lines[100], lines[101]);
  EXPECT_EQ(replay_error(join(lines), s.dir.path()), "sequence_violation");
  auto dropped = log_lines(s.log());
  dropped.erase(dropped.begin() + 100);
  EXPECT_EQ(replay_error(join(dropped), s.dir.path()), "sequence_violation");
  auto headless = log_lines(s.log());
  headless.erase(headless.begin());
  EXPECT_EQ(replay_error(join(headless), s.dir.path()), "sequence_violation");
}

TEST(Replay, RejectsTamperedSnapshotHash) {
  const Session& s = shared_session();
  auto lines = log_lines(s.log());
  for (auto& l : lines) {
    nlohmann::json j = nlohmann::json::parse(l);
    if (j.at("kind") == "snapshot" && j.at("data").at("tick") == 12) {
      j["data"]["hash"] = "0123456789abcdef";
      l = j.dump();
    }
  }
  EXPECT_EQ(replay_error(join(lines), s.dir.path()), "snapshot_mismatch");
}

TEST(Replay, RejectsTamperedSnapshotFile) {
  const Session s(7);
  const fs::path f = s.dir.path() / kSnapshotDir / snapshot_file_name(6);
  std::string bytes = read_file(f);
  PlatformState other = deserialize_state(bytes);
  other.generations += 1;
  write_file(f, serialize_state(other));
  EXPECT_EQ(replay_error(read_file(s.log()), s.dir.path()), "snapshot_mismatch");
}

TEST(Replay, RejectsDerivedEventsThatDisagreeWithTheirChat) {
  const Session& s = shared_session();
  auto lines = log_lines(s.log());
  bool tampered = false;
  for (auto& l : lines) {
    nlohmann::json j = nlohmann::json::parse(l);
    if (!tampered && j.at("kind") == "reinforcement" && j.at("data").at("kind") == "yes") {
      j["data"]["kind"] = "no";
      l = j.dump();
      tampered = true;
    }
  }
  ASSERT_TRUE(tampered);
  EXPECT_EQ(replay_error(join(lines), s.dir.path()), "inconsistent_log");
}

TEST(Replay, RejectsAnotherSpeciesTable) {
  const Session& s = shared_session();
  auto lines = log_lines(s.log());
  nlohmann::json j = nlohmann::json::parse(lines[0]);
  j["data"]["species_table_checksum"] = "0000000000000000";
  lines[0] = j.dump();
  EXPECT_EQ(replay_error(join(lines), s.dir.path()), "checksum_mismatch");
}

TEST(Replay, RejectsGarbageInTheMiddle) {
  const Session& s = shared_session();
  auto lines = log_lines(s.log());
  lines[50] = "{not json";
  EXPECT_EQ(replay_error(join(lines), s.dir.path()), "malformed_input");
}

TEST(Snapshot, SerializationRoundTrip) {
  const Session& s = shared_session();
  const std::string bytes = serialize_state(s.final_state);
  const PlatformState back = deserialize_state(bytes);
  EXPECT_EQ(back, s.final_state);
  EXPECT_EQ(state_hash(back), s.final_hash);
  EXPECT_EQ(serialize_state(back), bytes);
  EXPECT_EQ(state_from_json(state_to_json(s.final_state)), s.final_state);
  EXPECT_THROW(deserialize_state(bytes.substr(0, bytes.size() / 2)), FormatError);
  // A snapshot holds the state just before its own snapshot event.
  const Event* last = s.rec.of(EventKind::kSnapshot).back();
  const PlatformState file =
      deserialize_state(read_file(s.dir.path() / kSnapshotDir / snapshot_file_name(30)));
  EXPECT_EQ(state_hash(file), s.rec.hashes.at(last->seq - 1));
  EXPECT_EQ(hex64(state_hash(file)), last->data.at("hash"));
}

TEST(Event, JsonRoundTrip) {
  for (const Event& e : shared_session().rec.events) {
    const Event back = Event::from_json(nlohmann::json::parse(e.to_line()));
    ASSERT_EQ(back.to_line(), e.to_line());
  }
  for (int k = 0; k <= static_cast<int>(EventKind::kSnapshot); ++k) {
    const auto kind = static_cast<EventKind>(k);
    EXPECT_EQ(parse_event_kind(event_kind_name(kind)), kind);
  }
  EXPECT_THROW(parse_event_kind("robot_exploded"), FormatError);
  EXPECT_THROW(Event::from_json({{"seq", 1}}), FormatError);
}

TEST(Chat, InterpretationFollowsTheTimeline) {
  const Session s(3);
  const PlatformState& st = s.final_state;
  // After finish the last evaluation (tick 2, blue) has ended at t = 90 s.
  const auto at = [&](TimeMs t, std::string text) {
    return interpret_chat(st, {t, "viewer", std::move(text)});
  };
  const auto late = at(91'000, "!by");
  ASSERT_TRUE(late.has_value());
  EXPECT_EQ(late->kind, EventKind::kReinforcement);
  EXPECT_EQ(late->data.at("color"), "blue");
  const auto dropped = at(95'000, "!by");
  ASSERT_TRUE(dropped.has_value());
  EXPECT_EQ(dropped->kind, EventKind::kReinforcementDropped);
  const auto vote = at(91'000, "walk backwards");
  ASSERT_TRUE(vote.has_value());
  EXPECT_EQ(vote->kind, EventKind::kCommandVote);
    EXPECT_FALSE(at(91'000, "this robot is the best one ever").has_value());
  EXPECT_FALSE(at(91'000, "!xy").has_value());
}

TEST(Panel, ShowsRobotCommandAndLeaderboards) {
  const Session& s = shared_session();
  const nlohmann::json p = panel_json(s.final_state, 30 * 30'000);
  for (const char* key : {"robot", "command", "top_commands", "top_users"})
    EXPECT_TRUE(p.contains(key)) << key;
  EXPECT_LE(p.at("top_commands").size(), 5u);
  EXPECT_LE(p.at("top_users").size(), 5u);
  EXPECT_GE(p.at("command").at("remaining_ms").get<std::int64_t>(), 0);
}

}  // namespace
}  // namespace crowdbots
