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

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <thread>

#include "crowdbots/io.h"
#include "crowdbots/rng.h"
#include "crowdbots/simulation.h"

namespace crowdbots {
namespace {

constexpr std::array<std::string_view, 14> kEventNames = {
    "session_started",    "robot_born",           "secondary_initialized",
    "evaluation_started", "chat_message",         "command_vote",
    "reinforcement",      "reinforcement_dropped", "evaluation_finished",
    "robot_replaced",     "command_window_closed", "secondary_generation",
    "robot_injected",     "snapshot"};

constexpr std::string_view kLogFormat = "crowdbots-events";
constexpr std::string_view kSnapshotFormat = "crowdbots-snapshot";

Error inconsistent(const std::string& what) { return Error("inconsistent_log", what); }

Species species_field(const nlohmann::json& j) {
  return parse_species(j.get<std::string>());
}

Color color_field(const nlohmann::json& j) {
  const auto c = color_from_name(j.get<std::string>());
  if (!c) throw FormatError("unknown color '" + j.get<std::string>() + "'");
  return *c;
}

VoteKind kind_field(const nlohmann::json& j) {
  const auto k = vote_kind_from_name(j.get<std::string>());
  if (!k) throw FormatError("unknown vote kind '" + j.get<std::string>() + "'");
  return *k;
}

nlohmann::json schedule_json(const Schedule& s) {
  return {{"window_ticks", s.window_ticks},
          {"injection_ticks", s.injection_ticks},
          {"generations", s.generations},
          {"snapshot_ticks", s.snapshot_ticks}};
}

Schedule schedule_from(const nlohmann::json& j) {
  Schedule s;
  s.window_ticks = j.at("window_ticks").get<std::int64_t>();
  s.injection_ticks = j.at("injection_ticks").get<std::int64_t>();
  s.generations = j.at("generations").get<int>();
  s.snapshot_ticks = j.at("snapshot_ticks").get<std::int64_t>();
  if (s.window_ticks < 1 || s.injection_ticks < 1 || s.generations < 0 || s.snapshot_ticks < 1)
    throw FormatError("schedule intervals must be positive");
  return s;
}

std::uint64_t species_seed(std::uint64_t generation_seed, Species s) {
  return derive_seed(generation_seed, {static_cast<std::uint64_t>(s)});
}

RobotRecord* slot_with(PlatformState& s, std::size_t slot, RobotId id) {
  if (slot >= s.primary.members.size()) return nullptr;
  RobotRecord& r = s.primary.members[slot];
  return r.genome.id == id ? &r : nullptr;
}

EvaluationTally& tally_for(PlatformState& s, std::uint64_t id) {
  for (EvaluationTally& t : s.recent)
    if (t.evaluation_id == id) return t;
  throw inconsistent("evaluation " + std::to_string(id) + " is not on screen");
}

void take_id(PlatformState& s, RobotId id) {
  if (id != s.next_robot_id)
    throw inconsistent("robot id " + std::to_string(id) + " out of order, expected " +
                       std::to_string(s.next_robot_id));
  ++s.next_robot_id;
}

// Reducer bodies, one per event kind.

void on_session_started(PlatformState& s, const nlohmann::json& d) {
  if (s.started) throw inconsistent("second session_started");
  if (d.at("format") != kLogFormat || d.at("version") != 1)
    throw FormatError("not a version-1 event log");
  if (d.at("species_table_checksum") != hex64(species_table_checksum()))
    throw Error("checksum_mismatch", "log was recorded with a different species table");
  s.started = true;
  s.seed = d.at("seed").get<std::uint64_t>();
  s.schedule = schedule_from(d.at("schedule"));
  s.crowd = CrowdState(s.seed);
}

void on_robot_born(PlatformState& s, const nlohmann::json& d) {
  if (d.at("slot").get<std::size_t>() != s.primary.members.size())
    throw inconsistent("robot_born slot out of order");
  const RobotId id = d.at("robot_id").get<RobotId>();
  take_id(s, id);
  RobotRecord r;
  r.genome = random_genome(species_field(d.at("species")), d.at("seed").get<std::uint64_t>(), id);
  r.born_tick = s.ticks_done;
  s.primary.members.push_back(std::move(r));
}

void on_secondary_initialized(PlatformState& s, const nlohmann::json& d) {
  const auto& fit = d.at("fitness");
  if (fit.size() != kSpeciesCount) throw inconsistent("secondary_initialized needs 10 species");
  for (Species sp : kAllSpecies) {
    const auto& f = fit.at(static_cast<std::size_t>(sp));
    if (f.size() != kSecondaryPerSpecies) throw inconsistent("secondary species needs 20 members");
    Subpopulation& sub = s.secondary.species[static_cast<std::size_t>(sp)];
    sub.clear();
    for (int k = 0; k < kSecondaryPerSpecies; ++k) {
      const RobotId id = s.next_robot_id++;
      sub.push_back({random_genome(sp,
                                   derive_seed(s.seed, Stream::kSecondaryInit,
                                               static_cast<std::uint64_t>(sp), k),
                                   id),
                     f.at(k).get<double>()});
    }
  }
}

void on_evaluation_started(PlatformState& s, const Event& e) {
  const auto& d = e.data;
  const auto slot = d.at("slot").get<std::size_t>();
  const RobotId id = d.at("robot_id").get<RobotId>();
  RobotRecord* r = slot_with(s, slot, id);
  if (!r) throw inconsistent("robot " + std::to_string(id) + " is not in slot " + std::to_string(slot));
  const std::uint64_t eval_id = d.at("evaluation_id").get<std::uint64_t>();
  if (eval_id != s.next_evaluation_id) throw inconsistent("evaluation id out of order");
  const std::string command = d.at("command").get<std::string>();
  if (command != s.crowd.current_command()) throw inconsistent("evaluation under a stale command");
  const double code = s.crowd.current_code();
  if (code != d.at("code").get<double>()) throw inconsistent("command code mismatch");
  const Color color = color_field(d.at("color"));
  const bool silver = r->silver_pending;
  if (silver != (color == Color::kSilver)) throw inconsistent("silver display mismatch");
  if (!silver && color != kColorCycle[s.color_index % kColorCycle.size()])
    throw inconsistent("color out of cycle");
  if (!silver) ++s.color_index;
  r->silver_pending = false;
  ++s.next_evaluation_id;

  std::erase_if(s.recent, [&](const EvaluationTally& t) {
    return t.end && *t.end + kAttributionGraceMs < e.t;
  });
  EvaluationTally t;
  t.evaluation_id = eval_id;
  t.tick = d.at("tick").get<std::int64_t>();
  t.slot = slot;
  t.robot_id = id;
  t.species = r->genome.species;
  t.command = command;
  t.code = code;
  t.color = color;
  t.start = e.t;
  s.recent.push_back(std::move(t));
}

void on_command_vote(PlatformState& s, const Event& e) {
  const auto text = e.data.at("text").get<std::string>();
  const auto canon = canonical_command(text);
  if (!canon || *canon != text) throw inconsistent("'" + text + "' is not a canonical command");
  const double code = s.crowd.record_vote(e.data.at("user").get<std::string>(), text, e.t);
  if (code != e.data.at("code").get<double>()) throw inconsistent("command code mismatch");
}

void on_reinforcement(PlatformState& s, const Event& e) {
  const auto& d = e.data;
  EvaluationTally& t = tally_for(s, d.at("evaluation_id").get<std::uint64_t>());
  if (t.robot_id != d.at("robot_id").get<RobotId>()) throw inconsistent("reinforcement robot mismatch");
  if (t.color != color_field(d.at("color"))) throw inconsistent("reinforcement color mismatch");
  const VoteKind kind = kind_field(d.at("kind"));
  RobotRecord* r = slot_with(s, t.slot, t.robot_id);
  switch (kind) {
    case VoteKind::kYes: ++t.yes; if (r) ++r->yeses; break;
    case VoteKind::kNo: ++t.no; if (r) ++r->nos; break;
    case VoteKind::kLike: ++t.likes; if (r) ++r->likes; break;
    case VoteKind::kDislike: ++t.dislikes; if (r) ++r->dislikes; break;
  }
  s.crowd.record_reinforcement(d.at("user").get<std::string>(), t.command, kind, e.t);
}

void on_evaluation_finished(PlatformState& s, const Event& e) {
  EvaluationTally& t = tally_for(s, e.data.at("evaluation_id").get<std::uint64_t>());
  if (t.end) throw inconsistent("evaluation finished twice");
  t.end = e.t;
  if (RobotRecord* r = slot_with(s, t.slot, t.robot_id)) ++r->evaluations;
  s.ticks_done = e.data.at("tick").get<std::int64_t>() + 1;
}

void on_robot_replaced(PlatformState& s, const nlohmann::json& d) {
  const auto winner = d.at("winner").get<std::size_t>();
  const auto loser = d.at("loser").get<std::size_t>();
  if (!slot_with(s, winner, d.at("winner_id").get<RobotId>()) ||
      !slot_with(s, loser, d.at("replaced_id").get<RobotId>()) || winner == loser)
    throw inconsistent("robot_replaced does not match the population");
  const RobotId child_id = d.at("child_id").get<RobotId>();
  take_id(s, child_id);
  RobotRecord child;
  child.genome = mutate(s.primary.members[winner].genome, d.at("mutation_seed").get<std::uint64_t>(),
                        child_id);
  child.born_tick = s.ticks_done;
  s.primary.members[loser] = std::move(child);
}

void on_window_closed(PlatformState& s, const Event& e) {
  const std::string winner = s.crowd.close_window(e.t);
  if (winner != e.data.at("winner").get<std::string>()) throw inconsistent("window winner mismatch");
}

void on_secondary_generation(PlatformState& s, const nlohmann::json& d) {
  if (d.at("generation").get<std::uint64_t>() != s.generations)
    throw inconsistent("secondary generation out of order");
  const auto gen_seed = d.at("seed").get<std::uint64_t>();
  std::array<std::vector<AcceptedChild>, kSpeciesCount> accepted;
  int last_species = -1;
  for (const auto& a : d.at("accepted")) {
    const Species sp = species_field(a.at(0));
    if (static_cast<int>(sp) < last_species) throw inconsistent("generation species out of order");
    last_species = static_cast<int>(sp);
    AcceptedChild c{a.at(1).get<std::size_t>(), a.at(2).get<RobotId>(), a.at(3).get<double>()};
    take_id(s, c.child_id);
    if (c.index >= s.secondary.species[static_cast<std::size_t>(sp)].size())
      throw inconsistent("hill-climber index out of range");
    accepted[static_cast<std::size_t>(sp)].push_back(c);
  }
  for (Species sp : kAllSpecies)
    apply_hill_climb(s.secondary.species[static_cast<std::size_t>(sp)], species_seed(gen_seed, sp),
                     accepted[static_cast<std::size_t>(sp)]);
  ++s.generations;
}

void on_robot_injected(PlatformState& s, const nlohmann::json& d) {
  Injection inj;
  inj.species = species_field(d.at("species"));
  inj.secondary_index = d.at("secondary_index").get<std::size_t>();
  inj.primary_index = d.at("primary_index").get<std::size_t>();
  inj.replaced_id = d.at("replaced_id").get<RobotId>();
  inj.injected_id = d.at("injected_id").get<RobotId>();
  inj.refill_seed = d.at("refill_seed").get<std::uint64_t>();
  inj.refill_id = d.at("refill_id").get<RobotId>();
  inj.refill_fitness = d.at("refill_fitness").get<double>();
  const Subpopulation& sub = s.secondary.species[static_cast<std::size_t>(inj.species)];
  if (inj.secondary_index >= sub.size() || sub[inj.secondary_index].genome.id != inj.injected_id ||
      !slot_with(s, inj.primary_index, inj.replaced_id))
    throw inconsistent("robot_injected does not match the populations");
  take_id(s, inj.refill_id);
  apply_injection(s.secondary, s.primary, inj, s.ticks_done);
}

nlohmann::json record_json(const RobotRecord& r) {
  return {{"genome", genome_to_json(r.genome)},
          {"likes", r.likes},
          {"dislikes", r.dislikes},
          {"yeses", r.yeses},
          {"nos", r.nos},
          {"evaluations", r.evaluations},
          {"born_tick", r.born_tick},
          {"silver_pending", r.silver_pending}};
}

RobotRecord record_from(const nlohmann::json& j) {
  RobotRecord r;
  r.genome = genome_from_json(j.at("genome"));
  r.likes = j.at("likes").get<std::int64_t>();
  r.dislikes = j.at("dislikes").get<std::int64_t>();
  r.yeses = j.at("yeses").get<std::int64_t>();
  r.nos = j.at("nos").get<std::int64_t>();
  r.evaluations = j.at("evaluations").get<std::int64_t>();
  r.born_tick = j.at("born_tick").get<std::int64_t>();
  r.silver_pending = j.at("silver_pending").get<bool>();
  return r;
}

nlohmann::json tally_json(const EvaluationTally& t) {
  return {{"evaluation_id", t.evaluation_id},
          {"tick", t.tick},
          {"slot", t.slot},
          {"robot_id", t.robot_id},
          {"species", species_name(t.species)},
          {"command", t.command},
          {"code", t.code},
          {"color", color_name(t.color)},
          {"start", t.start},
          {"end", t.end ? nlohmann::json(*t.end) : nlohmann::json(nullptr)},
          {"yes", t.yes},
          {"no", t.no},
          {"likes", t.likes},
          {"dislikes", t.dislikes}};
}

EvaluationTally tally_from(const nlohmann::json& j) {
  EvaluationTally t;
  t.evaluation_id = j.at("evaluation_id").get<std::uint64_t>();
  t.tick = j.at("tick").get<std::int64_t>();
  t.slot = j.at("slot").get<std::size_t>();
  t.robot_id = j.at("robot_id").get<RobotId>();
  t.species = species_field(j.at("species"));
  t.command = j.at("command").get<std::string>();
  t.code = j.at("code").get<double>();
  t.color = color_field(j.at("color"));
  t.start = j.at("start").get<TimeMs>();
  if (!j.at("end").is_null()) t.end = j.at("end").get<TimeMs>();
  t.yes = j.at("yes").get<std::int64_t>();
  t.no = j.at("no").get<std::int64_t>();
  t.likes = j.at("likes").get<std::int64_t>();
  t.dislikes = j.at("dislikes").get<std::int64_t>();
  return t;
}

std::int64_t wall_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

// Virtual time of simulation step `step` within a tick starting at `start`:
// 1800 steps are shown over the 30 s window.
TimeMs step_time(TimeMs start, int step) {
  return start + static_cast<TimeMs>(step) * kTickMs / kEvaluationSteps;
}

}  // namespace

std::string_view event_kind_name(EventKind k) { return kEventNames[static_cast<std::size_t>(k)]; }

EventKind parse_event_kind(std::string_view name) {
  for (std::size_t i = 0; i < kEventNames.size(); ++i)
    if (kEventNames[i] == name) return static_cast<EventKind>(i);
  throw FormatError("unknown event kind '" + std::string(name) + "'");
}

nlohmann::json Event::to_json() const {
  nlohmann::json j = {{"seq", seq}, {"t", t}, {"kind", event_kind_name(kind)}, {"data", data}};
  if (wall) j["wall"] = *wall;
  return j;
}

Event Event::from_json(const nlohmann::json& j) {
  try {
    Event e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.t = j.at("t").get<TimeMs>();
    e.kind = parse_event_kind(j.at("kind").get<std::string>());
    e.data = j.at("data");
    if (!e.data.is_object()) throw FormatError("event data must be an object");
    if (j.contains("wall")) e.wall = j.at("wall").get<std::int64_t>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("event: ") + ex.what());
  }
}

std::string Event::to_line() const { return to_json().dump() + '\n'; }

std::vector<BroadcastSlot> PlatformState::timeline() const {
  std::vector<BroadcastSlot> out;
  for (const EvaluationTally& t : recent) out.push_back({t.evaluation_id, t.color, t.start, t.end});
  return out;
}

const EvaluationTally* PlatformState::find_evaluation(std::uint64_t id) const {
  for (const EvaluationTally& t : recent)
    if (t.evaluation_id == id) return &t;
  return nullptr;
}

const EvaluationTally* PlatformState::on_screen() const {
  for (const EvaluationTally& t : recent)
    if (!t.end) return &t;
  return nullptr;
}

nlohmann::json state_to_json(const PlatformState& s) {
  nlohmann::json primary = nlohmann::json::array();
  for (const RobotRecord& r : s.primary.members) primary.push_back(record_json(r));
  nlohmann::json secondary = nlohmann::json::array();
  for (const Subpopulation& sub : s.secondary.species) {
    nlohmann::json m = nlohmann::json::array();
    for (const SecondaryMember& x : sub)
      m.push_back({{"genome", genome_to_json(x.genome)}, {"fitness", x.fitness}});
    secondary.push_back(std::move(m));
  }
  nlohmann::json recent = nlohmann::json::array();
  for (const EvaluationTally& t : s.recent) recent.push_back(tally_json(t));
  return {{"format", kSnapshotFormat},
          {"version", 1},
          {"species_table_checksum", hex64(species_table_checksum())},
          {"started", s.started},
          {"seed", s.seed},
          {"schedule", schedule_json(s.schedule)},
          {"next_seq", s.next_seq},
          {"last_time", s.last_time},
          {"ticks_done", s.ticks_done},
          {"next_robot_id", s.next_robot_id},
          {"next_evaluation_id", s.next_evaluation_id},
          {"generations", s.generations},
          {"color_index", s.color_index},
          {"primary", std::move(primary)},
          {"secondary", std::move(secondary)},
          {"crowd", s.crowd.to_json()},
          {"recent", std::move(recent)}};
}

PlatformState state_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != kSnapshotFormat || j.at("version") != 1)
      throw FormatError("not a version-1 snapshot");
    if (j.at("species_table_checksum") != hex64(species_table_checksum()))
      throw Error("checksum_mismatch", "snapshot was taken with a different species table");
    PlatformState s;
    s.started = j.at("started").get<bool>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.schedule = schedule_from(j.at("schedule"));
    s.next_seq = j.at("next_seq").get<std::uint64_t>();
    s.last_time = j.at("last_time").get<TimeMs>();
    s.ticks_done = j.at("ticks_done").get<std::int64_t>();
    s.next_robot_id = j.at("next_robot_id").get<RobotId>();
    s.next_evaluation_id = j.at("next_evaluation_id").get<std::uint64_t>();
    s.generations = j.at("generations").get<std::uint64_t>();
    s.color_index = j.at("color_index").get<std::uint64_t>();
    for (const auto& r : j.at("primary")) s.primary.members.push_back(record_from(r));
    const auto& sec = j.at("secondary");
    if (sec.size() != kSpeciesCount) throw FormatError("snapshot needs 10 secondary species");
    for (std::size_t k = 0; k < kSpeciesCount; ++k)
      for (const auto& m : sec[k])
        s.secondary.species[k].push_back({genome_from_json(m.at("genome")), m.at("fitness").get<double>()});
    s.crowd = CrowdState::from_json(j.at("crowd"));
    for (const auto& t : j.at("recent")) s.recent.push_back(tally_from(t));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("snapshot: ") + e.what());
  }
}

std::string serialize_state(const PlatformState& s) {
  const std::vector<std::uint8_t> bytes = nlohmann::json::to_cbor(state_to_json(s));
  return {bytes.begin(), bytes.end()};
}

PlatformState deserialize_state(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("snapshot: ") + e.what());
  }
  return state_from_json(j);
}

std::uint64_t state_hash(const PlatformState& s) { return fnv1a(serialize_state(s)); }

void check_event_order(const PlatformState& s, const Event& e) {
  if (e.seq != s.next_seq)
    throw Error("sequence_violation", "expected event " + std::to_string(s.next_seq) + ", got " +
                                          std::to_string(e.seq));
  if (e.t < s.last_time)
    throw Error("sequence_violation", "event " + std::to_string(e.seq) + " goes back in time");
  if (!s.started && e.kind != EventKind::kSessionStarted)
    throw Error("sequence_violation", "log does not begin with session_started");
}

void apply_event(PlatformState& s, const Event& e) {
  check_event_order(s, e);
  try {
    switch (e.kind) {
      case EventKind::kSessionStarted: on_session_started(s, e.data); break;
      case EventKind::kRobotBorn: on_robot_born(s, e.data); break;
      case EventKind::kSecondaryInitialized: on_secondary_initialized(s, e.data); break;
      case EventKind::kEvaluationStarted: on_evaluation_started(s, e); break;
      case EventKind::kChatMessage: break;  // effects arrive as the derived event
      case EventKind::kCommandVote: on_command_vote(s, e); break;
      case EventKind::kReinforcement: on_reinforcement(s, e); break;
      case EventKind::kReinforcementDropped: break;
      case EventKind::kEvaluationFinished: on_evaluation_finished(s, e); break;
      case EventKind::kRobotReplaced: on_robot_replaced(s, e.data); break;
      case EventKind::kCommandWindowClosed: on_window_closed(s, e); break;
      case EventKind::kSecondaryGeneration: on_secondary_generation(s, e.data); break;
      case EventKind::kRobotInjected: on_robot_injected(s, e.data); break;
      case EventKind::kSnapshot: break;
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError("event " + std::to_string(e.seq) + ": " + ex.what());
  }
  s.next_seq = e.seq + 1;
  s.last_time = e.t;
}

std::optional<Event> interpret_chat(const PlatformState& state, const ChatMessage& msg) {
  const ParsedMessage parsed = parse_message(msg.text);
  Event e;
  e.t = msg.timestamp;
  if (const auto* vote = std::get_if<CommandVote>(&parsed)) {
    Lexicon lex = state.crowd.lexicon();
    e.kind = EventKind::kCommandVote;
    e.data = {{"user", msg.username}, {"text", vote->text}, {"code", lex.code(vote->text)}};
    return e;
  }
  const auto* input = std::get_if<ReinforcementInput>(&parsed);
  if (!input) return std::nullopt;
  const Attribution a = attribute_reinforcement(*input, state.timeline(), msg.timestamp);
  nlohmann::json d = {{"user", msg.username},
                      {"color", color_name(input->color)},
                      {"kind", vote_kind_name(input->kind)}};
  if (a.outcome == AttributionOutcome::kAttributed) {
    e.kind = EventKind::kReinforcement;
    d["evaluation_id"] = a.evaluation_id;
    d["robot_id"] = state.find_evaluation(a.evaluation_id)->robot_id;
  } else {
    e.kind = EventKind::kReinforcementDropped;
    d["outcome"] = a.outcome == AttributionOutcome::kDropped ? "dropped" : "rejected";
    d["reason"] = a.reason;
  }
  e.data = std::move(d);
  return e;
}

std::string snapshot_file_name(std::int64_t tick) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "snapshot-%06lld.cbor", static_cast<long long>(tick));
  return buf;
}

nlohmann::json panel_json(const PlatformState& s, TimeMs now) {
  nlohmann::json robot = nullptr;
  std::int64_t tick = s.ticks_done;
  if (const EvaluationTally* t = s.on_screen()) {
    tick = t->tick;
    robot = {{"id", t->robot_id},
             {"species", species_name(t->species)},
             {"color", color_name(t->color)},
             {"evaluation_id", t->evaluation_id}};
    if (t->slot < s.primary.members.size() && s.primary.members[t->slot].genome.id == t->robot_id) {
      const RobotRecord& r = s.primary.members[t->slot];
      robot["age_ticks"] = t->tick - r.born_tick;
      robot["yes"] = r.yeses;
      robot["no"] = r.nos;
      robot["likes"] = r.likes;
      robot["dislikes"] = r.dislikes;
      robot["evaluations"] = r.evaluations;
    }
  }
  const std::int64_t window = s.schedule.window_ticks;
  const TimeMs closes = (tick / window + 1) * window * kTickMs;
  const Leaderboards boards = s.crowd.leaderboards();
  nlohmann::json commands = nlohmann::json::array();
  for (const auto& [text, score] : boards.commands) commands.push_back({{"text", text}, {"score", score}});
  nlohmann::json users = nlohmann::json::array();
  for (const auto& [name, points] : boards.users) users.push_back({{"username", name}, {"points", points}});
  const auto code = s.crowd.lexicon().find(s.crowd.current_command());
  return {{"tick", tick},
          {"robot", robot},
          {"command",
           {{"text", s.crowd.current_command()},
            {"code", code ? nlohmann::json(*code) : nlohmann::json(nullptr)},
            {"remaining_ms", std::max<TimeMs>(0, closes - now)}}},
          {"top_commands", commands},
          {"top_users", users}};
}

// Live session.

struct Platform::PendingExample {
  std::uint64_t evaluation_id = 0;
  TimeMs end = 0;
  FeatureMatrix features;
};

Platform::Platform(SessionConfig config) : config_(std::move(config)) {
  if (config_.oracle) oracle_.emplace(*config_.oracle, config_.seed);
  if (config_.out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(*config_.out_dir / kSnapshotDir, ec);
    if (ec) throw Error("io_error", "cannot create " + config_.out_dir->string() + ": " + ec.message());
    log_.open(*config_.out_dir / kEventLogName, std::ios::binary | std::ios::trunc);
    rows_.open(*config_.out_dir / kEvaluationsName, std::ios::binary | std::ios::trunc);
    if (!log_ || !rows_) throw Error("io_error", "cannot write to " + config_.out_dir->string());
    write_dataset_header(rows_);
  }
}

Platform::~Platform() = default;

const Event& Platform::commit(EventKind kind, TimeMs t, nlohmann::json data) {
  last_event_ = Event{state_.next_seq, t, std::nullopt, kind, std::move(data)};
  if (config_.realtime) last_event_.wall = wall_ms();
  apply_event(state_, last_event_);
  const std::string line = last_event_.to_line();
  log_hash_.update(line);
  if (log_.is_open()) log_ << line;
  for (SessionObserver* o : observers_) o->on_event(last_event_, state_);
  return last_event_;
}

void Platform::start() {
  if (state_.started) return;
  commit(EventKind::kSessionStarted, 0,
         {{"format", kLogFormat},
          {"version", 1},
          {"seed", config_.seed},
          {"species_table_checksum", hex64(species_table_checksum())},
          {"schedule", schedule_json(config_.schedule)},
          {"realtime", config_.realtime},
          {"oracle", config_.oracle ? config_.oracle->to_json() : nlohmann::json(nullptr)}});
  std::size_t slot = 0;
  for (Species s : kAllSpecies)
    for (int k = 0; k < kPrimaryPerSpecies; ++k)
      commit(EventKind::kRobotBorn, 0,
             {{"slot", slot++},
              {"species", species_name(s)},
              {"seed", derive_seed(config_.seed, Stream::kPrimaryInit, static_cast<std::uint64_t>(s), k)},
              {"robot_id", state_.next_robot_id}});
  RobotId id = state_.next_robot_id;
  const SecondaryPopulation sec = initial_secondary(config_.seed, id);
  nlohmann::json fitness = nlohmann::json::array();
  for (const Subpopulation& sub : sec.species) {
    nlohmann::json f = nlohmann::json::array();
    for (const SecondaryMember& m : sub) f.push_back(m.fitness);
    fitness.push_back(std::move(f));
  }
  commit(EventKind::kSecondaryInitialized, 0, {{"fitness", std::move(fitness)}});
  snapshot();
}

void Platform::submit_chat(std::string username, std::string text) {
  std::lock_guard lock(chat_mutex_);
  chat_queue_.emplace_back(std::move(username), std::move(text));
}

void Platform::process_chat(const ChatMessage& msg) {
  commit(EventKind::kChatMessage, msg.timestamp, {{"user", msg.username}, {"text", msg.text}});
  if (auto derived = interpret_chat(state_, msg)) commit(derived->kind, msg.timestamp, std::move(derived->data));
}

void Platform::drain_live_chat(TimeMs t) {
  std::deque<std::pair<std::string, std::string>> batch;
  {
    std::lock_guard lock(chat_mutex_);
    batch.swap(chat_queue_);
  }
  for (auto& [user, text] : batch) process_chat({t, std::move(user), std::move(text)});
}

void Platform::snapshot() {
  const std::string bytes = serialize_state(state_);
  const std::string name = snapshot_file_name(state_.ticks_done);
  if (config_.out_dir) write_file(*config_.out_dir / kSnapshotDir / name, bytes);
  last_snapshot_tick_ = state_.ticks_done;
  commit(EventKind::kSnapshot, state_.last_time,
         {{"tick", state_.ticks_done},
          {"hash", hex64(fnv1a(bytes))},
          {"file", std::string(kSnapshotDir) + "/" + name}});
}

void Platform::finalize_examples(TimeMs now, bool all) {
  auto it = pending_.begin();
  for (; it != pending_.end(); ++it) {
    if (!all && it->end + kAttributionGraceMs > now) break;
    const EvaluationTally* t = state_.find_evaluation(it->evaluation_id);
    if (!t) throw Error("internal", "evaluation left the tally before it was recorded");
    Example ex;
    ex.evaluation_id = t->evaluation_id;
    ex.robot_id = t->robot_id;
    ex.species = t->species;
    ex.command = t->command;
    ex.e_y = t->yes;
    ex.e_n = t->no;
    ex.o = normalized_reinforcement(t->yes, t->no, t->command).value_or(std::nan(""));
    ex.features = it->features;
    if (rows_.is_open()) write_dataset_row(rows_, ex);
    for (SessionObserver* o : observers_) o->on_example(ex);
  }
  pending_.erase(pending_.begin(), it);
}

void Platform::hourly(TimeMs t) {
  for (int g = 0; g < config_.schedule.generations; ++g) {
    const std::uint64_t gen_seed = derive_seed(config_.seed, Stream::kHillClimb, state_.generations);
    RobotId id = state_.next_robot_id;
    nlohmann::json accepted = nlohmann::json::array();
    for (Species s : kAllSpecies) {
      Subpopulation sub = state_.secondary.species[static_cast<std::size_t>(s)];
      for (const AcceptedChild& c : hill_climb_generation(sub, species_seed(gen_seed, s), id))
        accepted.push_back({species_name(s), c.index, c.child_id, c.fitness});
    }
    commit(EventKind::kSecondaryGeneration, t,
           {{"generation", state_.generations}, {"seed", gen_seed}, {"accepted", std::move(accepted)}});
  }
  RobotId id = state_.next_robot_id;
  const std::int64_t tick = state_.ticks_done - 1;
  const Injection inj = plan_injection(state_.secondary, state_.primary,
                                       derive_seed(config_.seed, Stream::kInjection, tick), id);
  commit(EventKind::kRobotInjected, t,
         {{"tick", tick},
          {"species", species_name(inj.species)},
          {"secondary_index", inj.secondary_index},
          {"primary_index", inj.primary_index},
          {"replaced_id", inj.replaced_id},
          {"injected_id", inj.injected_id},
          {"refill_seed", inj.refill_seed},
          {"refill_id", inj.refill_id},
          {"refill_fitness", inj.refill_fitness}});
}

void Platform::run_tick() {
  if (!state_.started) start();
  const std::int64_t tick = state_.ticks_done;
  const TimeMs start = tick * kTickMs;
  const TimeMs end = start + kTickMs;
  const auto tick_wall = std::chrono::steady_clock::now();

  // On-screen robot: a freshly injected one first, otherwise uniform.
  const auto& members = state_.primary.members;
  std::size_t slot = members.size();
  for (std::size_t i = 0; i < members.size(); ++i)
    if (members[i].silver_pending) {
      slot = i;
      break;
    }
  if (slot == members.size())
    slot = Rng(derive_seed(config_.seed, Stream::kOnScreen, tick)).index(members.size());
  const RobotRecord& robot = members[slot];
  const Color color = robot.silver_pending ? Color::kSilver
                                           : kColorCycle[state_.color_index % kColorCycle.size()];
  const std::string command = state_.crowd.current_command();
  Lexicon lex = state_.crowd.lexicon();
  const double code = lex.code(command);

  EvaluationTrace trace = evaluate(robot.genome, code, command);
  trace.evaluation_id = state_.next_evaluation_id;
  trace.color = color;
  commit(EventKind::kEvaluationStarted, start,
         {{"tick", tick},
          {"evaluation_id", trace.evaluation_id},
          {"slot", slot},
          {"robot_id", trace.robot_id},
          {"species", species_name(trace.species)},
          {"color", color_name(color)},
          {"command", command},
          {"code", code}});

  std::vector<ChatMessage> scripted;
  if (oracle_) scripted = oracle_->chat(trace, command, tick / config_.schedule.window_ticks, start);
  std::size_t next_scripted = 0;

  bool frames = false;
  for (SessionObserver* o : observers_) frames = frames || o->wants_frames();
  const SpeciesSpec& spec = species_spec(trace.species);
  const int stride = config_.realtime ? 2 : kFeatureStride;  // 30 or ~3.3 frames per virtual s
  for (int step = 0; step < trace.frame_count(); step += stride) {
    const TimeMs vt = step_time(start, step);
    // A stop request only cuts the pacing short; the tick still completes.
    if (config_.realtime && !stop_requested_)
      std::this_thread::sleep_until(tick_wall + std::chrono::milliseconds(vt - start));
    while (next_scripted < scripted.size() && scripted[next_scripted].timestamp <= vt)
      process_chat(scripted[next_scripted++]);
    drain_live_chat(vt);
    if (frames) {
      FrameUpdate f;
      f.tick = tick;
      f.evaluation_id = trace.evaluation_id;
      f.robot_id = trace.robot_id;
      f.species = trace.species;
      f.color = color;
      f.step = step;
      const auto angles = trace.joint_angles(step);
      f.joint_angles.assign(angles.begin(), angles.end());
      f.segment_endpoints = segment_endpoints(spec, trace.head_position(step), angles);
      for (SessionObserver* o : observers_)
        if (o->wants_frames()) o->on_frame(f);
    }
  }
  while (next_scripted < scripted.size()) process_chat(scripted[next_scripted++]);
  if (config_.realtime && !stop_requested_)
    std::this_thread::sleep_until(tick_wall + std::chrono::milliseconds(kTickMs));
  drain_live_chat(std::max(state_.last_time, end - 1));

  commit(EventKind::kEvaluationFinished, end,
         {{"tick", tick},
          {"evaluation_id", trace.evaluation_id},
          {"robot_id", trace.robot_id},
          {"trace_hash", hex64(trace_hash(trace))},
          {"displacement", oracle_displacement(trace)}});
  pending_.push_back({trace.evaluation_id, end, build_features(trace)});

  {
    PrimaryPopulation copy = state_.primary;
    RobotId id = state_.next_robot_id;
    const TournamentResult r =
        tournament(copy, derive_seed(config_.seed, Stream::kTournament, tick), slot, id, tick + 1);
    if (r.replaced)
      commit(EventKind::kRobotReplaced, end,
             {{"tick", tick},
              {"first", r.first},
              {"second", r.second},
              {"winner", r.winner},
              {"loser", r.loser},
              {"winner_id", state_.primary.members[r.winner].genome.id},
              {"replaced_id", state_.primary.members[r.loser].genome.id},
              {"child_id", r.child->id},
              {"mutation_seed", r.mutation_seed}});
  }

  if ((tick + 1) % config_.schedule.window_ticks == 0) {
    const std::string winner = crowdbots::close_window(state_.crowd.open_window());
    commit(EventKind::kCommandWindowClosed, end,
           {{"tick", tick},
            {"window", tick / config_.schedule.window_ticks},
            {"winner", winner},
            {"votes", state_.crowd.open_window().size()}});
  }
  if ((tick + 1) % config_.schedule.injection_ticks == 0) hourly(end);

  finalize_examples(end, false);
  if (state_.ticks_done % config_.schedule.snapshot_ticks == 0) snapshot();
  if (log_.is_open()) log_.flush();
  if (rows_.is_open()) rows_.flush();
}

void Platform::finish() {
  if (finished_) return;
  if (!state_.started) start();
  finished_ = true;
  finalize_examples(state_.last_time, true);
  if (last_snapshot_tick_ != state_.ticks_done) snapshot();
  if (config_.out_dir)
    write_file(*config_.out_dir / kLexiconName, state_.crowd.lexicon().to_json().dump(2) + "\n");
  if (log_.is_open()) log_.flush();
  if (rows_.is_open()) rows_.flush();
}

void Platform::run(std::int64_t ticks) {
  start();
  for (std::int64_t k = 0; k < ticks && !stop_requested_; ++k) run_tick();
  finish();
}

}  // namespace crowdbots
