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

#include "crowdbots/synthcrowd.h"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "crowdbots/critic.h"
#include "crowdbots/io.h"
#include "crowdbots/rng.h"

namespace crowdbots {
namespace {

Error invalid(const std::string& what) { return Error("invalid_config", "oracle: " + what); }

bool in_schedule(const OracleConfig& c, std::string_view command) {
  return std::find(c.command_schedule.begin(), c.command_schedule.end(), command) !=
         c.command_schedule.end();
}

}  // namespace

double OracleConfig::threshold_for(Species s) const {
  auto it = species_thresholds.find(s);
  return it == species_thresholds.end() ? displacement_threshold : it->second;
}

void OracleConfig::validate() const {
  if (!(noise_rate >= 0.0 && noise_rate < 0.5)) throw invalid("noise_rate must be in [0, 0.5)");
  if (!(displacement_threshold > 0.0)) throw invalid("displacement_threshold must be positive");
  for (const auto& [s, t] : species_thresholds)
    if (!(t > 0.0)) throw invalid("threshold for " + std::string(species_name(s)) + " must be positive");
  if (min_votes < 1 || max_votes < min_votes) throw invalid("need 1 <= min_votes <= max_votes");
  if (command_schedule.empty()) throw invalid("command_schedule is empty");
  for (const std::string& c : command_schedule) {
    const auto canon = canonical_command(c);
    if (!canon || *canon != c) throw invalid("'" + c + "' is not a canonical command");
  }
  if (!(like_rate >= 0.0 && like_rate <= 1.0)) throw invalid("like_rate must be in [0, 1]");
}

nlohmann::json OracleConfig::to_json() const {
  nlohmann::json thresholds = nlohmann::json::object();
  for (const auto& [s, t] : species_thresholds) thresholds[std::string(species_name(s))] = t;
  return {{"format", "crowdbots-oracle"},
          {"version", 1},
          {"name", name},
          {"displacement_threshold", displacement_threshold},
          {"noise_rate", noise_rate},
          {"votes_per_evaluation", {min_votes, max_votes}},
          {"command_schedule", command_schedule},
          {"seed", seed},
          {"species_thresholds", thresholds},
          {"like_rate", like_rate}};
}

OracleConfig OracleConfig::from_json(const nlohmann::json& j) {
  OracleConfig c;
  try {
    if (j.at("format") != "crowdbots-oracle" || j.at("version") != 1)
      throw FormatError("not a version-1 oracle config");
    // Everything but the header is optional and falls back to the defaults.
    c.name = j.value("name", c.name);
    c.displacement_threshold = j.value("displacement_threshold", c.displacement_threshold);
    c.noise_rate = j.value("noise_rate", c.noise_rate);
    if (j.contains("votes_per_evaluation")) {
      const auto& v = j.at("votes_per_evaluation");
      c.min_votes = v.at(0).get<int>();
      c.max_votes = v.at(1).get<int>();
    }
    c.command_schedule = j.value("command_schedule", c.command_schedule);
    c.seed = j.value("seed", c.seed);
    if (j.contains("species_thresholds"))
      for (const auto& [name, t] : j.at("species_thresholds").items())
        c.species_thresholds[parse_species(name)] = t.get<double>();
    c.like_rate = j.value("like_rate", c.like_rate);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("oracle config: ") + e.what());
  }
  c.validate();
  return c;
}

OracleConfig load_oracle_config(std::string_view name_or_path) {
  if (name_or_path == "default") return {};
  const std::string text = read_file(std::filesystem::path(name_or_path));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string(name_or_path) + ": " + e.what());
  }
  return OracleConfig::from_json(j);
}

double oracle_displacement(const EvaluationTrace& trace) {
  if (trace.frame_count() == 0) return 0.0;
  const int last = std::min((kFeatureRows - 1) * kFeatureStride, trace.frame_count() - 1);
  return horizontal_displacement(trace, 0, last);
}

bool oracle_obeyed(const EvaluationTrace& trace, std::string_view command,
                   const OracleConfig& config) {
  const bool moved = oracle_displacement(trace) >= config.threshold_for(trace.species);
  // Any command other than "stop" is judged as a request to move.
  return command == "stop" ? !moved : moved;
}

std::vector<OracleReaction> oracle_reactions(const EvaluationTrace& trace,
                                             std::string_view command,
                                             const OracleConfig& config) {
  std::vector<OracleReaction> out;
  if (!in_schedule(config, command)) return out;
  Rng rng(derive_seed(config.seed, Stream::kOracle, trace.evaluation_id, trace.robot_id));
  const bool obeyed = oracle_obeyed(trace, command, config);
  const int k = config.min_votes +
                static_cast<int>(rng.index(static_cast<std::size_t>(config.max_votes - config.min_votes + 1)));
  std::vector<bool> yes(k);
  for (int v = 0; v < k; ++v) {
    yes[v] = rng.bernoulli(config.noise_rate) ? !obeyed : obeyed;
    out.push_back({v, {trace.color, yes[v] ? VoteKind::kYes : VoteKind::kNo}});
  }
  for (int v = 0; v < k; ++v)
    if (rng.bernoulli(config.like_rate))
      out.push_back({v, {trace.color, yes[v] ? VoteKind::kLike : VoteKind::kDislike}});
  return out;
}

std::vector<ReinforcementInput> oracle_votes(const EvaluationTrace& trace,
                                             std::string_view command,
                                             const OracleConfig& config) {
  std::vector<ReinforcementInput> out;
  for (const OracleReaction& r : oracle_reactions(trace, command, config))
    if (r.input.kind == VoteKind::kYes || r.input.kind == VoteKind::kNo) out.push_back(r.input);
  return out;
}

OracleCrowd::OracleCrowd(const OracleConfig& config, std::uint64_t session_seed)
    : config_(config) {
  config_.validate();
  config_.seed = derive_seed(session_seed, Stream::kOracle, config.seed);
}

const std::string& OracleCrowd::command_for_window(std::int64_t window) const {
  const auto n = static_cast<std::int64_t>(config_.command_schedule.size());
  return config_.command_schedule[static_cast<std::size_t>((window + 1) % n)];
}

std::vector<ChatMessage> OracleCrowd::chat(const EvaluationTrace& trace, std::string_view command,
                                           std::int64_t window, TimeMs start) const {
  std::vector<ChatMessage> out;
  out.push_back({start + kOracleCommandDelayMs, std::string(kOracleCommander),
                 command_for_window(window)});
  const auto reactions = oracle_reactions(trace, command, config_);
  for (std::size_t i = 0; i < reactions.size(); ++i)
    out.push_back({start + kOracleReactionDelayMs + static_cast<TimeMs>(i) * kOracleReactionSpacingMs,
                   "oracle-" + std::to_string(reactions[i].voter),
                   reinforcement_text(reactions[i].input.color, reactions[i].input.kind)});
  return out;
}

}  // namespace crowdbots
