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

// A synthetic crowd. One "commander" votes the command schedule; a handful
// of voters judge each evaluation by the robot's net head displacement and
// answer yes or no, each answer flipped with probability noise_rate.

#ifndef CROWDBOTS_SYNTHCROWD_H_
#define CROWDBOTS_SYNTHCROWD_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crowdbots/crowd.h"
#include "crowdbots/morphology.h"
#include "crowdbots/simulation.h"

namespace crowdbots {

struct OracleConfig {
  std::string name = "default";
  double displacement_threshold = 0.5;  // m
  double noise_rate = 0.05;
  int min_votes = 1;
  int max_votes = 5;
  std::vector<std::string> command_schedule = {"move", "stop"};
  std::uint64_t seed = 0;
  // Per-species threshold overrides. A huge threshold means the species
  // never "moves" in the oracle's eyes.
  std::map<Species, double> species_thresholds;
  // Chance that a voter also likes (after a yes) or dislikes (after a no).
  double like_rate = 0.25;

  double threshold_for(Species s) const;

  // Throws Error("invalid_config").
  void validate() const;
  nlohmann::json to_json() const;
  // Throws FormatError or Error("invalid_config").
  static OracleConfig from_json(const nlohmann::json& j);

  friend bool operator==(const OracleConfig&, const OracleConfig&) = default;
};

// "default" names the built-in configuration; anything else is a path.
// Throws Error("io_error") for a missing file.
OracleConfig load_oracle_config(std::string_view name_or_path);

// Net horizontal head displacement from frame 0 to the last retained
// feature step (1782), or to the final frame for shorter traces.
double oracle_displacement(const EvaluationTrace& trace);

// Whether the oracle considers the robot to have obeyed `command`.
bool oracle_obeyed(const EvaluationTrace& trace, std::string_view command,
                   const OracleConfig& config);

// Yes/no votes for the trace's color. Commands outside the schedule get none.
// Deterministic in (trace, command, config).
std::vector<ReinforcementInput> oracle_votes(const EvaluationTrace& trace,
                                             std::string_view command,
                                             const OracleConfig& config);

// Votes plus the likes and dislikes that follow them, in send order.
struct OracleReaction {
  int voter = 0;
  ReinforcementInput input;
};
std::vector<OracleReaction> oracle_reactions(const EvaluationTrace& trace,
                                             std::string_view command,
                                             const OracleConfig& config);

inline constexpr std::string_view kOracleCommander = "oracle-commander";
inline constexpr TimeMs kOracleCommandDelayMs = 1'000;
inline constexpr TimeMs kOracleReactionDelayMs = 20'000;
inline constexpr TimeMs kOracleReactionSpacingMs = 1'000;

// Drives a session: the chat it sends during one evaluation.
class OracleCrowd {
 public:
  // The effective seed mixes the session seed with config.seed.
  OracleCrowd(const OracleConfig& config, std::uint64_t session_seed);

  const OracleConfig& config() const { return config_; }

  // The command the commander votes for while window `window` is open, so
  // that it wins and runs during the next window.
  const std::string& command_for_window(std::int64_t window) const;

  // Chat for the evaluation shown from `start`: one command vote at
  // start + 1 s, then reactions from "oracle-<k>" at start + 20 s + k s.
  std::vector<ChatMessage> chat(const EvaluationTrace& trace, std::string_view command,
                                std::int64_t window, TimeMs start) const;

 private:
  OracleConfig config_;
};

}  // namespace crowdbots

#endif  // CROWDBOTS_SYNTHCROWD_H_
