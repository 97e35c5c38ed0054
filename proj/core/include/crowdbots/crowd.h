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

// Chat parsing, command voting, reinforcement attribution and crowd scores.
//
// Time is virtual milliseconds since session start. Chat grammar:
//   "!" <color initial> <vote letter>   reinforcement, e.g. "!bn", "!sy"
//   up to 5 words / 32 characters       command vote, case-folded with
//                                        whitespace collapsed
//   anything else                        ignored

#ifndef CROWDBOTS_CROWD_H_
#define CROWDBOTS_CROWD_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crowdbots/color.h"

namespace crowdbots {

using TimeMs = std::int64_t;

inline constexpr TimeMs kTickMs = 30'000;
inline constexpr TimeMs kAttributionGraceMs = 2'000;
inline constexpr int kMaxCommandWords = 5;
inline constexpr std::size_t kMaxCommandChars = 32;
inline constexpr std::string_view kDefaultCommand = "move";
inline constexpr int kLeaderboardSize = 5;

struct ChatMessage {
  TimeMs timestamp = 0;
  std::string username;
  std::string text;
};

enum class VoteKind : std::uint8_t { kYes, kNo, kLike, kDislike };

std::string_view vote_kind_name(VoteKind k);  // "yes", "no", "like", "dislike"
char vote_kind_letter(VoteKind k);
std::optional<VoteKind> vote_kind_from_name(std::string_view name);

struct ReinforcementInput {
  Color color;
  VoteKind kind;
  friend bool operator==(const ReinforcementInput&, const ReinforcementInput&) = default;
};

struct CommandVote {
  std::string text;  // canonical form
  friend bool operator==(const CommandVote&, const CommandVote&) = default;
};

struct OtherMessage {
  friend bool operator==(const OtherMessage&, const OtherMessage&) = default;
};

using ParsedMessage = std::variant<ReinforcementInput, CommandVote, OtherMessage>;

// Total: never throws, every byte string maps to one of the three variants.
ParsedMessage parse_message(std::string_view raw);

// Lowercased, whitespace-collapsed form, or nullopt when the text is not a
// valid command (empty, '!'-prefixed, non-printable bytes, too long).
std::optional<std::string> canonical_command(std::string_view raw);

// The reinforcement string a client sends for (color, kind), e.g. "!ry".
std::string reinforcement_text(Color color, VoteKind kind);

struct WindowVote {
  std::string text;
  TimeMs timestamp = 0;
  friend bool operator==(const WindowVote&, const WindowVote&) = default;
};

// Modal vote text; "move" when empty; ties go to the text whose first vote
// came earliest (then to the earlier position in `votes`).
std::string close_window(std::span<const WindowVote> votes);

// Canonical text -> code in (-1, 1). The n-th distinct text ever seen draws
// its code from a stream keyed by (seed, n), so a lexicon is a pure function
// of the seed and the order of first sightings.
class Lexicon {
 public:
  explicit Lexicon(std::uint64_t seed = 0) : seed_(seed) {}

  // Assigns on first sighting.
  double code(std::string_view text);
  std::optional<double> find(std::string_view text) const;
  std::size_t size() const { return order_.size(); }
  const std::vector<std::string>& order() const { return order_; }
  std::uint64_t seed() const { return seed_; }

  // {"format": "crowdbots-lexicon", "version": 1, "seed": ..,
  //  "entries": [{"text": .., "code": ..}, ...]} in first-sighting order.
  nlohmann::json to_json() const;
  // Throws FormatError on malformed input.
  static Lexicon from_json(const nlohmann::json& j);

  friend bool operator==(const Lexicon&, const Lexicon&) = default;

 private:
  std::uint64_t seed_;
  std::map<std::string, double, std::less<>> codes_;
  std::vector<std::string> order_;
};

// The draw used for the n-th new lexicon entry.
double lexicon_code(std::uint64_t seed, std::uint64_t n);

struct Halves {
  std::int64_t y1 = 0, n1 = 0, y2 = 0, n2 = 0;
  friend bool operator==(const Halves&, const Halves&) = default;
};

// (Y2 - N2) - (Y1 - N1).
std::int64_t command_score(const Halves& h);

struct TimedReinforcement {
  TimeMs timestamp = 0;
  bool yes = false;
  friend bool operator==(const TimedReinforcement&, const TimedReinforcement&) = default;
};

// Raw per-command history; halves and score are derived on demand so that a
// late vote that stretches the active period re-splits earlier reinforcement.
struct CommandStats {
  std::string text;
  double code = 0.0;
  std::optional<TimeMs> t0;  // first typed
  std::optional<TimeMs> tT;  // last typed
  std::int64_t total_votes = 0;
  TimeMs first_activity = 0;
  std::vector<TimedReinforcement> reinforcement;  // yes/no under this command

  // Only reinforcement inside [t0, tT] counts; the midpoint (t0 + tT) / 2
  // belongs to the second half. A never-typed command has no active period.
  Halves halves() const;
  std::int64_t score() const { return command_score(halves()); }

  friend bool operator==(const CommandStats&, const CommandStats&) = default;
};

struct UserScore {
  std::string username;
  std::int64_t points = 0;
  TimeMs first_activity = 0;
  friend bool operator==(const UserScore&, const UserScore&) = default;
};

// One broadcast evaluation as the crowd saw it.
struct BroadcastSlot {
  std::uint64_t evaluation_id = 0;
  Color color = Color::kRed;
  TimeMs start = 0;
  std::optional<TimeMs> end;  // nullopt while on screen
};

enum class AttributionOutcome : std::uint8_t { kAttributed, kDropped, kRejected };

struct Attribution {
  AttributionOutcome outcome = AttributionOutcome::kRejected;
  std::uint64_t evaluation_id = 0;
  std::string reason;  // empty when attributed
};

// Matches by color against evaluations that are on screen or finished no
// more than kAttributionGraceMs ago; the most recently started match wins.
// An empty timeline means no session and the vote is rejected.
Attribution attribute_reinforcement(const ReinforcementInput& input,
                                    std::span<const BroadcastSlot> timeline, TimeMs timestamp);

struct Leaderboards {
  std::vector<std::pair<std::string, std::int64_t>> commands;  // text, score
  std::vector<std::pair<std::string, std::int64_t>> users;     // name, points
  friend bool operator==(const Leaderboards&, const Leaderboards&) = default;
};

// Command and user bookkeeping for a session.
class CrowdState {
 public:
  explicit CrowdState(std::uint64_t lexicon_seed = 0) : lexicon_(lexicon_seed) {}

  // A command vote in the open window. Returns the command's code.
  double record_vote(const std::string& user, const std::string& text, TimeMs t);
  // An attributed reinforcement. yes/no also count toward `command` stats.
  void record_reinforcement(const std::string& user, const std::string& command, VoteKind kind,
                            TimeMs t);
  // Closes the window, making the winner current; returns it.
  std::string close_window(TimeMs t);

  const std::string& current_command() const { return current_; }
  double current_code() { return lexicon_.code(current_); }
  const std::vector<WindowVote>& open_window() const { return window_; }
  const Lexicon& lexicon() const { return lexicon_; }
  Lexicon& lexicon() { return lexicon_; }
  const std::map<std::string, CommandStats>& commands() const { return commands_; }
  const std::map<std::string, UserScore>& users() const { return users_; }

  Leaderboards leaderboards(int n = kLeaderboardSize) const;

  // Complete state, for snapshots. from_json throws FormatError.
  nlohmann::json to_json() const;
  static CrowdState from_json(const nlohmann::json& j);

  friend bool operator==(const CrowdState&, const CrowdState&) = default;

 private:
  CommandStats& stats(const std::string& text, TimeMs t);
  void credit(const std::string& user, TimeMs t);

  Lexicon lexicon_;
  std::map<std::string, CommandStats> commands_;
  std::map<std::string, UserScore> users_;
  std::vector<WindowVote> window_;
  std::string current_{kDefaultCommand};
};

}  // namespace crowdbots

#endif  // CROWDBOTS_CROWD_H_
