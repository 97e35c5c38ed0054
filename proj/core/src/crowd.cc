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

#include "crowdbots/crowd.h"

#include <algorithm>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "crowdbots/errors.h"
#include "crowdbots/rng.h"

namespace crowdbots {
namespace {

bool is_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }
char fold(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : c; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::optional<VoteKind> vote_from_letter(char c) {
  switch (c) {
    case 'y': return VoteKind::kYes;
    case 'n': return VoteKind::kNo;
    case 'l': return VoteKind::kLike;
    case 'd': return VoteKind::kDislike;
    default: return std::nullopt;
  }
}

// Top n by descending value, ties by earlier first activity then key.
template <typename Item>
void rank(std::vector<Item>& items, std::size_t n) {
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.first != b.first) return a.first < b.first;
    return a.key < b.key;
  });
  if (items.size() > n) items.resize(n);
}

struct Ranked {
  std::string key;
  std::int64_t value;
  TimeMs first;
};

}  // namespace

std::string_view vote_kind_name(VoteKind k) {
  switch (k) {
    case VoteKind::kYes: return "yes";
    case VoteKind::kNo: return "no";
    case VoteKind::kLike: return "like";
    case VoteKind::kDislike: return "dislike";
  }
  return "yes";
}

char vote_kind_letter(VoteKind k) { return vote_kind_name(k)[0]; }

std::optional<VoteKind> vote_kind_from_name(std::string_view name) {
  for (VoteKind k : {VoteKind::kYes, VoteKind::kNo, VoteKind::kLike, VoteKind::kDislike})
    if (vote_kind_name(k) == name) return k;
  return std::nullopt;
}

std::optional<std::string> canonical_command(std::string_view raw) {
  const std::string_view s = trim(raw);
  if (s.empty() || s.front() == '!') return std::nullopt;
  std::string out;
  int words = 0;
  bool in_space = true;
  for (unsigned char c : s) {
    if (is_space(c)) {
      in_space = true;
      continue;
    }
    if (c < 0x21 || c > 0x7e) return std::nullopt;  // printable ASCII only
    if (in_space) {
      if (++words > kMaxCommandWords) return std::nullopt;
      if (!out.empty()) out.push_back(' ');
      in_space = false;
    }
    out.push_back(fold(c));
    if (out.size() > kMaxCommandChars) return std::nullopt;
  }
  return out;
}

ParsedMessage parse_message(std::string_view raw) {
  const std::string_view s = trim(raw);
  if (!s.empty() && s.front() == '!') {
    if (s.size() != 3) return OtherMessage{};
    const auto color = color_from_letter(fold(s[1]));
    const auto kind = vote_from_letter(fold(s[2]));
    if (!color || !kind) return OtherMessage{};
    return ReinforcementInput{*color, *kind};
  }
  if (auto text = canonical_command(s)) return CommandVote{std::move(*text)};
  return OtherMessage{};
}

std::string reinforcement_text(Color color, VoteKind kind) {
  return std::string{'!', color_letter(color), vote_kind_letter(kind)};
}

std::string close_window(std::span<const WindowVote> votes) {
  struct Tally {
    std::int64_t count = 0;
    TimeMs first = 0;
    std::size_t position = 0;
  };
  std::unordered_map<std::string, Tally> tally;
  for (std::size_t i = 0; i < votes.size(); ++i) {
    auto [it, fresh] = tally.try_emplace(votes[i].text);
    Tally& t = it->second;
    if (fresh || votes[i].timestamp < t.first) {
      t.first = votes[i].timestamp;
      if (fresh) t.position = i;
    }
    ++t.count;
  }
  const std::string* best = nullptr;
  const Tally* best_tally = nullptr;
  for (const auto& [text, t] : tally) {
    const bool better =
        !best || t.count > best_tally->count ||
        (t.count == best_tally->count &&
         (t.first < best_tally->first ||
          (t.first == best_tally->first && t.position < best_tally->position)));
    if (better) {
      best = &text;
      best_tally = &t;
    }
  }
  return best ? *best : std::string(kDefaultCommand);
}

double lexicon_code(std::uint64_t seed, std::uint64_t n) {
  Rng rng(derive_seed(seed, Stream::kLexicon, n));
  double c;
  do {
    c = rng.uniform_open(-1.0, 1.0);
  } while (c <= -1.0);  // rounding of lo + 2u can land on the bound
  return c;
}

double Lexicon::code(std::string_view text) {
  if (auto it = codes_.find(text); it != codes_.end()) return it->second;
  const double c = lexicon_code(seed_, order_.size());
  codes_.emplace(std::string(text), c);
  order_.emplace_back(text);
  return c;
}

std::optional<double> Lexicon::find(std::string_view text) const {
  if (auto it = codes_.find(text); it != codes_.end()) return it->second;
  return std::nullopt;
}

nlohmann::json Lexicon::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const std::string& t : order_) entries.push_back({{"text", t}, {"code", codes_.at(t)}});
  return {{"format", "crowdbots-lexicon"}, {"version", 1}, {"seed", seed_}, {"entries", entries}};
}

Lexicon Lexicon::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "crowdbots-lexicon" || j.at("version") != 1)
      throw FormatError("not a version-1 lexicon");
    Lexicon lex(j.at("seed").get<std::uint64_t>());
    for (const auto& e : j.at("entries")) {
      const auto text = e.at("text").get<std::string>();
      const double code = e.at("code").get<double>();
      if (!(code > -1.0 && code < 1.0)) throw FormatError("lexicon code out of range");
      if (!lex.codes_.emplace(text, code).second) throw FormatError("duplicate lexicon entry");
      lex.order_.push_back(text);
    }
    return lex;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("lexicon: ") + e.what());
  }
}

std::int64_t command_score(const Halves& h) { return (h.y2 - h.n2) - (h.y1 - h.n1); }

Halves CommandStats::halves() const {
  Halves h;
  if (!t0 || !tT) return h;
  const TimeMs twice_mid = *t0 + *tT;
  for (const TimedReinforcement& r : reinforcement) {
    if (r.timestamp < *t0 || r.timestamp > *tT) continue;
    const bool second = 2 * r.timestamp >= twice_mid;
    std::int64_t& slot = second ? (r.yes ? h.y2 : h.n2) : (r.yes ? h.y1 : h.n1);
    ++slot;
  }
  return h;
}

Attribution attribute_reinforcement(const ReinforcementInput& input,
                                    std::span<const BroadcastSlot> timeline, TimeMs timestamp) {
  if (timeline.empty()) return {AttributionOutcome::kRejected, 0, "no active session"};
  const BroadcastSlot* match = nullptr;
  for (const BroadcastSlot& s : timeline) {
    if (s.color != input.color || timestamp < s.start) continue;
    if (s.end && timestamp > *s.end + kAttributionGraceMs) continue;
    if (!match || s.start > match->start) match = &s;
  }
  if (!match)
    return {AttributionOutcome::kDropped, 0,
            "no " + std::string(color_name(input.color)) + " evaluation on screen"};
  return {AttributionOutcome::kAttributed, match->evaluation_id, {}};
}

CommandStats& CrowdState::stats(const std::string& text, TimeMs t) {
  auto [it, fresh] = commands_.try_emplace(text);
  if (fresh) {
    it->second.text = text;
    it->second.code = lexicon_.code(text);
    it->second.first_activity = t;
  }
  return it->second;
}

void CrowdState::credit(const std::string& user, TimeMs t) {
  auto [it, fresh] = users_.try_emplace(user);
  if (fresh) {
    it->second.username = user;
    it->second.first_activity = t;
  }
  ++it->second.points;
}

double CrowdState::record_vote(const std::string& user, const std::string& text, TimeMs t) {
  CommandStats& s = stats(text, t);
  if (!s.t0) s.t0 = t;
  s.tT = s.tT ? std::max(*s.tT, t) : t;
  ++s.total_votes;
  window_.push_back({text, t});
  credit(user, t);
  return s.code;
}

void CrowdState::record_reinforcement(const std::string& user, const std::string& command,
                                      VoteKind kind, TimeMs t) {
  if (kind == VoteKind::kYes || kind == VoteKind::kNo)
    stats(command, t).reinforcement.push_back({t, kind == VoteKind::kYes});
  credit(user, t);
}

std::string CrowdState::close_window(TimeMs t) {
  current_ = crowdbots::close_window(window_);
  window_.clear();
  stats(current_, t);  // make sure the winner has a code and a stats entry
  return current_;
}

Leaderboards CrowdState::leaderboards(int n) const {
  Leaderboards out;
  std::vector<Ranked> cmds, users;
  for (const auto& [text, s] : commands_) cmds.push_back({text, s.score(), s.first_activity});
  for (const auto& [name, u] : users_) users.push_back({name, u.points, u.first_activity});
  rank(cmds, static_cast<std::size_t>(n));
  rank(users, static_cast<std::size_t>(n));
  for (const Ranked& r : cmds) out.commands.emplace_back(r.key, r.value);
  for (const Ranked& r : users) out.users.emplace_back(r.key, r.value);
  return out;
}

nlohmann::json CrowdState::to_json() const {
  nlohmann::json cmds = nlohmann::json::array();
  for (const auto& [text, s] : commands_) {
    nlohmann::json r = nlohmann::json::array();
    for (const TimedReinforcement& x : s.reinforcement) r.push_back({x.timestamp, x.yes});
    cmds.push_back({{"text", text},
                    {"code", s.code},
                    {"t0", s.t0 ? nlohmann::json(*s.t0) : nlohmann::json(nullptr)},
                    {"tT", s.tT ? nlohmann::json(*s.tT) : nlohmann::json(nullptr)},
                    {"total_votes", s.total_votes},
                    {"first_activity", s.first_activity},
                    {"reinforcement", std::move(r)}});
  }
  nlohmann::json users = nlohmann::json::array();
  for (const auto& [name, u] : users_)
    users.push_back({{"username", name}, {"points", u.points}, {"first_activity", u.first_activity}});
  nlohmann::json window = nlohmann::json::array();
  for (const WindowVote& v : window_) window.push_back({v.text, v.timestamp});
  return {{"lexicon", lexicon_.to_json()},
          {"commands", std::move(cmds)},
          {"users", std::move(users)},
          {"window", std::move(window)},
          {"current", current_}};
}

CrowdState CrowdState::from_json(const nlohmann::json& j) {
  try {
    CrowdState c;
    c.lexicon_ = Lexicon::from_json(j.at("lexicon"));
    for (const auto& r : j.at("commands")) {
      CommandStats s;
      s.text = r.at("text").get<std::string>();
      s.code = r.at("code").get<double>();
      if (!r.at("t0").is_null()) s.t0 = r.at("t0").get<TimeMs>();
      if (!r.at("tT").is_null()) s.tT = r.at("tT").get<TimeMs>();
      s.total_votes = r.at("total_votes").get<std::int64_t>();
      s.first_activity = r.at("first_activity").get<TimeMs>();
      for (const auto& x : r.at("reinforcement"))
        s.reinforcement.push_back({x.at(0).get<TimeMs>(), x.at(1).get<bool>()});
      c.commands_.emplace(s.text, std::move(s));
    }
    for (const auto& u : j.at("users")) {
      UserScore score{u.at("username").get<std::string>(), u.at("points").get<std::int64_t>(),
                      u.at("first_activity").get<TimeMs>()};
      c.users_.emplace(score.username, std::move(score));
    }
    for (const auto& v : j.at("window"))
      c.window_.push_back({v.at(0).get<std::string>(), v.at(1).get<TimeMs>()});
    c.current_ = j.at("current").get<std::string>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("crowd state: ") + e.what());
  }
}

}  // namespace crowdbots
