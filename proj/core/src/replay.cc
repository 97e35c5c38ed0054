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

#include "crowdbots/replay.h"

#include <fstream>
#include <istream>
#include <string>

#include "crowdbots/io.h"

namespace crowdbots {

ReplayResult replay(std::istream& in, const ReplayOptions& options) {
  ReplayResult result;
  Fnv1a hash;
  std::optional<Event> expected;  // derived event owed by the last chat message
  std::string line;
  while (std::getline(in, line)) {
    const bool complete = !in.eof();
    if (line.empty() && complete) continue;
    Event e;
    try {
      e = Event::from_json(nlohmann::json::parse(line));
    } catch (const std::exception& ex) {
      if (!complete) {
        result.truncated = true;
        break;
      }
      throw FormatError("event log line " + std::to_string(result.events + 1) + ": " + ex.what());
    }
    if (!complete) {
      // A parseable last line without its newline is still a torn write.
      result.truncated = true;
      break;
    }

    check_event_order(result.state, e);
    if (expected) {
      if (e.kind != expected->kind || e.t != expected->t || e.data != expected->data)
        throw Error("inconsistent_log", "event " + std::to_string(e.seq) +
                                            " is not what the preceding chat message implies");
      expected.reset();
    } else if (e.kind == EventKind::kCommandVote || e.kind == EventKind::kReinforcement ||
               e.kind == EventKind::kReinforcementDropped) {
      throw Error("inconsistent_log", "event " + std::to_string(e.seq) + " has no chat message");
    }

    if (e.kind == EventKind::kSnapshot) {
      const std::string bytes = serialize_state(result.state);
      const std::string h = hex64(fnv1a(bytes));
      if (e.data.at("hash") != h)
        throw Error("snapshot_mismatch", "snapshot at event " + std::to_string(e.seq) +
                                             " hashes to " + h + ", log says " +
                                             e.data.at("hash").get<std::string>());
      if (options.session_dir) {
        const auto file = *options.session_dir / e.data.at("file").get<std::string>();
        if (std::filesystem::exists(file) && hex64(fnv1a(read_file(file))) != h)
          throw Error("snapshot_mismatch", file.string() + " does not match the replayed state");
      }
      ++result.snapshots_verified;
    }

    apply_event(result.state, e);
    if (e.kind == EventKind::kChatMessage) {
      ChatMessage msg{e.t, e.data.at("user").get<std::string>(), e.data.at("text").get<std::string>()};
      expected = interpret_chat(result.state, msg);
    }
    hash.update(line);
    hash.update("\n");
    ++result.events;
    if (options.on_event) options.on_event(e, result.state);
    if (options.until_seq && e.seq >= *options.until_seq) break;
  }
  result.log_hash = hash.digest();
  return result;
}

ReplayResult replay(const std::filesystem::path& given, const ReplayOptions& options) {
  // A session directory stands for the event log inside it.
  const std::filesystem::path path =
      std::filesystem::is_directory(given) ? given / "events.ndjson" : given;
  std::ifstream in(path, std::ios::binary);
  if (!in || !std::filesystem::is_regular_file(path))
    throw Error("io_error", "cannot open " + path.string());
  ReplayOptions o = options;
  if (!o.session_dir) o.session_dir = path.parent_path();
  return replay(in, o);
}

}  // namespace crowdbots
