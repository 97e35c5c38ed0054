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

#ifndef CROWDBOTS_REPLAY_H_
#define CROWDBOTS_REPLAY_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>

#include "crowdbots/platform.h"

namespace crowdbots {

struct ReplayOptions {
  // Stop after the event with this sequence number.
  std::optional<std::uint64_t> until_seq;
  // When set, snapshot files named by snapshot events are also checked.
  std::optional<std::filesystem::path> session_dir;
  // Called after each event is applied.
  std::function<void(const Event&, const PlatformState&)> on_event;
};

struct ReplayResult {
  PlatformState state;
  std::uint64_t events = 0;
  std::uint64_t snapshots_verified = 0;
  bool truncated = false;  // the final line was incomplete and ignored
  std::uint64_t log_hash = 0;  // FNV-1a of the bytes that were applied
};

// Rebuilds the platform state from an event log. Every snapshot event's hash
// is recomputed from the replayed state, and every chat message's derived
// event is re-derived. Throws Error with code sequence_violation,
// checksum_mismatch, snapshot_mismatch, inconsistent_log or malformed_input.
// A final line without a newline that does not parse is treated as a torn
// write and ignored.
ReplayResult replay(std::istream& log, const ReplayOptions& options = {});
ReplayResult replay(const std::filesystem::path& log, const ReplayOptions& options = {});

}  // namespace crowdbots

#endif  // CROWDBOTS_REPLAY_H_
