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

// Primary (crowd-facing) and secondary (hill-climbed) populations.
//
// Every operation takes an explicit seed and a robot-id counter, so the same
// inputs always produce the same populations and ids.

#ifndef CROWDBOTS_EVOLUTION_H_
#define CROWDBOTS_EVOLUTION_H_

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "crowdbots/morphology.h"

namespace crowdbots {

inline constexpr int kPrimaryPerSpecies = 5;
inline constexpr int kPrimarySize = kPrimaryPerSpecies * kSpeciesCount;  // 50
inline constexpr int kSecondaryPerSpecies = 20;
inline constexpr int kSecondarySize = kSecondaryPerSpecies * kSpeciesCount;  // 200

struct RobotRecord {
  RobotGenome genome;
  std::int64_t likes = 0;
  std::int64_t dislikes = 0;
  std::int64_t yeses = 0;
  std::int64_t nos = 0;
  std::int64_t evaluations = 0;
  std::int64_t born_tick = 0;
  bool silver_pending = false;  // injected, not yet shown

  std::int64_t popularity() const { return likes - dislikes; }
  std::int64_t obedience() const { return yeses - nos; }

  friend bool operator==(const RobotRecord&, const RobotRecord&) = default;
};

// Strictly more popular and more obedient with no more evaluations.
bool dominates(const RobotRecord& a, const RobotRecord& b);

struct PrimaryPopulation {
  std::vector<RobotRecord> members;
  friend bool operator==(const PrimaryPopulation&, const PrimaryPopulation&) = default;
};

// Five random robots per species, in catalog order. Ids come from next_id.
PrimaryPopulation initial_primary(std::uint64_t seed, RobotId& next_id);

struct TournamentResult {
  std::size_t first = 0;   // competitor indices
  std::size_t second = 0;
  bool replaced = false;
  std::size_t winner = 0;
  std::size_t loser = 0;
  std::uint64_t mutation_seed = 0;  // mutate(winner, mutation_seed, child id)
  std::optional<RobotGenome> child;
};

// Two distinct members other than `on_screen` compete. If one dominates, a
// mutated copy with fresh counters takes the loser's slot.
TournamentResult tournament(PrimaryPopulation& population, std::uint64_t seed,
                            std::optional<std::size_t> on_screen, RobotId& next_id,
                            std::int64_t tick);

struct SecondaryMember {
  RobotGenome genome;
  double fitness = 0.0;
  friend bool operator==(const SecondaryMember&, const SecondaryMember&) = default;
};

using Subpopulation = std::vector<SecondaryMember>;

struct SecondaryPopulation {
  std::array<Subpopulation, kSpeciesCount> species;
  std::size_t size() const;
  friend bool operator==(const SecondaryPopulation&, const SecondaryPopulation&) = default;
};

// Distance between the trajectories under command codes +1 and -1.
double secondary_fitness(const RobotGenome& genome);

SecondaryPopulation initial_secondary(std::uint64_t seed, RobotId& next_id);

// Seed for the mutation that produced child `index` in a generation.
std::uint64_t hill_climb_child_seed(std::uint64_t generation_seed, std::size_t index);

struct AcceptedChild {
  std::size_t index = 0;
  RobotId child_id = 0;
  double fitness = 0.0;
  friend bool operator==(const AcceptedChild&, const AcceptedChild&) = default;
};

// Every member produces one mutated child; the child replaces its parent iff
// strictly fitter. Ids are handed out to accepted children only, in index
// order, so rejected children never consume ids.
std::vector<AcceptedChild> hill_climb_generation(Subpopulation& sub,
                                                 std::uint64_t generation_seed,
                                                 RobotId& next_id);

// Re-applies a logged generation without simulating.
void apply_hill_climb(Subpopulation& sub, std::uint64_t generation_seed,
                      const std::vector<AcceptedChild>& accepted);

struct Injection {
  Species species = Species::kStickbot;
  std::size_t secondary_index = 0;
  std::size_t primary_index = 0;
  RobotId replaced_id = 0;
  RobotId injected_id = 0;
  std::uint64_t refill_seed = 0;  // random_genome seed of the replacement
  RobotId refill_id = 0;
  double refill_fitness = 0.0;
  friend bool operator==(const Injection&, const Injection&) = default;
};

// Chooses the injection and evaluates the refill without touching either
// population. A uniformly chosen secondary robot replaces the primary member
// with the fewest evaluations (uniform tie-break); its secondary slot is
// refilled with a fresh random robot of the same species.
Injection plan_injection(const SecondaryPopulation& secondary, const PrimaryPopulation& primary,
                         std::uint64_t seed, RobotId& next_id);

// The injected robot is flagged for silver display on its next evaluation.
void apply_injection(SecondaryPopulation& secondary, PrimaryPopulation& primary,
                     const Injection& injection, std::int64_t tick);

// plan_injection followed by apply_injection.
Injection inject(SecondaryPopulation& secondary, PrimaryPopulation& primary,
                 std::uint64_t seed, RobotId& next_id, std::int64_t tick);

}  // namespace crowdbots

#endif  // CROWDBOTS_EVOLUTION_H_
