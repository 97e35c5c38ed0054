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

#include "crowdbots/evolution.h"

#include <algorithm>

#include "crowdbots/rng.h"
#include "crowdbots/simulation.h"

namespace crowdbots {

bool dominates(const RobotRecord& a, const RobotRecord& b) {
  return a.popularity() > b.popularity() && a.obedience() > b.obedience() &&
         a.evaluations <= b.evaluations;
}

PrimaryPopulation initial_primary(std::uint64_t seed, RobotId& next_id) {
  PrimaryPopulation p;
  p.members.reserve(kPrimarySize);
  for (Species s : kAllSpecies)
    for (int k = 0; k < kPrimaryPerSpecies; ++k) {
      RobotRecord r;
      r.genome = random_genome(
          s, derive_seed(seed, Stream::kPrimaryInit, static_cast<std::uint64_t>(s), k),
          next_id++);
      p.members.push_back(std::move(r));
    }
  return p;
}

TournamentResult tournament(PrimaryPopulation& population, std::uint64_t seed,
                            std::optional<std::size_t> on_screen, RobotId& next_id,
                            std::int64_t tick) {
  TournamentResult result;
  std::vector<std::size_t> pool;
  pool.reserve(population.members.size());
  for (std::size_t i = 0; i < population.members.size(); ++i)
    if (!on_screen || i != *on_screen) pool.push_back(i);
  if (pool.size() < 2) return result;

  Rng rng(seed);
  const std::size_t a = rng.index(pool.size());
  std::size_t b = rng.index(pool.size() - 1);
  if (b >= a) ++b;
  result.first = pool[a];
  result.second = pool[b];

  const RobotRecord& ra = population.members[result.first];
  const RobotRecord& rb = population.members[result.second];
  if (dominates(ra, rb)) {
    result.winner = result.first;
    result.loser = result.second;
  } else if (dominates(rb, ra)) {
    result.winner = result.second;
    result.loser = result.first;
  } else {
    return result;
  }
  result.replaced = true;
  result.mutation_seed = rng.next();
  RobotRecord child;
  child.genome = mutate(population.members[result.winner].genome, result.mutation_seed, next_id++);
  child.born_tick = tick;
  result.child = child.genome;
  population.members[result.loser] = std::move(child);
  return result;
}

std::size_t SecondaryPopulation::size() const {
  std::size_t n = 0;
  for (const Subpopulation& s : species) n += s.size();
  return n;
}

double secondary_fitness(const RobotGenome& genome) {
  const auto plus = sampled_trajectory(genome, +1.0);
  const auto minus = sampled_trajectory(genome, -1.0);
  // Samples are already every kTrajectoryStride-th step.
  return trajectory_distance(plus, minus, 1);
}

SecondaryPopulation initial_secondary(std::uint64_t seed, RobotId& next_id) {
  SecondaryPopulation p;
  for (Species s : kAllSpecies) {
    Subpopulation& sub = p.species[static_cast<std::size_t>(s)];
    sub.reserve(kSecondaryPerSpecies);
    for (int k = 0; k < kSecondaryPerSpecies; ++k) {
      SecondaryMember m;
      m.genome = random_genome(
          s, derive_seed(seed, Stream::kSecondaryInit, static_cast<std::uint64_t>(s), k),
          next_id++);
      m.fitness = secondary_fitness(m.genome);
      sub.push_back(std::move(m));
    }
  }
  return p;
}

std::uint64_t hill_climb_child_seed(std::uint64_t generation_seed, std::size_t index) {
  return derive_seed(generation_seed, Stream::kMutation, index);
}

std::vector<AcceptedChild> hill_climb_generation(Subpopulation& sub,
                                                 std::uint64_t generation_seed,
                                                 RobotId& next_id) {
  std::vector<AcceptedChild> accepted;
  for (std::size_t i = 0; i < sub.size(); ++i) {
    RobotGenome child = mutate(sub[i].genome, hill_climb_child_seed(generation_seed, i), 0);
    const double f = secondary_fitness(child);
    if (!(f > sub[i].fitness)) continue;
    child.id = next_id++;
    accepted.push_back({i, child.id, f});
    sub[i] = {std::move(child), f};
  }
  return accepted;
}

void apply_hill_climb(Subpopulation& sub, std::uint64_t generation_seed,
                      const std::vector<AcceptedChild>& accepted) {
  for (const AcceptedChild& a : accepted) {
    RobotGenome child =
        mutate(sub.at(a.index).genome, hill_climb_child_seed(generation_seed, a.index), a.child_id);
    sub[a.index] = {std::move(child), a.fitness};
  }
}

Injection plan_injection(const SecondaryPopulation& secondary, const PrimaryPopulation& primary,
                         std::uint64_t seed, RobotId& next_id) {
  Rng rng(seed);
  Injection inj;
  std::size_t k = rng.index(secondary.size());
  for (Species s : kAllSpecies) {
    const std::size_t n = secondary.species[static_cast<std::size_t>(s)].size();
    if (k < n) {
      inj.species = s;
      inj.secondary_index = k;
      break;
    }
    k -= n;
  }
  inj.injected_id =
      secondary.species[static_cast<std::size_t>(inj.species)][inj.secondary_index].genome.id;

  std::int64_t fewest = INT64_MAX;
  for (const RobotRecord& r : primary.members) fewest = std::min(fewest, r.evaluations);
  std::vector<std::size_t> tied;
  for (std::size_t i = 0; i < primary.members.size(); ++i)
    if (primary.members[i].evaluations == fewest) tied.push_back(i);
  inj.primary_index = tied[rng.index(tied.size())];
  inj.replaced_id = primary.members[inj.primary_index].genome.id;

  inj.refill_seed = rng.next();
  inj.refill_id = next_id++;
  inj.refill_fitness = secondary_fitness(random_genome(inj.species, inj.refill_seed, inj.refill_id));
  return inj;
}

void apply_injection(SecondaryPopulation& secondary, PrimaryPopulation& primary,
                     const Injection& injection, std::int64_t tick) {
  Subpopulation& sub = secondary.species[static_cast<std::size_t>(injection.species)];
  RobotRecord r;
  r.genome = sub.at(injection.secondary_index).genome;
  r.born_tick = tick;
  r.silver_pending = true;
  primary.members.at(injection.primary_index) = std::move(r);
  sub[injection.secondary_index] = {
      random_genome(injection.species, injection.refill_seed, injection.refill_id),
      injection.refill_fitness};
}

Injection inject(SecondaryPopulation& secondary, PrimaryPopulation& primary, std::uint64_t seed,
                 RobotId& next_id, std::int64_t tick) {
  const Injection inj = plan_injection(secondary, primary, seed, next_id);
  apply_injection(secondary, primary, inj, tick);
  return inj;
}

}  // namespace crowdbots
