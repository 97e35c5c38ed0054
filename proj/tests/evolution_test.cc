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

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "crowdbots/rng.h"
#include "crowdbots/simulation.h"
#include "support/reference.h"

namespace crowdbots {
namespace {

RobotRecord record(std::int64_t pop, std::int64_t ob, std::int64_t ev) {
  RobotRecord r;
  r.likes = std::max<std::int64_t>(pop, 0);
  r.dislikes = std::max<std::int64_t>(-pop, 0);
  r.yeses = std::max<std::int64_t>(ob, 0);
  r.nos = std::max<std::int64_t>(-ob, 0);
  r.evaluations = ev;
  return r;
}

TEST(Dominates, Examples) {
  EXPECT_TRUE(dominates(record(3, 5, 10), record(2, 4, 10)));
  EXPECT_FALSE(dominates(record(3, 5, 10), record(3, 5, 10)));
  EXPECT_FALSE(dominates(record(3, 5, 11), record(2, 4, 10)));
  EXPECT_FALSE(dominates(record(3, 4, 10), record(2, 4, 10)));
  EXPECT_TRUE(dominates(record(3, 5, 9), record(2, 4, 10)));
}

TEST(DominatesProperty, IrreflexiveAndAsymmetric) {
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<int> c(0, 4);
  int violations = 0, dominating = 0;
  for (int i = 0; i < 100000; ++i) {
    RobotRecord a, b;
    for (RobotRecord* r : {&a, &b}) {
      r->likes = c(gen);
      r->dislikes = c(gen);
      r->yeses = c(gen);
      r->nos = c(gen);
      r->evaluations = c(gen);
    }
    violations += dominates(a, a) || dominates(b, b);
    violations += dominates(a, b) && dominates(b, a);
    dominating += dominates(a, b);
  }
  EXPECT_EQ(violations, 0);
  EXPECT_GT(dominating, 1000);  // the sample exercises both outcomes
}

TEST(Populations, InitialSizesAndSpeciesMix) {
  RobotId next = 1;
  const PrimaryPopulation primary = initial_primary(3, next);
  ASSERT_EQ(primary.members.size(), 50u);
  std::map<Species, int> count;
  std::set<RobotId> ids;
  for (const RobotRecord& r : primary.members) {
    ++count[r.genome.species];
    ids.insert(r.genome.id);
    EXPECT_EQ(r.evaluations, 0);
  }
  for (Species s : kAllSpecies) EXPECT_EQ(count[s], 5);
  EXPECT_EQ(ids.size(), 50u);
  EXPECT_EQ(next, 51u);

  RobotId n2 = 1;
  EXPECT_EQ(initial_primary(3, n2), primary);
}

TEST(Populations, InitialSecondary) {
  RobotId next = 100;
  const SecondaryPopulation sec = initial_secondary(5, next);
  EXPECT_EQ(sec.size(), 200u);
  for (Species s : kAllSpecies) {
    const Subpopulation& sub = sec.species[static_cast<std::size_t>(s)];
    ASSERT_EQ(sub.size(), 20u);
    for (const SecondaryMember& m : sub) {
      EXPECT_EQ(m.genome.species, s);
      EXPECT_GE(m.fitness, 0.0);
      EXPECT_EQ(m.fitness, secondary_fitness(m.genome));
    }
  }
}

TEST(Tournament, TieLeavesPopulationUnchanged) {
  RobotId next = 1;
  PrimaryPopulation p = initial_primary(1, next);
  const PrimaryPopulation before = p;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const TournamentResult r = tournament(p, seed, std::nullopt, next, 0);
    EXPECT_FALSE(r.replaced);
    EXPECT_NE(r.first, r.second);
  }
  EXPECT_EQ(p, before);
  EXPECT_EQ(next, 51u);
}

TEST(Tournament, DominatorsChildReplacesLoser) {
  RobotId next = 1;
  PrimaryPopulation p = initial_primary(1, next);
  for (std::size_t i = 0; i < p.members.size(); ++i) {
    RobotRecord& r = p.members[i];
    r.likes = r.yeses = static_cast<std::int64_t>(i);
    r.evaluations = 1;
  }
  int replaced = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const PrimaryPopulation before = p;
    const RobotId id = next;
    const TournamentResult r = tournament(p, seed, std::nullopt, next, 7);
    ASSERT_EQ(p.members.size(), 50u);
    if (!r.replaced) continue;
    ++replaced;
    const RobotRecord& child = p.members[r.loser];
    const RobotRecord& winner = before.members[r.winner];
    EXPECT_TRUE(dominates(winner, before.members[r.loser]));
    EXPECT_EQ(child.genome.id, id);
    EXPECT_EQ(child.genome.lineage, winner.genome.id);
    EXPECT_EQ(child.genome, mutate(winner.genome, r.mutation_seed, id));
    EXPECT_EQ(child.likes + child.dislikes + child.yeses + child.nos + child.evaluations, 0);
    EXPECT_EQ(child.born_tick, 7);
    for (std::size_t i = 0; i < 50; ++i)
      if (i != r.loser) EXPECT_EQ(p.members[i], before.members[i]);
  }
  EXPECT_GT(replaced, 0);
}

TEST(TournamentProperty, NeverPicksTheOnScreenRobot) {
  RobotId next = 1;
  PrimaryPopulation p = initial_primary(1, next);
  std::set<std::size_t> seen;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const std::size_t screen = seed % 50;
    const TournamentResult r = tournament(p, seed, screen, next, 0);
    ASSERT_NE(r.first, screen);
    ASSERT_NE(r.second, screen);
    ASSERT_NE(r.first, r.second);
    seen.insert(r.first);
  }
  EXPECT_EQ(seen.size(), 50u);
}

// A snakebot whose two hidden units form an oscillator; the command biases
// the first unit, shifting the gait. Sensor weights are zero, so the
// reference model can run the controller on its own.
RobotGenome oscillator() {
  RobotGenome g = random_genome(Species::kSnakebot, 1, 1);
  ControllerGenome& c = g.controller;
  std::fill(c.w_in.begin(), c.w_in.end(), 0.0);
  std::fill(c.w_hh.begin(), c.w_hh.end(), 0.0);
  std::fill(c.w_out.begin(), c.w_out.end(), 0.0);
  c.in(c.command_row(), 0) = 0.5;
  c.in(c.bias_row(), 1) = 0.1;
  c.hh(0, 0) = 1.0;
  c.hh(1, 0) = -1.0;
  c.hh(0, 1) = 1.0;
  c.hh(1, 1) = 1.0;
  c.out(0, 0) = 1.0;
  c.out(1, 1) = 1.0;
  return g;
}

std::vector<Vec3> reference_samples(double command) {
  testing::SnakeState s;
  s.z = testing::snake_rest_height(0, 0);
  double h0 = 0, h1 = 0;
  std::vector<Vec3> out;
  for (int t = 0; t < kEvaluationSteps; ++t) {
    const double n0 = std::tanh(0.5 * command + h0 - h1);
    const double n1 = std::tanh(0.1 + h0 + h1);
    h0 = n0;
    h1 = n1;
    s = testing::snake_step(s, std::tanh(h0), std::tanh(h1));
    if (t % 18 == 0) out.push_back({s.x, 0.0, s.z});
  }
  return out;
}

TEST(SecondaryFitness, OscillatorMatchesReferenceDistance) {
  const RobotGenome g = oscillator();
  const auto plus = reference_samples(1.0), minus = reference_samples(-1.0);
  double sum = 0;
  for (std::size_t i = 0; i < plus.size(); ++i)
    sum += (plus[i].x - minus[i].x) * (plus[i].x - minus[i].x);
  const double want = std::sqrt(sum);
  EXPECT_GT(want, 0.1);
  EXPECT_NEAR(secondary_fitness(g), want, 1e-9 * std::max(1.0, want));
  const auto sampled = sampled_trajectory(g, 1.0);
  for (std::size_t i = 0; i < sampled.size(); ++i)
    ASSERT_NEAR(sampled[i].x, plus[i].x, 1e-9) << i;
}

TEST(SecondaryFitness, CommandBlindGenomeScoresZero) {
  for (Species s : kAllSpecies) {
    RobotGenome g = random_genome(s, 4);
    for (int h = 0; h < kHiddenSize; ++h) g.controller.in(g.controller.command_row(), h) = 0;
    EXPECT_EQ(secondary_fitness(g), 0.0) << species_name(s);
    EXPECT_GE(secondary_fitness(random_genome(s, 5)), 0.0);
  }
}

Subpopulation small_sub(Species s, std::uint64_t seed, RobotId& next) {
  Subpopulation sub;
  for (int k = 0; k < kSecondaryPerSpecies; ++k) {
    SecondaryMember m{random_genome(s, derive_seed(seed, Stream::kGenome, k), next++), 0.0};
    m.fitness = secondary_fitness(m.genome);
    sub.push_back(std::move(m));
  }
  return sub;
}

// Every member's child fitness is computed up front and the parent's
// fitness pinned to exactly that value, then to just below it.
TEST(HillClimb, EqualFitnessKeepsParentStrictImprovementReplaces) {
  RobotId next = 1;
  Subpopulation sub = small_sub(Species::kStarfishbot, 3, next);
  const std::uint64_t gen_seed = 77;
  std::vector<double> child_fitness;
  for (std::size_t i = 0; i < sub.size(); ++i)
    child_fitness.push_back(
        secondary_fitness(mutate(sub[i].genome, hill_climb_child_seed(gen_seed, i), 0)));

  Subpopulation equal = sub;
  for (std::size_t i = 0; i < equal.size(); ++i) equal[i].fitness = child_fitness[i];
  const Subpopulation equal_before = equal;
  RobotId ids = 1000;
  EXPECT_TRUE(hill_climb_generation(equal, gen_seed, ids).empty());
  EXPECT_EQ(equal, equal_before);
  EXPECT_EQ(ids, 1000u);

  Subpopulation below = sub;
  for (std::size_t i = 0; i < below.size(); ++i)
    below[i].fitness = std::nextafter(child_fitness[i], -1.0);
  // One ulp below is enough for every child to win.
  const auto accepted = hill_climb_generation(below, gen_seed, ids);
  EXPECT_EQ(accepted.size(), sub.size());
  for (std::size_t k = 0; k < accepted.size(); ++k) {
    EXPECT_EQ(accepted[k].index, k);
    EXPECT_EQ(accepted[k].child_id, 1000u + k);
    EXPECT_EQ(below[k].fitness, child_fitness[k]);
    EXPECT_EQ(below[k].genome.lineage, sub[k].genome.id);
  }
}

TEST(HillClimb, ReplayWithoutSimulationGivesSamePopulation) {
  RobotId next = 1;
  Subpopulation live = small_sub(Species::kTablebot, 9, next);
  Subpopulation replayed = live;
  for (std::uint64_t gen = 0; gen < 5; ++gen) {
    const auto accepted =
        hill_climb_generation(live, derive_seed(1, Stream::kHillClimb, gen), next);
    apply_hill_climb(replayed, derive_seed(1, Stream::kHillClimb, gen), accepted);
    ASSERT_EQ(live, replayed);
  }
}

// Property: per-lineage fitness never decreases and sizes hold.
TEST(HillClimbProperty, LineageFitnessIsMonotoneOverFiftyGenerations) {
  for (Species s : {Species::kSnakebot, Species::kTwigbot}) {
    RobotId next = 1;
    Subpopulation sub = small_sub(s, 1, next);
    double start = 0;
    for (const auto& m : sub) start += m.fitness;
    for (std::uint64_t gen = 0; gen < 50; ++gen) {
      const Subpopulation before = sub;
      hill_climb_generation(sub, derive_seed(2, Stream::kHillClimb, gen), next);
      ASSERT_EQ(sub.size(), 20u);
      for (std::size_t i = 0; i < sub.size(); ++i) {
        ASSERT_GE(sub[i].fitness, before[i].fitness);
        if (sub[i].fitness > before[i].fitness)
          ASSERT_EQ(sub[i].genome.lineage, before[i].genome.id);
        else
          ASSERT_EQ(sub[i], before[i]);
      }
    }
    double end = 0;
    for (const auto& m : sub) end += m.fitness;
    EXPECT_GT(end, start) << species_name(s);
  }
}

TEST(Inject, ReplacesUniqueLeastEvaluatedMember) {
  RobotId next = 1;
  PrimaryPopulation primary = initial_primary(1, next);
  SecondaryPopulation secondary = initial_secondary(1, next);
  for (RobotRecord& r : primary.members) r.evaluations = 3;
  primary.members[17].evaluations = 1;
  const RobotId replaced = primary.members[17].genome.id;
  const Injection inj = inject(secondary, primary, 5, next, 120);
  EXPECT_EQ(inj.primary_index, 17u);
  EXPECT_EQ(inj.replaced_id, replaced);
  EXPECT_EQ(primary.members[17].genome.id, inj.injected_id);
  EXPECT_TRUE(primary.members[17].silver_pending);
  EXPECT_EQ(primary.members[17].born_tick, 120);
  EXPECT_EQ(primary.members.size(), 50u);
  EXPECT_EQ(secondary.size(), 200u);
  const SecondaryMember& refill =
      secondary.species[static_cast<std::size_t>(inj.species)][inj.secondary_index];
  EXPECT_EQ(refill.genome.species, inj.species);
  EXPECT_EQ(refill.genome.id, inj.refill_id);
  EXPECT_EQ(refill.fitness, secondary_fitness(refill.genome));
}

TEST(Inject, TieIsBrokenUniformly) {
  RobotId next = 1;
  PrimaryPopulation primary = initial_primary(1, next);
  const SecondaryPopulation secondary = initial_secondary(1, next);
  for (RobotRecord& r : primary.members) r.evaluations = 4;
  for (std::size_t i : {3u, 20u, 41u}) primary.members[i].evaluations = 0;
  std::map<std::size_t, int> hits;
  std::map<Species, int> species;
  const int trials = 1500;
  for (int k = 0; k < trials; ++k) {
    RobotId ids = 10000;
    const Injection inj =
        plan_injection(secondary, primary, derive_seed(8, Stream::kInjection, k), ids);
    ++hits[inj.primary_index];
    ++species[inj.species];
  }
  ASSERT_EQ(hits.size(), 3u);
  // Binomial(1500, 1/3): mean 500, sd ~18.3; allow 4 sd.
  for (const auto& [i, n] : hits) EXPECT_NEAR(n, 500, 73) << i;
  // Binomial(1500, 1/10): mean 150, sd ~11.6.
  for (Species s : kAllSpecies) EXPECT_NEAR(species[s], 150, 47) << species_name(s);
}

}  // namespace
}  // namespace crowdbots
