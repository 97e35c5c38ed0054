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

#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "crowdbots/critic.h"
#include "crowdbots/evolution.h"
#include "crowdbots/io.h"
#include "crowdbots/platform.h"
#include "crowdbots/replay.h"
#include "crowdbots/simulation.h"
#include "crowdbots/synthcrowd.h"

namespace crowdbots {
namespace {

// One 30 s evaluation (1800 steps). Arg is the species index.
void BM_Evaluate(benchmark::State& state) {
  const Species s = kAllSpecies[state.range(0)];
  const RobotGenome g = random_genome(s, 7);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(g, 0.3, "move"));
  state.SetLabel(std::string(species_name(s)));
}
BENCHMARK(BM_Evaluate)->DenseRange(0, kSpeciesCount - 1)->Unit(benchmark::kMillisecond);

// Two evaluations; the hill climber runs 200 of these per generation.
void BM_SecondaryFitness(benchmark::State& state) {
  const RobotGenome g = random_genome(Species::kStarfishbot, 3);
  for (auto _ : state) benchmark::DoNotOptimize(secondary_fitness(g));
}
BENCHMARK(BM_SecondaryFitness)->Unit(benchmark::kMillisecond);

void BM_BuildFeatures(benchmark::State& state) {
  const EvaluationTrace t = evaluate(random_genome(Species::kTreebot, 2), 0.1, "move");
  for (auto _ : state) benchmark::DoNotOptimize(build_features(t));
}
BENCHMARK(BM_BuildFeatures);

std::vector<std::vector<double>> sequences(int n) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> d(0, 1);
  std::vector<std::vector<double>> out(n, std::vector<double>(kFeatureRows * kFeatureColumns));
  for (auto& s : out)
    for (double& v : s) v = d(gen);
  return out;
}

// Arg is the batch size.
void BM_CriticForward(benchmark::State& state) {
  const CriticModel m(CriticShape{}, 1);
  const auto seqs = sequences(static_cast<int>(state.range(0)));
  const std::vector<std::span<const double>> views(seqs.begin(), seqs.end());
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(views));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CriticForward)->Arg(1)->Arg(16)->Arg(200);

// Loss and full BPTT gradient for one training batch with dropout.
void BM_CriticBackward(benchmark::State& state) {
  const CriticModel m(CriticShape{}, 1);
  const auto seqs = sequences(static_cast<int>(state.range(0)));
  const std::vector<std::span<const double>> views(seqs.begin(), seqs.end());
  const std::vector<double> targets(seqs.size(), 0.5);
  std::vector<double> grad;
  for (auto _ : state) benchmark::DoNotOptimize(m.loss(views, targets, &grad, 0.2, 3));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CriticBackward)->Arg(16);

// Replays a short oracle session held in memory.
void BM_Replay(benchmark::State& state) {
  const auto dir = std::filesystem::temp_directory_path() / "crowdbots-bench-replay";
  std::filesystem::remove_all(dir);
  {
    SessionConfig config;
    config.seed = 2;
    config.schedule.generations = 1;
    config.schedule.injection_ticks = 10;
    config.schedule.snapshot_ticks = 10;
    config.oracle = load_oracle_config("default");
    config.out_dir = dir;
    Platform p(config);
    p.run(state.range(0));
  }
  const std::string log = read_file(dir / kEventLogName);
  std::filesystem::remove_all(dir);
  std::uint64_t events = 0;
  for (auto _ : state) {
    std::istringstream in(log);
    events += replay(in).events;
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(events));
}
BENCHMARK(BM_Replay)->Arg(60)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace crowdbots

BENCHMARK_MAIN();
