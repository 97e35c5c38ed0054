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

// crowdbots: run sessions, replay logs, train critics and print reports.
//
// Failures print exactly one line, "error: <code>: <message>", to stderr
// and exit nonzero (2 for usage errors, 1 otherwise).

#include <csignal>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crowdbots/critic.h"
#include "crowdbots/io.h"
#include "crowdbots/platform.h"
#include "crowdbots/replay.h"
#include "crowdbots/rng.h"
#include "crowdbots/server.h"
#include "crowdbots/simulation.h"
#include "crowdbots/synthcrowd.h"

namespace fs = std::filesystem;
using namespace crowdbots;

namespace {

Platform* g_platform = nullptr;

extern "C" void on_signal(int) {
  if (g_platform) g_platform->stop();
}

struct RunArgs {
  std::uint64_t seed = 1;
  std::int64_t ticks = 720;
  std::string oracle;
  bool realtime = false;
  std::string serve;
  std::string out = "session";
  Schedule schedule;
};

int run(const RunArgs& a) {
  SessionConfig config;
  config.seed = a.seed;
  config.schedule = a.schedule;
  config.realtime = a.realtime;
  if (!a.oracle.empty()) config.oracle = load_oracle_config(a.oracle);
  config.out_dir = fs::path(a.out);
  if (a.ticks < 0) throw Error("invalid_argument", "--ticks must be non-negative");

  Platform platform(config);
  std::unique_ptr<Server> server;
  platform.start();
  if (!a.serve.empty()) {
    server = std::make_unique<Server>(platform, parse_endpoint(a.serve));
    platform.add_observer(server.get());
    std::cerr << "serving on port " << server->port() << "\n";
  }
  g_platform = &platform;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  for (std::int64_t k = 0; k < a.ticks && !platform.stop_requested(); ++k) platform.run_tick();
  platform.finish();
  g_platform = nullptr;
  if (server) server->stop();

  const PlatformState& s = platform.state();
  std::cout << "ticks " << s.ticks_done << "\n"
            << "events " << platform.events_written() << "\n"
            << "log_hash " << hex64(platform.log_hash()) << "\n"
            << "state_hash " << hex64(state_hash(s)) << "\n"
            << "out " << a.out << "\n";
  return 0;
}

int replay_cmd(const std::string& log, std::optional<std::uint64_t> until) {
  ReplayOptions o;
  o.until_seq = until;
  const ReplayResult r = replay(fs::path(log), o);
  std::cout << "events " << r.events << "\n"
            << "snapshots_verified " << r.snapshots_verified << "\n"
            << "ticks " << r.state.ticks_done << "\n"
            << "truncated " << (r.truncated ? "yes" : "no") << "\n"
            << "log_hash " << hex64(r.log_hash) << "\n"
            << "state_hash " << hex64(state_hash(r.state)) << "\n";
  return 0;
}

struct TrainArgs {
  std::string species;
  std::string data;
  std::string out;
  int folds = 30;
  int epochs = 100;
  int per_class = kExamplesPerClass;
  std::uint64_t seed = 1;
  bool quiet = false;
};

int train_critic(const TrainArgs& a) {
  const Species species = parse_species(a.species);
  if (a.folds < 2) throw Error("invalid_argument", "--folds must be at least 2");
  if (a.epochs < 1) throw Error("invalid_argument", "--epochs must be positive");
  fs::path data = a.data;
  if (fs::is_directory(data)) data /= kEvaluationsName;
  const std::vector<Example> pool = read_dataset(data);
  const Dataset dataset = build_dataset(pool, species, a.seed, a.per_class);

  TrainConfig config;
  config.folds = a.folds;
  config.epochs = a.epochs;
  const CriticReport report = cross_validate(dataset, config, a.seed, {}, [&](const FoldResult& f) {
    if (!a.quiet)
      std::fprintf(stderr, "%s fold %d/%d: mae %.4f permuted %.4f\n", a.species.c_str(), f.fold + 1,
                   a.folds, f.error.absolute_mean, f.permuted.absolute_mean);
  });
  // The deployable critic is trained on every example.
  std::vector<const Example*> all;
  for (const Example& e : dataset.examples) all.push_back(&e);
  const TrainResult final_model = train(all, {}, config, derive_seed(a.seed, Stream::kCriticInit, 0));

  const fs::path out_dir = a.out.empty() ? data.parent_path() : fs::path(a.out);
  fs::create_directories(out_dir);
  const fs::path file = out_dir / ("critic-" + a.species + ".json");
  nlohmann::json j = report.to_json();
  j["seed"] = a.seed;
  j["model"] = final_model.model.to_json(report.dataset_checksum);
  write_file(file, j.dump() + "\n");
  std::printf("%s experiment_mae %.4f permuted_mae %.4f t %.3f p %.3g p_corrected %.3g -> %s\n",
              a.species.c_str(), report.experiment.absolute_mean, report.permuted.absolute_mean,
              report.test.t, report.test.p, report.test.p_corrected, file.string().c_str());
  return 0;
}

double stdev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

int report(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("critic-", 0) == 0 && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  if (files.empty()) throw Error("io_error", "no critic-<species>.json reports in " + dir);
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    auto idx = [](const fs::path& p) {
      const std::string n = p.stem().string().substr(7);
      return static_cast<int>(parse_species(n));
    };
    return idx(a) < idx(b);
  });
  std::printf("%-12s %5s %16s %16s %9s %9s %8s %10s %10s\n", "species", "folds", "experiment MAE",
              "permuted MAE", "M_e", "perm M_e", "t", "p", "p x 120");
  for (const fs::path& f : files) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(f));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(f.string() + ": " + e.what());
    }
    if (j.value("format", "") != "crowdbots-critic-report") throw FormatError(f.string() + ": not a critic report");
    std::vector<double> mae, perm;
    for (const auto& fold : j.at("folds")) {
      mae.push_back(fold.at("mae").get<double>());
      perm.push_back(fold.at("permuted_mae").get<double>());
    }
    char e_buf[32], p_buf[32];
    std::snprintf(e_buf, sizeof e_buf, "%.3f +- %.3f", j["experiment"]["mae"].get<double>(), stdev(mae));
    std::snprintf(p_buf, sizeof p_buf, "%.3f +- %.3f", j["permuted"]["mae"].get<double>(), stdev(perm));
    std::printf("%-12s %5zu %16s %16s %9.4f %9.4f %8.3f %10.3g %10.3g\n",
                j.at("species").get<std::string>().c_str(), mae.size(), e_buf, p_buf,
                j["experiment"]["mean_error"].get<double>(), j["permuted"]["mean_error"].get<double>(),
                j["t_test"]["t"].get<double>(), j["t_test"]["p"].get<double>(),
                j["t_test"]["p_corrected"].get<double>());
  }
  return 0;
}

int evaluate_cmd(const std::string& species, std::uint64_t seed, double code, bool json) {
  const RobotGenome g = random_genome(species, seed, 1);
  const EvaluationTrace t = evaluate(g, code);
  if (json) {
    std::cout << trace_to_json(t).dump() << "\n";
    return 0;
  }
  std::printf("species %s seed %llu code %.6f displacement %.6f fitness %.6f hash %s\n",
              species.c_str(), static_cast<unsigned long long>(seed), code,
              oracle_displacement(t), secondary_fitness(g), hex64(trace_hash(t)).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowd-in-the-loop evolutionary robotics platform"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Run a session (oracle or live clients)");
  run_cmd->add_option("--seed", run_args.seed, "Session seed");
  run_cmd->add_option("--ticks", run_args.ticks, "Number of 30 s ticks");
  run_cmd->add_option("--oracle", run_args.oracle, "Synthetic crowd: 'default' or a config file");
  run_cmd->add_flag("--realtime", run_args.realtime, "Pace ticks at 30 wall seconds");
  run_cmd->add_option("--serve", run_args.serve, "Accept protocol clients on host:port");
  run_cmd->add_option("--out", run_args.out, "Session output directory");
  run_cmd->add_option("--window-ticks", run_args.schedule.window_ticks, "Ticks per command window");
  run_cmd->add_option("--injection-ticks", run_args.schedule.injection_ticks, "Ticks between injections");
  run_cmd->add_option("--generations", run_args.schedule.generations, "Hill-climber generations per injection");
  run_cmd->add_option("--snapshot-ticks", run_args.schedule.snapshot_ticks, "Ticks between snapshots");

  std::string replay_log;
  std::optional<std::uint64_t> replay_until;
  auto* replay_sub = app.add_subcommand("replay", "Rebuild state from an event log and verify snapshots");
  replay_sub->add_option("log", replay_log, "events.ndjson or its session directory")->required();
  replay_sub->add_option("--until", replay_until, "Stop after this sequence number");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train-critic", "Cross-validate a critic for one species");
  train_cmd->add_option("--species", train_args.species, "Species name")->required();
  train_cmd->add_option("--data", train_args.data, "Session directory or evaluations.tsv")->required();
  train_cmd->add_option("--folds", train_args.folds, "Cross-validation folds");
  train_cmd->add_option("--epochs", train_args.epochs, "Training epochs");
  train_cmd->add_option("--seed", train_args.seed, "Dataset, fold and training seed");
  train_cmd->add_option("--per-class", train_args.per_class, "Examples per class");
  train_cmd->add_option("--out", train_args.out, "Output directory (default: next to the data)");
  train_cmd->add_flag("--quiet", train_args.quiet, "No per-fold progress");

  std::string report_dir;
  auto* report_cmd = app.add_subcommand("report", "Experiment vs permuted-control table");
  report_cmd->add_option("dir", report_dir, "Directory with critic-<species>.json")->required();

  app.add_subcommand("species-table", "Print the canonical species table");

  std::string eval_species;
  std::uint64_t eval_seed = 1;
  double eval_code = 1.0;
  bool eval_json = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "Simulate one random genome");
  eval_cmd->add_option("--species", eval_species, "Species name")->required();
  eval_cmd->add_option("--seed", eval_seed, "Genome seed");
  eval_cmd->add_option("--code", eval_code, "Command code in (-1, 1)");
  eval_cmd->add_flag("--json", eval_json, "Print the full trace");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "error: usage: %s\n", msg.c_str());
    return 2;
  }

  try {
    if (*run_cmd) return run(run_args);
    if (*replay_sub) return replay_cmd(replay_log, replay_until);
    if (*train_cmd) return train_critic(train_args);
    if (*report_cmd) return report(report_dir);
    if (*eval_cmd) return evaluate_cmd(eval_species, eval_seed, eval_code, eval_json);
    std::cout << species_table_text();
    return 0;
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "error: %s: %s\n", e.code().c_str(), msg.c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
}
