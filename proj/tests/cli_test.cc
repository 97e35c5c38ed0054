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

// Drives the crowdbots binary the way a script would.

#include <sys/wait.h>

#include <gtest/gtest.h>

#include <cstdio>
#include <map>
#include <regex>
#include <sstream>
#include <string>

#include "crowdbots/io.h"
#include "support/reference.h"

namespace crowdbots {
namespace {

struct Result {
  int exit_code = -1;
  std::string out;
  std::string err;

  // "key value" lines from stdout.
  std::map<std::string, std::string> fields() const {
    std::map<std::string, std::string> f;
    std::istringstream in(out);
    for (std::string k, v; in >> k >> v;) f[k] = v;
    return f;
  }
};

Result cli(const std::string& args, const testing::TempDir& scratch) {
  const auto err_path = scratch.path() / "stderr.txt";
  const std::string cmd = std::string("cd '") + scratch.path().string() + "' && '" + CROWDBOTS_CLI +
                          "' " + args + " 2>'" + err_path.string() + "'";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int status = pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = read_file(err_path);
  return r;
}

// One line, "error: <code>: <message>".
void expect_error_line(const Result& r, int exit_code, const std::string& code) {
  EXPECT_EQ(r.exit_code, exit_code);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
  EXPECT_TRUE(std::regex_search(r.err, std::regex("^error: " + code + ": \\S")))
      << r.err;
}

TEST(Cli, SpeciesTableMatchesShippedFile) {
  const testing::TempDir dir("cli");
  const Result r = cli("species-table", dir);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, read_file(CROWDBOTS_DATA_DIR "/species_table.json"));
}

TEST(Cli, UsageErrorsExitTwo) {
  const testing::TempDir dir("cli");
  expect_error_line(cli("run --no-such-flag", dir), 2, "usage");
  expect_error_line(cli("train-critic --data x", dir), 2, "usage");
  expect_error_line(cli("run --ticks many", dir), 2, "usage");
}

TEST(Cli, RuntimeErrorsExitOneWithACode) {
  const testing::TempDir dir("cli");
  expect_error_line(cli("replay /nonexistent/events.ndjson", dir), 1, "io_error");
  expect_error_line(cli("train-critic --species unicornbot --data .", dir), 1, "unknown_species");
  expect_error_line(cli("run --oracle /nonexistent.json --ticks 1", dir), 1, "io_error");
  expect_error_line(cli("run --ticks -3", dir), 1, "invalid_argument");
  write_file(dir.path() / "bad.json",
             R"({"format":"crowdbots-oracle","version":1,"noise_rate":0.7})");
  expect_error_line(cli("run --oracle bad.json --ticks 1", dir), 1, "invalid_config");
  write_file(dir.path() / "garbage.ndjson", "{\"seq\":0}\nnot json\n");
  expect_error_line(cli("replay garbage.ndjson", dir), 1, "malformed_input");
}

TEST(Cli, RunThenReplayAgree) {
  const testing::TempDir dir("cli");
  const std::string run =
      "run --oracle default --seed 9 --ticks 40 --generations 2 --injection-ticks 20 --out s";
  const Result a = cli(run, dir);
  ASSERT_EQ(a.exit_code, 0) << a.err;
  const auto live = a.fields();
  EXPECT_EQ(live.at("ticks"), "40");
  const Result r = cli("replay s", dir);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto replayed = r.fields();
  EXPECT_EQ(replayed.at("log_hash"), live.at("log_hash"));
  EXPECT_EQ(replayed.at("state_hash"), live.at("state_hash"));
  EXPECT_EQ(replayed.at("events"), live.at("events"));
  EXPECT_EQ(replayed.at("snapshots_verified"), "2");
  EXPECT_EQ(replayed.at("truncated"), "no");
  const Result again = cli(run + "2", dir);
  EXPECT_EQ(again.fields().at("log_hash"), live.at("log_hash"));
  EXPECT_EQ(read_file(dir.path() / "s" / "events.ndjson"),
            read_file(dir.path() / "s2" / "events.ndjson"));
}

TEST(Cli, InsufficientDataIsRefusedWithTheShortfall) {
  const testing::TempDir dir("cli");
  const Result run = cli("run --oracle " CROWDBOTS_DATA_DIR
                         "/oracles/starve-twigbot.json --ticks 120 --generations 0 --out s",
                         dir);
  ASSERT_EQ(run.exit_code, 0) << run.err;
  const Result r = cli("train-critic --species twigbot --data s", dir);
  expect_error_line(r, 1, "insufficient_data");
  EXPECT_NE(r.err.find("twigbot"), std::string::npos);
  EXPECT_NE(r.err.find("have 0 positive"), std::string::npos);
  EXPECT_NE(r.err.find("short 100 positive"), std::string::npos);
}

TEST(Cli, TrainAndReport) {
  const testing::TempDir dir("cli");
  ASSERT_EQ(
      cli("run --oracle default --seed 1 --ticks 1500 --generations 0 --out s", dir).exit_code, 0);
  const Result t = cli("train-critic --species starfishbot --data s --per-class 10 --folds 4 "
                       "--epochs 3 --quiet",
                       dir);
  ASSERT_EQ(t.exit_code, 0) << t.err;
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "s" / "critic-starfishbot.json"));
  const auto critic =
      nlohmann::json::parse(read_file(dir.path() / "s" / "critic-starfishbot.json"));
  EXPECT_EQ(critic.at("folds").size(), 4u);
  const Result rep = cli("report s", dir);
  ASSERT_EQ(rep.exit_code, 0) << rep.err;
  EXPECT_NE(rep.out.find("starfishbot"), std::string::npos);
  EXPECT_NE(rep.out.find("experiment"), std::string::npos);
  EXPECT_NE(rep.out.find("permuted"), std::string::npos);
}

TEST(Cli, EvaluatePrintsASummary) {
  const testing::TempDir dir("cli");
  const Result r = cli("evaluate --species snakebot --seed 3 --code 0.5", dir);
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_FALSE(r.out.empty());
  const Result j = cli("evaluate --species snakebot --seed 3 --json", dir);
  ASSERT_EQ(j.exit_code, 0);
  EXPECT_EQ(nlohmann::json::parse(j.out).at("frames").size(), 1800u);
}

}  // namespace
}  // namespace crowdbots
