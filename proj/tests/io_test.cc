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

#include "crowdbots/io.h"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "crowdbots/rng.h"
#include "support/reference.h"

namespace crowdbots {
namespace {

TEST(GenomeJson, RoundTripForEverySpecies) {
  for (Species s : kAllSpecies) {
    const RobotGenome g = random_genome(s, derive_seed(1, Stream::kGenome, static_cast<int>(s)));
    const nlohmann::json j = genome_to_json(g);
    EXPECT_EQ(genome_from_json(nlohmann::json::parse(j.dump())), g) << species_name(s);
  }
}

TEST(GenomeJson, Rejections) {
  const nlohmann::json good = genome_to_json(random_genome(Species::kSnakebot, 1));
  auto code_of = [](const nlohmann::json& j) {
    try {
      genome_from_json(j);
    } catch (const Error& e) {
      return e.code();
    }
    return std::string("ok");
  };
  EXPECT_EQ(code_of(good), "ok");
  nlohmann::json j = good;
  j["species"] = "unicornbot";
  EXPECT_EQ(code_of(j), "unknown_species");
  j = good;
  j.erase("species");
  EXPECT_EQ(code_of(j), "malformed_input");
  EXPECT_EQ(code_of(nlohmann::json::array()), "malformed_input");
  // Mutating the weights' shape gives a genome the species cannot run.
  bool shrunk = false;
  j = good;
  for (auto& [key, value] : j.items())
    if (!shrunk && value.is_array() && value.size() > 1 && value[0].is_number()) {
      value.erase(value.size() - 1);
      shrunk = true;
    }
  for (auto& [key, value] : j.items())
    if (!shrunk && value.is_object())
      for (auto& [k2, v2] : value.items())
        if (!shrunk && v2.is_array() && v2.size() > 1) {
          v2.erase(v2.size() - 1);
          shrunk = true;
        }
  ASSERT_TRUE(shrunk);
  const std::string c = code_of(j);
  EXPECT_TRUE(c == "dimension_mismatch" || c == "malformed_input") << c;
}

TEST(TraceBinary, RoundTrip) {
  for (Species s : {Species::kSnakebot, Species::kTreebot, Species::kCrabbot}) {
    const EvaluationTrace t = evaluate(random_genome(s, 3), 0.4, "walk");
    const std::string bytes = trace_to_binary(t);
    EXPECT_EQ(trace_from_binary(bytes), t);
    EXPECT_EQ(trace_to_binary(trace_from_binary(bytes)), bytes);
  }
}

// Property: no truncation of a record parses.
TEST(TraceBinaryProperty, TruncationsAreRejected) {
  const std::string bytes = trace_to_binary(testing::random_trace(Species::kSnakebot, 4));
  for (std::size_t n = 0; n < bytes.size(); n += 1 + n / 8)
    EXPECT_THROW(trace_from_binary(bytes.substr(0, n)), FormatError) << n;
  EXPECT_THROW(trace_from_binary(bytes + "x"), FormatError);
}

TEST(TraceBinary, HeaderCorruptionIsRejected) {
  const std::string bytes = trace_to_binary(testing::random_trace(Species::kSnakebot, 4));
  // Magic and version, then the species-table checksum.
  for (std::size_t i = 0; i < 16; ++i) {
    std::string bad = bytes;
    bad[i] = static_cast<char>(bad[i] ^ 0x5a);
    try {
      trace_from_binary(bad);
      ADD_FAILURE() << "byte " << i << " accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), i < 8 ? "malformed_input" : "checksum_mismatch") << i;
    }
  }
}

TEST(TraceJson, Fields) {
  const EvaluationTrace t = testing::random_trace(Species::kCrabbot, 2);
  const nlohmann::json j = trace_to_json(t);
  EXPECT_EQ(j.at("species"), "crabbot");
  ASSERT_EQ(j.at("frames").size(), 1800u);
  EXPECT_EQ(j.at("frames")[5].at("head"),
            nlohmann::json({t.trajectory[5].x, t.trajectory[5].y, t.trajectory[5].z}));
  EXPECT_EQ(j.at("frames")[5].at("proprioception").size(), static_cast<std::size_t>(t.joint_count));
}

Example row(std::uint64_t id, std::int64_t y, std::int64_t n, const std::string& cmd) {
  Example e;
  e.evaluation_id = id;
  e.robot_id = id * 7;
  e.species = Species::kTablebot;
  e.command = cmd;
  e.e_y = y;
  e.e_n = n;
  e.o = normalized_reinforcement(y, n, cmd).value_or(std::nan(""));
  e.features = build_features(testing::random_trace(Species::kTablebot, id));
  return e;
}

TEST(Dataset, RoundTripIsExact) {
  std::stringstream ss;
  write_dataset_header(ss);
  const std::vector<Example> rows{row(1, 3, 1, "move"), row(2, 0, 2, "stop"),
                                  row(3, 1, 0, "walk backwards")};
  for (const Example& e : rows) write_dataset_row(ss, e);
  EXPECT_EQ(read_dataset(ss), rows);
}

TEST(Dataset, UndefinedLabelsSurviveAsNaN) {
  std::stringstream ss;
  write_dataset_header(ss);
  write_dataset_row(ss, row(1, 0, 0, "move"));
  EXPECT_NE(ss.str().find("\tNA\t"), std::string::npos);
  const auto back = read_dataset(ss);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_TRUE(std::isnan(back[0].o));
  EXPECT_EQ(back[0].e_y + back[0].e_n, 0);
}

TEST(Dataset, Rejections) {
  std::stringstream good;
  write_dataset_header(good);
  write_dataset_row(good, row(1, 3, 1, "move"));
  const std::string text = good.str();
  auto code_of = [](const std::string& s) {
    std::istringstream in(s);
    try {
      read_dataset(in);
    } catch (const Error& e) {
      return e.code();
    }
    return std::string("ok");
  };
  auto fails = [&](const std::string& s) { return code_of(s) == "malformed_input"; };
  EXPECT_FALSE(fails(text));
  EXPECT_TRUE(fails(""));
  EXPECT_TRUE(fails("# crowdbots-evaluations 2 0\n"));
  // Another species table.
  std::string other = text;
  other.replace(other.find(' ', kDatasetMagic.size()) + 1, 4, "ffff");
  EXPECT_EQ(code_of(other), "checksum_mismatch");
  // Drop the last column of the data row.
  std::string short_row = text.substr(0, text.rfind('\t')) + "\n";
  EXPECT_TRUE(fails(short_row));
  std::string bad_number = text;
  bad_number.replace(bad_number.rfind('\t') + 1, 1, "z");
  EXPECT_TRUE(fails(bad_number));
}

TEST(Files, MissingFileIsAnIoError) {
  try {
    read_file("/nonexistent/file");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "io_error");
  }
  const testing::TempDir dir("io");
  write_file(dir.path() / "sub" / "x.txt", "hello");
  EXPECT_EQ(read_file(dir.path() / "sub" / "x.txt"), "hello");
}

}  // namespace
}  // namespace crowdbots
