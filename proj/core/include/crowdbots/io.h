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

// File formats: genomes as JSON, evaluation traces as a compact binary record
// or a JSON debug form, and the columnar evaluation dataset. See
// docs/formats.md for the byte-level layouts.

#ifndef CROWDBOTS_IO_H_
#define CROWDBOTS_IO_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crowdbots/critic.h"
#include "crowdbots/morphology.h"
#include "crowdbots/simulation.h"

namespace crowdbots {

nlohmann::json genome_to_json(const RobotGenome& g);
// Throws FormatError (malformed) or DimensionError (invalid genome).
RobotGenome genome_from_json(const nlohmann::json& j);

// Little-endian binary record tagged with the species-table checksum.
std::string trace_to_binary(const EvaluationTrace& trace);
// Throws FormatError on a bad magic, version, checksum or length.
EvaluationTrace trace_from_binary(const std::string& bytes);
nlohmann::json trace_to_json(const EvaluationTrace& trace);

// Tab-separated dataset, one evaluation per line:
//   evaluation_id robot_id species command e_y e_n o f0 .. f399
// preceded by a "# crowdbots-evaluations 1 <species-table checksum>" line
// and a column header. o is "NA" when the evaluation got no yes/no votes.
inline constexpr std::string_view kDatasetMagic = "# crowdbots-evaluations 1";

void write_dataset_header(std::ostream& out);
void write_dataset_row(std::ostream& out, const Example& e);
// Rows with undefined o are kept with o = NaN. Throws FormatError.
std::vector<Example> read_dataset(std::istream& in);
std::vector<Example> read_dataset(const std::filesystem::path& path);

// Whole-file helpers. write_file creates missing parent directories. Both
// throw Error("io_error") when the file cannot be used.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace crowdbots

#endif  // CROWDBOTS_IO_H_
