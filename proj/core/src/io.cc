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

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "crowdbots/hash.h"

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace crowdbots {
namespace {

constexpr char kTraceMagic[4] = {'C', 'B', 'T', 'R'};
constexpr std::uint32_t kTraceVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(T));
  }
  template <typename T>
  void put_all(const std::vector<T>& v) {
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <typename T>
  void get_all(std::vector<T>& v, std::size_t n) {
    if (n > (in_.size() - pos_) / sizeof(T)) throw FormatError("trace record is truncated");
    v.resize(n);
    std::memcpy(v.data(), in_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("trace record is truncated");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view s) {
  if (s == "NA") return std::nan("");
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw FormatError("not a number: '" + std::string(s) + "'");
  return v;
}

template <typename Int>
Int parse_int(std::string_view s) {
  Int v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw FormatError("not an integer: '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

nlohmann::json genome_to_json(const RobotGenome& g) {
  nlohmann::json j;
  j["id"] = g.id;
  j["species"] = species_name(g.species);
  j["lineage"] = g.lineage ? nlohmann::json(*g.lineage) : nlohmann::json(nullptr);
  j["default_angles"] = g.body.default_angles;
  j["w_in"] = g.controller.w_in;
  j["w_hh"] = g.controller.w_hh;
  j["w_out"] = g.controller.w_out;
  return j;
}

RobotGenome genome_from_json(const nlohmann::json& j) {
  RobotGenome g;
  try {
    g.id = j.at("id").get<RobotId>();
    g.species = parse_species(j.at("species").get<std::string>());
    if (!j.at("lineage").is_null()) g.lineage = j.at("lineage").get<RobotId>();
    g.body.default_angles = j.at("default_angles").get<std::vector<double>>();
    const SpeciesSpec& spec = species_spec(g.species);
    g.controller.sensor_count = spec.sensor_count;
    g.controller.motor_count = spec.motor_count;
    g.controller.w_in = j.at("w_in").get<std::vector<double>>();
    g.controller.w_hh = j.at("w_hh").get<std::vector<double>>();
    g.controller.w_out = j.at("w_out").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("genome: ") + e.what());
  }
  validate_genome(g);
  return g;
}

std::string trace_to_binary(const EvaluationTrace& t) {
  Writer w;
  w.put(kTraceMagic);
  w.put(kTraceVersion);
  w.put(species_table_checksum());
  w.put(t.evaluation_id);
  w.put(t.robot_id);
  w.put(static_cast<std::uint8_t>(t.species));
  w.put(static_cast<std::uint8_t>(t.color));
  w.put(t.command_code);
  w.put_string(t.command_text);
  w.put(static_cast<std::uint32_t>(t.segment_count));
  w.put(static_cast<std::uint32_t>(t.joint_count));
  w.put(static_cast<std::uint32_t>(t.eye_count));
  w.put(static_cast<std::uint32_t>(t.frame_count()));
  w.put_all(t.touch);
  w.put_all(t.proprioception);
  w.put_all(t.eyes);
  w.put_all(t.motors);
  w.put_all(t.trajectory);
  return w.take();
}

EvaluationTrace trace_from_binary(const std::string& bytes) {
  Reader r(bytes);
  const auto magic = r.get<std::array<char, 4>>();
  if (std::memcmp(magic.data(), kTraceMagic, 4) != 0) throw FormatError("not a trace record");
  if (r.get<std::uint32_t>() != kTraceVersion) throw FormatError("unsupported trace version");
  if (r.get<std::uint64_t>() != species_table_checksum())
    throw Error("checksum_mismatch", "trace was recorded with a different species table");
  EvaluationTrace t;
  t.evaluation_id = r.get<std::uint64_t>();
  t.robot_id = r.get<RobotId>();
  const auto species = r.get<std::uint8_t>();
  const auto color = r.get<std::uint8_t>();
  if (species >= kSpeciesCount || color > static_cast<std::uint8_t>(Color::kSilver))
    throw FormatError("trace species or color out of range");
  t.species = static_cast<Species>(species);
  t.color = static_cast<Color>(color);
  t.command_code = r.get<double>();
  t.command_text = r.get_string();
  t.segment_count = static_cast<int>(r.get<std::uint32_t>());
  t.joint_count = static_cast<int>(r.get<std::uint32_t>());
  t.eye_count = static_cast<int>(r.get<std::uint32_t>());
  const SpeciesSpec& spec = species_spec(t.species);
  if (t.segment_count != spec.segment_count() || t.joint_count != spec.motor_count ||
      t.eye_count != spec.eye_count)
    throw FormatError("trace dimensions do not match its species");
  const auto frames = static_cast<std::size_t>(r.get<std::uint32_t>());
  r.get_all(t.touch, frames * t.segment_count);
  r.get_all(t.proprioception, frames * t.joint_count);
  r.get_all(t.eyes, frames * t.eye_count);
  r.get_all(t.motors, frames * t.joint_count);
  r.get_all(t.trajectory, frames);
  if (!r.done()) throw FormatError("trailing bytes after trace record");
  return t;
}

nlohmann::json trace_to_json(const EvaluationTrace& t) {
  nlohmann::json frames = nlohmann::json::array();
  for (int k = 0; k < t.frame_count(); ++k) {
    const SensorFrame f = t.frame(k);
    frames.push_back({{"touch", f.touch},
                      {"proprioception", f.proprioception},
                      {"head", {f.head_position.x, f.head_position.y, f.head_position.z}},
                      {"eyes", f.eye_distances},
                      {"motors", f.motors}});
  }
  return {{"format", "crowdbots-trace"},
          {"version", 1},
          {"species_table_checksum", hex64(species_table_checksum())},
          {"evaluation_id", t.evaluation_id},
          {"robot_id", t.robot_id},
          {"species", species_name(t.species)},
          {"color", color_name(t.color)},
          {"command", t.command_text},
          {"command_code", t.command_code},
          {"hash", hex64(trace_hash(t))},
          {"frames", frames}};
}

void write_dataset_header(std::ostream& out) {
  out << kDatasetMagic << ' ' << hex64(species_table_checksum()) << '\n';
  out << "evaluation_id\trobot_id\tspecies\tcommand\te_y\te_n\to";
  for (int r = 0; r < kFeatureRows; ++r)
    for (int c = 0; c < kFeatureColumns; ++c) out << "\tf" << r << '_' << c;
  out << '\n';
}

void write_dataset_row(std::ostream& out, const Example& e) {
  if (e.command.find_first_of("\t\n") != std::string::npos)
    throw FormatError("command text cannot contain tabs or newlines");
  out << e.evaluation_id << '\t' << e.robot_id << '\t' << species_name(e.species) << '\t'
      << e.command << '\t' << e.e_y << '\t' << e.e_n << '\t' << format_double(e.o);
  for (double v : e.features.values) out << '\t' << format_double(v);
  out << '\n';
}

std::vector<Example> read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind(kDatasetMagic, 0) != 0)
    throw FormatError("missing dataset header");
  const std::string checksum = line.substr(kDatasetMagic.size());
  if (checksum != " " + hex64(species_table_checksum()))
    throw Error("checksum_mismatch", "dataset was recorded with a different species table");
  if (!std::getline(in, line)) throw FormatError("missing dataset column header");
  constexpr std::size_t kColumns = 7 + kFeatureRows * kFeatureColumns;
  std::vector<Example> out;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != kColumns)
      throw FormatError("dataset line " + std::to_string(line_no) + ": expected " +
                        std::to_string(kColumns) + " columns, got " + std::to_string(f.size()));
    try {
      Example e;
      e.evaluation_id = parse_int<std::uint64_t>(f[0]);
      e.robot_id = parse_int<RobotId>(f[1]);
      e.species = parse_species(f[2]);
      e.command = std::string(f[3]);
      e.e_y = parse_int<std::int64_t>(f[4]);
      e.e_n = parse_int<std::int64_t>(f[5]);
      e.o = parse_double(f[6]);
      for (std::size_t k = 0; k < e.features.values.size(); ++k)
        e.features.values[k] = parse_double(f[7 + k]);
      out.push_back(std::move(e));
    } catch (const Error& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Example> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  return read_dataset(in);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << contents;
  if (!out) throw Error("io_error", "write failed: " + path.string());
}

}  // namespace crowdbots
