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

// Robot species, their bodies, and the evolvable genome.
//
// Every species is a tree of rigid segments hanging off a root frame whose
// origin is the robot's head. Hinge joints are the only actuated degrees of
// freedom. The controller's sensor layer is described by a per-species
// channel map (touch segments, one proprioceptor per joint, three head
// position channels, and zero to two eyes) whose totals are pinned to the
// published sensor/motor counts.

#ifndef CROWDBOTS_MORPHOLOGY_H_
#define CROWDBOTS_MORPHOLOGY_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crowdbots/errors.h"
#include "crowdbots/geometry.h"

namespace crowdbots {

enum class Species : std::uint8_t {
  kStickbot,
  kTwigbot,
  kBranchbot,
  kTreebot,
  kSpherebot,
  kStarfishbot,
  kCrabbot,
  kQuadruped,
  kTablebot,
  kSnakebot,
};

inline constexpr int kSpeciesCount = 10;
inline constexpr std::array<Species, kSpeciesCount> kAllSpecies = {
    Species::kStickbot,    Species::kTwigbot,  Species::kBranchbot, Species::kTreebot,
    Species::kSpherebot,   Species::kStarfishbot, Species::kCrabbot, Species::kQuadruped,
    Species::kTablebot,    Species::kSnakebot};

std::string_view species_name(Species s);

class UnknownSpeciesError : public Error {
 public:
  explicit UnknownSpeciesError(std::string_view name)
      : Error("unknown_species", "unknown species '" + std::string(name) + "'") {}
};

// Throws UnknownSpeciesError.
Species parse_species(std::string_view name);

enum class Shape : std::uint8_t { kCylinder, kSphere, kBox };
std::string_view shape_name(Shape s);

struct HingeJoint {
  Vec3 axis;        // unit vector in the parent segment's frame
  double lower = 0; // rad
  double upper = 0; // rad
  double half_range() const { return 0.5 * (upper - lower); }
  double mid() const { return 0.5 * (upper + lower); }
};

struct Segment {
  Shape shape = Shape::kCylinder;
  double length = 0;  // along the segment's local +x; 0 for spheres
  double radius = 0;  // capsule / sphere radius, also box half-height
  int parent = -1;    // -1: attached to the root frame
  Vec3 anchor;        // attachment point in the parent frame, from parent's start
  Mat3 mount;         // rest orientation relative to the parent frame
  std::optional<HingeJoint> joint;
  bool internal = false;      // enclosed by its parent, never touches ground
  bool touch_sensor = true;   // contributes a touch channel to the controller
};

struct SpeciesSpec {
  Species species;
  std::vector<Segment> segments;  // parents precede children
  std::vector<int> joint_segment; // segment index for each joint, in joint order
  int eye_count = 2;
  bool mutable_body = false;      // only tree species evolve their rest angles
  int sensor_count = 0;
  int motor_count = 0;

  std::string_view name() const { return species_name(species); }
  int segment_count() const { return static_cast<int>(segments.size()); }
  int touch_count() const;
  const HingeJoint& joint(int j) const { return *segments[joint_segment[j]].joint; }
};

inline constexpr int kHiddenSize = 5;
inline constexpr double kJointRange = 0.7853981633974483;  // 45 degrees

// Immutable for the process lifetime; indexed by static_cast<int>(Species).
const std::vector<SpeciesSpec>& species_catalog();
const SpeciesSpec& species_spec(Species s);

// Canonical structured-text form of the catalog and its 64-bit checksum.
// Event logs, snapshots and trace files carry this checksum.
std::string species_table_text();
std::uint64_t species_table_checksum();

using RobotId = std::uint64_t;

struct BodyGenome {
  std::vector<double> default_angles;  // rest angle per joint, rad
  friend bool operator==(const BodyGenome&, const BodyGenome&) = default;
};

// Fully recurrent single-hidden-layer controller. Inputs are the species'
// sensor channels followed by the command neuron and a bias neuron.
struct ControllerGenome {
  int sensor_count = 0;
  int motor_count = 0;
  std::vector<double> w_in;   // (sensor_count + 2) x kHiddenSize, row-major
  std::vector<double> w_hh;   // kHiddenSize x kHiddenSize
  std::vector<double> w_out;  // kHiddenSize x motor_count

  int input_count() const { return sensor_count + 2; }
  int command_row() const { return sensor_count; }
  int bias_row() const { return sensor_count + 1; }
  double& in(int r, int c) { return w_in[r * kHiddenSize + c]; }
  double in(int r, int c) const { return w_in[r * kHiddenSize + c]; }
  double& hh(int r, int c) { return w_hh[r * kHiddenSize + c]; }
  double hh(int r, int c) const { return w_hh[r * kHiddenSize + c]; }
  double& out(int r, int c) { return w_out[r * motor_count + c]; }
  double out(int r, int c) const { return w_out[r * motor_count + c]; }
  std::size_t weight_count() const { return w_in.size() + w_hh.size() + w_out.size(); }
  double& weight(std::size_t k);

  friend bool operator==(const ControllerGenome&, const ControllerGenome&) = default;
};

struct RobotGenome {
  RobotId id = 0;
  Species species = Species::kStickbot;
  BodyGenome body;
  ControllerGenome controller;
  std::optional<RobotId> lineage;

  friend bool operator==(const RobotGenome&, const RobotGenome&) = default;
};

// Throws DimensionError describing the first violated constraint.
void validate_genome(const RobotGenome& g);
bool is_valid_genome(const RobotGenome& g);

RobotGenome random_genome(Species species, std::uint64_t seed, RobotId id = 0);
RobotGenome random_genome(std::string_view species, std::uint64_t seed, RobotId id = 0);

// Mutation operator parameters.
struct MutationParams {
  double weight_rate = 0.1;
  double weight_sigma = 0.2;
  double angle_probability = 0.5;
  double angle_sigma = 0.2617993877991494;  // 15 degrees
};

// Returns a child with id = child_id and lineage = parent.id that differs from
// the parent in at least one parameter. Pure in (parent, seed, child_id).
RobotGenome mutate(const RobotGenome& parent, std::uint64_t seed, RobotId child_id,
                   const MutationParams& params = {});

}  // namespace crowdbots

#endif  // CROWDBOTS_MORPHOLOGY_H_
