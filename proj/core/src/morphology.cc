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

#include "crowdbots/morphology.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "crowdbots/hash.h"
#include "crowdbots/rng.h"

namespace crowdbots {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Bump when any geometry constant below changes.
constexpr int kSpeciesTableVersion = 1;

double snap(double v) { return std::abs(v) < 1e-12 ? 0.0 : v; }

Mat3 snapped(Mat3 m) {
  for (double& v : m.m) v = snap(v);
  return m;
}

Vec3 snapped(Vec3 v) { return {snap(v.x), snap(v.y), snap(v.z)}; }

Mat3 mount_of(double yaw_deg, double pitch_deg) {
  return snapped(rot_z(yaw_deg * kDeg) * rot_y(pitch_deg * kDeg));
}

class SpecBuilder {
 public:
  explicit SpecBuilder(Species s) { spec_.species = s; }

  // The hinge axis is given in world coordinates of the rest pose and stored
  // in the parent's frame.
  int add(Shape shape, double length, double radius, int parent, Vec3 anchor, Mat3 mount,
          std::optional<Vec3> world_axis, bool touch = true, bool internal = false) {
    Segment seg;
    seg.shape = shape;
    seg.length = length;
    seg.radius = radius;
    seg.parent = parent;
    seg.anchor = anchor;
    seg.mount = mount;
    seg.touch_sensor = touch;
    seg.internal = internal;
    const Mat3 parent_rest = parent < 0 ? Mat3::identity() : rest_[parent];
    if (world_axis) {
      HingeJoint j;
      j.axis = snapped(parent_rest.transposed() * *world_axis);
      j.lower = -kJointRange;
      j.upper = kJointRange;
      seg.joint = j;
      spec_.joint_segment.push_back(static_cast<int>(spec_.segments.size()));
    }
    rest_.push_back(snapped(parent_rest * mount));
    spec_.segments.push_back(seg);
    return static_cast<int>(spec_.segments.size()) - 1;
  }

  const Mat3& rest(int i) const { return rest_[i]; }

  SpeciesSpec finish(int eyes, bool mutable_body) {
    spec_.eye_count = eyes;
    spec_.mutable_body = mutable_body;
    spec_.motor_count = static_cast<int>(spec_.joint_segment.size());
    spec_.sensor_count = spec_.touch_count() + spec_.motor_count + 3 + eyes;
    return spec_;
  }

 private:
  SpeciesSpec spec_;
  std::vector<Mat3> rest_;
};

// Full binary tree of the given depth, laid flat; the hub is the head.
SpeciesSpec tree(Species s, int depth) {
  SpecBuilder b(s);
  constexpr double kRootLength = 0.5;
  constexpr double kShrink = 0.8;
  constexpr double kRadius = 0.05;
  std::vector<int> level;
  for (double yaw : {0.0, 180.0}) {
    const Mat3 mount = mount_of(yaw, 0);
    level.push_back(b.add(Shape::kCylinder, kRootLength, kRadius, -1, {}, mount,
                          snapped(mount * Vec3{0, 1, 0})));
  }
  double length = kRootLength;
  for (int d = 2; d <= depth; ++d) {
    const double parent_length = length;
    length *= kShrink;
    std::vector<int> next;
    for (int p : level) {
      for (double yaw : {45.0, -45.0}) {
        const Mat3 mount = mount_of(yaw, 0);
        const Vec3 axis = b.rest(p) * (mount * Vec3{0, 1, 0});
        next.push_back(b.add(Shape::kCylinder, length, kRadius, p, {parent_length, 0, 0},
                             mount, snapped(axis)));
      }
    }
    level = std::move(next);
  }
  return b.finish(2, true);
}

SpeciesSpec spherebot() {
  SpecBuilder b(Species::kSpherebot);
  const int shell = b.add(Shape::kSphere, 0.0, 0.5, -1, {}, Mat3::identity(), std::nullopt);
  b.add(Shape::kCylinder, 0.4, 0.05, shell, {}, mount_of(0, 90), Vec3{0, 1, 0},
        /*touch=*/false, /*internal=*/true);
  return b.finish(1, false);
}

SpeciesSpec snakebot() {
  SpecBuilder b(Species::kSnakebot);
  const int mid = b.add(Shape::kBox, 0.6, 0.1, -1, {-0.3, 0, 0}, Mat3::identity(), std::nullopt);
  b.add(Shape::kBox, 0.6, 0.1, mid, {0.6, 0, 0}, Mat3::identity(), Vec3{0, 1, 0});
  b.add(Shape::kBox, 0.6, 0.1, mid, {0, 0, 0}, mount_of(180, 0), Vec3{0, 1, 0});
  return b.finish(1, false);
}

SpeciesSpec tablebot() {
  SpecBuilder b(Species::kTablebot);
  const int body = b.add(Shape::kBox, 1.0, 0.1, -1, {-0.5, 0, 0}, Mat3::identity(),
                         std::nullopt, /*touch=*/false);
  for (double x : {0.0, 1.0})
    for (double y : {0.4, -0.4})
      b.add(Shape::kCylinder, 0.6, 0.05, body, {x, y, 0}, mount_of(0, 90), Vec3{0, 1, 0});
  return b.finish(2, false);
}

SpeciesSpec quadruped() {
  SpecBuilder b(Species::kQuadruped);
  const int body = b.add(Shape::kBox, 1.0, 0.1, -1, {-0.5, 0, 0}, Mat3::identity(),
                         std::nullopt, /*touch=*/false);
  for (double x : {0.0, 1.0})
    for (double y : {0.3, -0.3}) {
      const int thigh = b.add(Shape::kCylinder, 0.4, 0.05, body, {x, y, 0}, mount_of(0, 90),
                              Vec3{1, 0, 0});
      b.add(Shape::kCylinder, 0.4, 0.05, thigh, {0.4, 0, 0}, Mat3::identity(), Vec3{1, 0, 0});
    }
  return b.finish(2, false);
}

SpeciesSpec starfishbot() {
  SpecBuilder b(Species::kStarfishbot);
  const int body = b.add(Shape::kBox, 0.4, 0.1, -1, {-0.2, 0, 0}, Mat3::identity(),
                         std::nullopt, /*touch=*/false);
  for (int k = 0; k < 4; ++k) {
    const double yaw = 90.0 * k;
    const Mat3 out = mount_of(yaw, 0);
    const Vec3 dir = out * Vec3{1, 0, 0};
    const Vec3 axis = snapped(out * Vec3{0, 1, 0});
    const int upper = b.add(Shape::kCylinder, 0.5, 0.05, body, Vec3{0.2, 0, 0} + 0.2 * dir,
                            out, axis);
    b.add(Shape::kCylinder, 0.5, 0.05, upper, {0.5, 0, 0}, mount_of(0, 60), axis);
  }
  return b.finish(2, false);
}

SpeciesSpec crabbot() {
  SpecBuilder b(Species::kCrabbot);
  const int body = b.add(Shape::kBox, 1.2, 0.12, -1, {-0.6, 0, 0}, Mat3::identity(),
                         std::nullopt, /*touch=*/false);
  for (double x : {0.2, 0.6, 1.0})
    for (double side : {1.0, -1.0}) {
      const int upper = b.add(Shape::kCylinder, 0.4, 0.05, body, {x, 0.2 * side, 0},
                              mount_of(90 * side, 30), Vec3{1, 0, 0});
      b.add(Shape::kCylinder, 0.4, 0.05, upper, {0.4, 0, 0}, mount_of(0, 60), Vec3{1, 0, 0});
    }
  return b.finish(0, false);
}

std::vector<SpeciesSpec> build_catalog() {
  std::vector<SpeciesSpec> c;
  c.push_back(tree(Species::kStickbot, 1));
  c.push_back(tree(Species::kTwigbot, 2));
  c.push_back(tree(Species::kBranchbot, 3));
  c.push_back(tree(Species::kTreebot, 4));
  c.push_back(spherebot());
  c.push_back(starfishbot());
  c.push_back(crabbot());
  c.push_back(quadruped());
  c.push_back(tablebot());
  c.push_back(snakebot());
  return c;
}

nlohmann::json vec_json(Vec3 v) { return nlohmann::json::array({v.x, v.y, v.z}); }

}  // namespace

std::string_view species_name(Species s) {
  static constexpr std::array<std::string_view, kSpeciesCount> kNames = {
      "stickbot",    "twigbot", "branchbot", "treebot",  "spherebot",
      "starfishbot", "crabbot", "quadruped", "tablebot", "snakebot"};
  return kNames.at(static_cast<std::size_t>(s));
}

Species parse_species(std::string_view name) {
  for (Species s : kAllSpecies)
    if (species_name(s) == name) return s;
  throw UnknownSpeciesError(name);
}

std::string_view shape_name(Shape s) {
  switch (s) {
    case Shape::kCylinder: return "cylinder";
    case Shape::kSphere: return "sphere";
    case Shape::kBox: return "box";
  }
  return "?";
}

int SpeciesSpec::touch_count() const {
  return static_cast<int>(std::count_if(segments.begin(), segments.end(),
                                        [](const Segment& s) { return s.touch_sensor; }));
}

const std::vector<SpeciesSpec>& species_catalog() {
  static const std::vector<SpeciesSpec> catalog = build_catalog();
  return catalog;
}

const SpeciesSpec& species_spec(Species s) {
  return species_catalog().at(static_cast<std::size_t>(s));
}

std::string species_table_text() {
  nlohmann::json table;
  table["format"] = "crowdbots-species-table";
  table["version"] = kSpeciesTableVersion;
  table["hidden_size"] = kHiddenSize;
  nlohmann::json species = nlohmann::json::array();
  for (const SpeciesSpec& spec : species_catalog()) {
    nlohmann::json s;
    s["name"] = spec.name();
    s["sensors"] = spec.sensor_count;
    s["motors"] = spec.motor_count;
    s["mutable_body"] = spec.mutable_body;
    s["channels"] = {{"touch", spec.touch_count()},
                     {"proprioception", spec.motor_count},
                     {"head_position", 3},
                     {"eyes", spec.eye_count}};
    nlohmann::json segs = nlohmann::json::array();
    for (const Segment& seg : spec.segments) {
      nlohmann::json j;
      j["shape"] = shape_name(seg.shape);
      j["length"] = seg.length;
      j["radius"] = seg.radius;
      j["parent"] = seg.parent;
      j["anchor"] = vec_json(seg.anchor);
      j["mount"] = seg.mount.m;
      j["touch"] = seg.touch_sensor;
      j["internal"] = seg.internal;
      if (seg.joint) {
        j["joint"] = {{"axis", vec_json(seg.joint->axis)},
                      {"lower", seg.joint->lower},
                      {"upper", seg.joint->upper}};
      } else {
        j["joint"] = nullptr;
      }
      segs.push_back(std::move(j));
    }
    s["segments"] = std::move(segs);
    species.push_back(std::move(s));
  }
  table["species"] = std::move(species);
  return table.dump(2) + "\n";
}

std::uint64_t species_table_checksum() {
  static const std::uint64_t checksum = fnv1a(species_table_text());
  return checksum;
}

double& ControllerGenome::weight(std::size_t k) {
  if (k < w_in.size()) return w_in[k];
  k -= w_in.size();
  if (k < w_hh.size()) return w_hh[k];
  return w_out[k - w_hh.size()];
}

void validate_genome(const RobotGenome& g) {
  const SpeciesSpec& spec = species_spec(g.species);
  const ControllerGenome& c = g.controller;
  if (c.sensor_count != spec.sensor_count || c.motor_count != spec.motor_count)
    throw DimensionError("controller is " + std::to_string(c.sensor_count) + "S/" +
                         std::to_string(c.motor_count) + "M but " + std::string(spec.name()) +
                         " needs " + std::to_string(spec.sensor_count) + "S/" +
                         std::to_string(spec.motor_count) + "M");
  if (c.w_in.size() != static_cast<std::size_t>(c.input_count() * kHiddenSize) ||
      c.w_hh.size() != static_cast<std::size_t>(kHiddenSize * kHiddenSize) ||
      c.w_out.size() != static_cast<std::size_t>(kHiddenSize * c.motor_count))
    throw DimensionError("controller weight matrices have the wrong shape");
  for (const auto* w : {&c.w_in, &c.w_hh, &c.w_out})
    for (double v : *w)
      if (!(v >= -1.0 && v <= 1.0)) throw DimensionError("controller weight outside [-1, 1]");
  if (g.body.default_angles.size() != static_cast<std::size_t>(spec.motor_count))
    throw DimensionError("body genome needs one rest angle per joint");
  for (int j = 0; j < spec.motor_count; ++j) {
    const HingeJoint& joint = spec.joint(j);
    const double a = g.body.default_angles[j];
    if (!(a >= joint.lower && a <= joint.upper))
      throw DimensionError("rest angle outside its joint range");
    if (!spec.mutable_body && a != 0.0)
      throw DimensionError("fixed-body species must keep zero rest angles");
  }
}

bool is_valid_genome(const RobotGenome& g) {
  try {
    validate_genome(g);
    return true;
  } catch (const Error&) {
    return false;
  }
}

RobotGenome random_genome(Species species, std::uint64_t seed, RobotId id) {
  const SpeciesSpec& spec = species_spec(species);
  Rng rng(seed);
  RobotGenome g;
  g.id = id;
  g.species = species;
  g.body.default_angles.assign(spec.motor_count, 0.0);
  if (spec.mutable_body)
    for (int j = 0; j < spec.motor_count; ++j)
      g.body.default_angles[j] = rng.uniform(spec.joint(j).lower, spec.joint(j).upper);
  ControllerGenome& c = g.controller;
  c.sensor_count = spec.sensor_count;
  c.motor_count = spec.motor_count;
  c.w_in.resize(static_cast<std::size_t>(c.input_count()) * kHiddenSize);
  c.w_hh.resize(kHiddenSize * kHiddenSize);
  c.w_out.resize(static_cast<std::size_t>(kHiddenSize) * c.motor_count);
  for (auto* w : {&c.w_in, &c.w_hh, &c.w_out})
    for (double& v : *w) v = rng.uniform(-1.0, 1.0);
  return g;
}

RobotGenome random_genome(std::string_view species, std::uint64_t seed, RobotId id) {
  return random_genome(parse_species(species), seed, id);
}

RobotGenome mutate(const RobotGenome& parent, std::uint64_t seed, RobotId child_id,
                   const MutationParams& params) {
  const SpeciesSpec& spec = species_spec(parent.species);
  Rng rng(seed);
  RobotGenome child = parent;
  child.id = child_id;
  child.lineage = parent.id;
  ControllerGenome& c = child.controller;

  bool changed = false;
  const std::size_t n = c.weight_count();
  for (std::size_t k = 0; k < n; ++k) {
    if (!rng.bernoulli(params.weight_rate)) continue;
    double& w = c.weight(k);
    const double before = w;
    w = std::clamp(w + rng.normal(0.0, params.weight_sigma), -1.0, 1.0);
    changed |= (w != before);
  }
  if (spec.mutable_body && spec.motor_count > 0 && rng.bernoulli(params.angle_probability)) {
    const std::size_t j = rng.index(static_cast<std::size_t>(spec.motor_count));
    const HingeJoint& joint = spec.joint(static_cast<int>(j));
    double& a = child.body.default_angles[j];
    const double before = a;
    a = std::clamp(a + rng.normal(0.0, params.angle_sigma), joint.lower, joint.upper);
    changed |= (a != before);
  }
  // A perturbation can clamp back onto a bound; keep drawing until something moves.
  while (!changed) {
    double& w = c.weight(rng.index(n));
    const double before = w;
    w = std::clamp(w + rng.normal(0.0, params.weight_sigma), -1.0, 1.0);
    changed = (w != before);
  }
  return child;
}

}  // namespace crowdbots
