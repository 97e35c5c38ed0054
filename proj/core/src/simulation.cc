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

#include "crowdbots/simulation.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

#include "crowdbots/hash.h"

namespace crowdbots {
namespace {

constexpr double kMaxJointStep = kMaxJointSpeed * kTimeStep;
constexpr std::array<double, 2> kEyePitch = {15.0 * std::numbers::pi / 180.0,
                                             30.0 * std::numbers::pi / 180.0};

// tanh via a single exp. Absolute error stays near 1e-16 (relative error
// grows for tiny |x|, which the controller never cares about); roughly three
// times cheaper than std::tanh with glibc.
inline double fast_tanh(double x) {
  const double t = std::exp(-2.0 * std::abs(x));
  const double r = (1.0 - t) / (1.0 + t);
  return std::copysign(r, x);
}

struct SegmentKinematics {
  int parent = -1;
  int joint = -1;
  Vec3 anchor;
  Mat3 mount;
  Mat3 k_mount;   // K * mount
  Mat3 k2_mount;  // K^2 * mount
  double length = 0.0;
  double radius = 0.0;
  bool leaf = true;  // leaves only need their end point, not a full frame
};

struct ContactPoint {
  int segment;
  bool at_end;
  double drop;  // radius below the endpoint
};

struct Roller {
  int sphere;      // sphere segment
  int pendulum;    // internal jointed child
  int contact;     // the sphere's contact point index
};

// Segment frames and contact points relative to the root for one joint
// configuration. Re-posing only touches segments whose own joint angle or an
// ancestor's changed, which gives bit-identical results to a full pass.
struct Pose {
  std::vector<Mat3> rotation;
  std::vector<Vec3> start;
  std::vector<Vec3> end;
  std::vector<Vec3> contact;
  std::vector<double> angles;
  std::vector<std::uint8_t> dirty;
  double min_z = 0.0;
  bool valid = false;
};

class Body {
 public:
  explicit Body(const SpeciesSpec& spec) : spec_(&spec) {
    const int n = spec.segment_count();
    segments_.resize(n);
    for (int i = 0; i < n; ++i) {
      const Segment& s = spec.segments[i];
      SegmentKinematics& k = segments_[i];
      k.parent = s.parent;
      k.anchor = s.anchor;
      k.mount = s.mount;
      k.length = s.length;
      k.radius = s.radius;
      if (s.joint) {
        const Mat3 kx = skew(s.joint->axis);
        k.k_mount = kx * s.mount;
        k.k2_mount = kx * kx * s.mount;
      }
      if (!s.internal) {
        if (s.shape == Shape::kSphere) {
          contacts_.push_back({i, false, s.radius});
        } else {
          contacts_.push_back({i, false, s.radius});
          contacts_.push_back({i, true, s.radius});
        }
      }
    }
    for (int j = 0; j < spec.motor_count; ++j) segments_[spec.joint_segment[j]].joint = j;
    for (int i = 0; i < n; ++i)
      if (segments_[i].parent >= 0) segments_[segments_[i].parent].leaf = false;
    touch_slot_.assign(n, -1);
    int slot = 0;
    for (int i = 0; i < n; ++i)
      if (spec.segments[i].touch_sensor) touch_slot_[i] = slot++;
    touch_inputs_ = slot;
    for (int i = 0; i < n; ++i) {
      const Segment& s = spec.segments[i];
      if (!s.internal || !s.joint || s.parent < 0) continue;
      if (spec.segments[s.parent].shape != Shape::kSphere) continue;
      for (int c = 0; c < static_cast<int>(contacts_.size()); ++c)
        if (contacts_[c].segment == s.parent) rollers_.push_back({s.parent, i, c});
    }
  }

  const SpeciesSpec& spec() const { return *spec_; }

  void forward(std::span<const double> angles, Pose& pose) const {
    const int n = static_cast<int>(segments_.size());
    if (!pose.valid) {
      pose.rotation.resize(n);
      pose.start.resize(n);
      pose.end.resize(n);
      pose.dirty.assign(n, 1);
      pose.contact.resize(contacts_.size());
      pose.angles.assign(angles.begin(), angles.end());
    } else {
      bool any = false;
      for (int i = 0; i < n; ++i) {
        const SegmentKinematics& k = segments_[i];
        const bool own = k.joint >= 0 && angles[k.joint] != pose.angles[k.joint];
        pose.dirty[i] = own || (k.parent >= 0 && pose.dirty[k.parent]);
        any |= pose.dirty[i] != 0;
      }
      if (!any) return;
      std::copy(angles.begin(), angles.end(), pose.angles.begin());
    }
    for (int i = 0; i < n; ++i) {
      if (!pose.dirty[i]) continue;
      const SegmentKinematics& k = segments_[i];
      double s = 0.0, c1 = 0.0;
      if (k.joint >= 0) {
        const double a = angles[k.joint];
        s = std::sin(a);
        c1 = 1.0 - std::cos(a);
      }
      if (k.leaf) {
        // Only the first column of the segment frame is needed.
        Vec3 col{k.mount.m[0], k.mount.m[3], k.mount.m[6]};
        if (k.joint >= 0) {
          col.x += s * k.k_mount.m[0] + c1 * k.k2_mount.m[0];
          col.y += s * k.k_mount.m[3] + c1 * k.k2_mount.m[3];
          col.z += s * k.k_mount.m[6] + c1 * k.k2_mount.m[6];
        }
        if (k.parent < 0) {
          pose.start[i] = k.anchor;
        } else {
          const Mat3& pr = pose.rotation[k.parent];
          pose.start[i] = pose.start[k.parent] + pr * k.anchor;
          col = pr * col;
        }
        pose.end[i] = pose.start[i] + Vec3{k.length * col.x, k.length * col.y, k.length * col.z};
        continue;
      }
      Mat3 local = k.mount;
      if (k.joint >= 0)
        for (int e = 0; e < 9; ++e) local.m[e] += s * k.k_mount.m[e] + c1 * k.k2_mount.m[e];
      if (k.parent < 0) {
        pose.rotation[i] = local;
        pose.start[i] = k.anchor;
      } else {
        const Mat3& pr = pose.rotation[k.parent];
        pose.rotation[i] = pr * local;
        pose.start[i] = pose.start[k.parent] + pr * k.anchor;
      }
      const Mat3& r = pose.rotation[i];
      pose.end[i] = pose.start[i] + Vec3{k.length * r.m[0], k.length * r.m[3], k.length * r.m[6]};
    }
    double min_z = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < contacts_.size(); ++c) {
      const ContactPoint& cp = contacts_[c];
      if (pose.dirty[cp.segment]) {
        Vec3 p = cp.at_end ? pose.end[cp.segment] : pose.start[cp.segment];
        p.z -= cp.drop;
        pose.contact[c] = p;
      }
      min_z = std::min(min_z, pose.contact[c].z);
    }
    pose.min_z = min_z;
    pose.valid = true;
  }

  // One dynamics step. On entry `pose` must hold state.joint_angles; on exit
  // it holds next.joint_angles. `next` may not alias `state`.
  void step(const WorldState& state, std::span<const double> motors,
            std::span<const double> rest, Pose& pose, std::vector<Vec3>& old_contact,
            WorldState& next) const {
    const SpeciesSpec& spec = *spec_;
    next.root_position = state.root_position;
    next.root_vertical_velocity = state.root_vertical_velocity;
    next.hidden_state = state.hidden_state;
    next.joint_angles.resize(state.joint_angles.size());
    for (int j = 0; j < spec.motor_count; ++j) {
      const HingeJoint& joint = spec.joint(j);
      const double m = std::isfinite(motors[j]) ? std::clamp(motors[j], -1.0, 1.0) : 0.0;
      const double target = std::clamp(rest[j] + m * joint.half_range(), joint.lower, joint.upper);
      const double theta = state.joint_angles[j];
      next.joint_angles[j] =
          std::clamp(theta + std::clamp(target - theta, -kMaxJointStep, kMaxJointStep),
                     joint.lower, joint.upper);
    }
    old_contact.assign(pose.contact.begin(), pose.contact.end());
    forward(next.joint_angles, pose);
    const Pose& new_pose = pose;

    // Anchoring: contacts are judged at the new pose with the old root.
    const double root_z = state.root_position.z;
    double dx = 0.0, dy = 0.0;
    int touching = 0;
    for (std::size_t c = 0; c < contacts_.size(); ++c) {
      if (root_z + new_pose.contact[c].z > kContactTolerance) continue;
      dx += new_pose.contact[c].x - old_contact[c].x;
      dy += new_pose.contact[c].y - old_contact[c].y;
      ++touching;
    }
    if (touching > 0) {
      next.root_position.x -= dx / touching;
      next.root_position.y -= dy / touching;
    }
    for (const Roller& r : rollers_) {
      if (root_z + new_pose.contact[r.contact].z > kContactTolerance) continue;
      const double hx = new_pose.end[r.pendulum].x - new_pose.start[r.sphere].x;
      const double hy = new_pose.end[r.pendulum].y - new_pose.start[r.sphere].y;
      const double h = std::hypot(hx, hy);
      if (h <= kRollDeadZone) continue;
      const double speed = kRollGain * (h - kRollDeadZone);
      next.root_position.x += kTimeStep * speed * hx / h;
      next.root_position.y += kTimeStep * speed * hy / h;
    }

    const double lowest = root_z + new_pose.min_z;
    if (lowest <= kContactTolerance) {
      next.root_position.z = -new_pose.min_z;
      next.root_vertical_velocity = 0.0;
    } else {
      next.root_vertical_velocity = state.root_vertical_velocity - kGravity * kTimeStep;
      next.root_position.z = root_z + next.root_vertical_velocity * kTimeStep;
      if (next.root_position.z + new_pose.min_z < 0.0) {
        next.root_position.z = -new_pose.min_z;
        next.root_vertical_velocity = 0.0;
      }
    }
    next.step_index = state.step_index + 1;
  }

  void sense(const WorldState& state, const Pose& pose, SensorFrame& frame) const {
    const SpeciesSpec& spec = *spec_;
    frame.touch.assign(spec.segment_count(), 0);
    for (std::size_t c = 0; c < contacts_.size(); ++c)
      if (state.root_position.z + pose.contact[c].z <= kTouchTolerance)
        frame.touch[contacts_[c].segment] = 1;
    frame.proprioception.assign(state.joint_angles.begin(), state.joint_angles.end());
    frame.head_position = state.root_position;
    frame.eye_distances.resize(spec.eye_count);
    for (int e = 0; e < spec.eye_count; ++e) frame.eye_distances[e] = eye_distance(state, e);
  }

  static double eye_distance(const WorldState& state, int eye) {
    const double z = std::max(0.0, state.root_position.z);
    const double d = z / std::sin(kEyePitch[eye]);
    return std::min(d, kEyeRange);
  }

  // Writes controller inputs (without command and bias) straight from the
  // state, avoiding a SensorFrame allocation in the hot loop.
  void inputs(const WorldState& state, const Pose& pose, std::vector<double>& out) const {
    const SpeciesSpec& spec = *spec_;
    out.resize(spec.sensor_count);
    double* p = out.data();
    std::fill(p, p + touch_inputs_, 0.0);
    for (std::size_t c = 0; c < contacts_.size(); ++c) {
      const int slot = touch_slot_[contacts_[c].segment];
      if (slot >= 0 && state.root_position.z + pose.contact[c].z <= kTouchTolerance)
        p[slot] = 1.0;
    }
    p += touch_inputs_;
    for (int j = 0; j < spec.motor_count; ++j) {
      const HingeJoint& joint = spec.joint(j);
      *p++ = (state.joint_angles[j] - joint.mid()) / joint.half_range();
    }
    *p++ = fast_tanh(state.root_position.x / 10.0);
    *p++ = fast_tanh(state.root_position.y / 10.0);
    *p++ = fast_tanh(state.root_position.z / 10.0);
    for (int e = 0; e < spec.eye_count; ++e) *p++ = eye_distance(state, e) / kEyeRange;
  }

 private:
  const SpeciesSpec* spec_;
  std::vector<SegmentKinematics> segments_;
  std::vector<ContactPoint> contacts_;
  std::vector<Roller> rollers_;
  std::vector<int> touch_slot_;  // controller input index per segment, -1 without a sensor
  int touch_inputs_ = 0;
};

const Body& body_for(Species s) {
  static const std::vector<Body> bodies = [] {
    std::vector<Body> b;
    for (const SpeciesSpec& spec : species_catalog()) b.emplace_back(spec);
    return b;
  }();
  return bodies[static_cast<std::size_t>(s)];
}

void controller_into(const ControllerGenome& g, std::span<const double> sensors,
                     double command, const HiddenState& hidden, HiddenState& out_hidden,
                     std::span<double> motors) {
  std::array<double, kHiddenSize> acc{};
  const double* w = g.w_in.data();
  for (double x : sensors) {
    for (int h = 0; h < kHiddenSize; ++h) acc[h] += w[h] * x;
    w += kHiddenSize;
  }
  for (int h = 0; h < kHiddenSize; ++h) acc[h] += w[h] * command;
  w += kHiddenSize;
  for (int h = 0; h < kHiddenSize; ++h) acc[h] += w[h];
  for (int r = 0; r < kHiddenSize; ++r)
    for (int h = 0; h < kHiddenSize; ++h) acc[h] += g.w_hh[r * kHiddenSize + h] * hidden[r];
  for (int h = 0; h < kHiddenSize; ++h) out_hidden[h] = fast_tanh(acc[h]);
  const int m = g.motor_count;
  for (int j = 0; j < m; ++j) {
    double s = 0.0;
    for (int h = 0; h < kHiddenSize; ++h) s += g.w_out[h * m + j] * out_hidden[h];
    motors[j] = fast_tanh(s);
  }
}

// Runs warm-up plus `duration` controlled steps; the recorder sees the state
// after each controlled step together with the motor command that produced it.
template <typename Recorder>
void run_episode(const RobotGenome& genome, double command_code, int duration,
                 Recorder&& record) {
  validate_genome(genome);
  const Body& body = body_for(genome.species);
  const SpeciesSpec& spec = body.spec();
  const std::span<const double> rest = genome.body.default_angles;

  WorldState state = rest_state(genome);
  WorldState next = state;
  Pose pose;
  std::vector<Vec3> old_contact;
  body.forward(state.joint_angles, pose);
  std::vector<double> motors(spec.motor_count, 0.0);
  for (int t = 0; t < kWarmupSteps; ++t) {
    body.step(state, motors, rest, pose, old_contact, next);
    std::swap(state, next);
  }
  state.step_index = 0;
  state.hidden_state = {};

  std::vector<double> inputs;
  inputs.reserve(spec.sensor_count);
  HiddenState hidden;
  for (int t = 0; t < duration; ++t) {
    body.inputs(state, pose, inputs);
    controller_into(genome.controller, inputs, command_code, state.hidden_state, hidden, motors);
    body.step(state, motors, rest, pose, old_contact, next);
    next.hidden_state = hidden;
    std::swap(state, next);
    record(t, state, pose, motors, body);
  }
}

}  // namespace

SensorFrame EvaluationTrace::frame(int t) const {
  SensorFrame f;
  const auto s = static_cast<std::size_t>(t);
  f.touch.assign(touch.begin() + s * segment_count, touch.begin() + (s + 1) * segment_count);
  f.proprioception.assign(proprioception.begin() + s * joint_count,
                          proprioception.begin() + (s + 1) * joint_count);
  f.head_position = trajectory[s];
  f.eye_distances.assign(eyes.begin() + s * eye_count, eyes.begin() + (s + 1) * eye_count);
  f.motors.assign(motors.begin() + s * joint_count, motors.begin() + (s + 1) * joint_count);
  return f;
}

ControllerOutput controller_step(const ControllerGenome& genome,
                                 std::span<const double> sensor_inputs, double command_code,
                                 const HiddenState& hidden_state) {
  if (static_cast<int>(sensor_inputs.size()) != genome.sensor_count)
    throw DimensionError("controller expects " + std::to_string(genome.sensor_count) +
                         " sensor inputs, got " + std::to_string(sensor_inputs.size()));
  if (genome.w_in.size() != static_cast<std::size_t>(genome.input_count() * kHiddenSize) ||
      genome.w_hh.size() != static_cast<std::size_t>(kHiddenSize * kHiddenSize) ||
      genome.w_out.size() != static_cast<std::size_t>(kHiddenSize * genome.motor_count))
    throw DimensionError("controller weight matrices have the wrong shape");
  ControllerOutput out;
  out.motors.resize(genome.motor_count);
  controller_into(genome, sensor_inputs, command_code, hidden_state, out.hidden, out.motors);
  return out;
}

std::vector<std::array<Vec3, 2>> segment_endpoints(const SpeciesSpec& spec, const Vec3& root,
                                                   std::span<const double> joint_angles) {
  if (static_cast<int>(joint_angles.size()) != spec.motor_count)
    throw DimensionError("joint angle count does not match species");
  Pose pose;
  body_for(spec.species).forward(joint_angles, pose);
  std::vector<std::array<Vec3, 2>> out(pose.start.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {root + pose.start[i], root + pose.end[i]};
  return out;
}

double lowest_point_height(const SpeciesSpec& spec, const WorldState& state) {
  Pose pose;
  body_for(spec.species).forward(state.joint_angles, pose);
  return state.root_position.z + pose.min_z;
}

WorldState physics_step(const WorldState& state, std::span<const double> motor_outputs,
                        const SpeciesSpec& spec, const BodyGenome& body_genome) {
  if (static_cast<int>(motor_outputs.size()) != spec.motor_count ||
      static_cast<int>(state.joint_angles.size()) != spec.motor_count ||
      static_cast<int>(body_genome.default_angles.size()) != spec.motor_count)
    throw DimensionError("physics_step: joint count does not match species");
  const Body& body = body_for(spec.species);
  Pose pose;
  std::vector<Vec3> old_contact;
  body.forward(state.joint_angles, pose);
  WorldState next;
  body.step(state, motor_outputs, body_genome.default_angles, pose, old_contact, next);
  return next;
}

WorldState physics_step(const WorldState& state, std::span<const double> motor_outputs,
                        const SpeciesSpec& spec) {
  BodyGenome zero;
  zero.default_angles.assign(spec.motor_count, 0.0);
  return physics_step(state, motor_outputs, spec, zero);
}

WorldState rest_state(const RobotGenome& genome) {
  WorldState s;
  s.joint_angles = genome.body.default_angles;
  Pose pose;
  body_for(genome.species).forward(s.joint_angles, pose);
  s.root_position = {0.0, 0.0, -pose.min_z};
  return s;
}

SensorFrame sense(const WorldState& state, const SpeciesSpec& spec) {
  const Body& body = body_for(spec.species);
  Pose pose;
  body.forward(state.joint_angles, pose);
  SensorFrame f;
  body.sense(state, pose, f);
  return f;
}

std::vector<double> normalized_inputs(const SensorFrame& frame, const SpeciesSpec& spec) {
  std::vector<double> out;
  out.reserve(spec.sensor_count);
  for (int i = 0; i < spec.segment_count(); ++i)
    if (spec.segments[i].touch_sensor) out.push_back(frame.touch.at(i));
  for (int j = 0; j < spec.motor_count; ++j) {
    const HingeJoint& joint = spec.joint(j);
    out.push_back((frame.proprioception.at(j) - joint.mid()) / joint.half_range());
  }
  out.push_back(fast_tanh(frame.head_position.x / 10.0));
  out.push_back(fast_tanh(frame.head_position.y / 10.0));
  out.push_back(fast_tanh(frame.head_position.z / 10.0));
  for (int e = 0; e < spec.eye_count; ++e) out.push_back(frame.eye_distances.at(e) / kEyeRange);
  return out;
}

EvaluationTrace evaluate(const RobotGenome& genome, double command_code,
                         const std::string& command_text, int duration_steps) {
  const SpeciesSpec& spec = species_spec(genome.species);
  EvaluationTrace trace;
  trace.robot_id = genome.id;
  trace.species = genome.species;
  trace.command_text = command_text;
  trace.command_code = command_code;
  trace.segment_count = spec.segment_count();
  trace.joint_count = spec.motor_count;
  trace.eye_count = spec.eye_count;
  const auto n = static_cast<std::size_t>(std::max(duration_steps, 0));
  trace.touch.reserve(n * trace.segment_count);
  trace.proprioception.reserve(n * trace.joint_count);
  trace.motors.reserve(n * trace.joint_count);
  trace.eyes.reserve(n * trace.eye_count);
  trace.trajectory.reserve(n);
  SensorFrame frame;
  run_episode(genome, command_code, duration_steps,
              [&](int, const WorldState& state, const Pose& pose,
                  std::span<const double> motors, const Body& body) {
                body.sense(state, pose, frame);
                trace.touch.insert(trace.touch.end(), frame.touch.begin(), frame.touch.end());
                trace.proprioception.insert(trace.proprioception.end(),
                                            state.joint_angles.begin(), state.joint_angles.end());
                trace.eyes.insert(trace.eyes.end(), frame.eye_distances.begin(),
                                  frame.eye_distances.end());
                trace.motors.insert(trace.motors.end(), motors.begin(), motors.end());
                trace.trajectory.push_back(state.root_position);
              });
  return trace;
}

std::vector<Vec3> sampled_trajectory(const RobotGenome& genome, double command_code,
                                     int duration_steps, int stride) {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(duration_steps / std::max(stride, 1) + 1));
  run_episode(genome, command_code, duration_steps,
              [&](int t, const WorldState& state, const Pose&, std::span<const double>,
                  const Body&) {
                if (t % stride == 0) out.push_back(state.root_position);
              });
  return out;
}

double trajectory_distance(std::span<const Vec3> a, std::span<const Vec3> b, int stride) {
  if (a.size() != b.size())
    throw DimensionError("trajectory lengths differ: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  if (stride < 1) throw DimensionError("trajectory stride must be positive");
  double sum = 0.0;
  for (std::size_t t = 0; t < a.size(); t += static_cast<std::size_t>(stride)) {
    const double dx = a[t].x - b[t].x, dy = a[t].y - b[t].y;
    sum += dx * dx + dy * dy;
  }
  return std::sqrt(sum);
}

double trajectory_distance(const EvaluationTrace& a, const EvaluationTrace& b) {
  return trajectory_distance(a.trajectory, b.trajectory, kTrajectoryStride);
}

double horizontal_displacement(const EvaluationTrace& trace, int from, int to) {
  return horizontal_distance(trace.trajectory.at(from), trace.trajectory.at(to));
}

std::uint64_t trace_hash(const EvaluationTrace& trace) {
  Fnv1a h;
  auto put = [&h](const auto& v) {
    h.update(std::as_bytes(std::span(v.data(), v.size())));
  };
  put(trace.touch);
  put(trace.proprioception);
  put(trace.eyes);
  put(trace.motors);
  put(trace.trajectory);
  return h.digest();
}

}  // namespace crowdbots
