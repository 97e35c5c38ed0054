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

// Fixed-timestep robot simulation.
//
// Dynamics follow a kinematic anchor model rather than rigid-body physics:
//   1. each joint slews toward its motor target at no more than kMaxJointSpeed;
//   2. forward kinematics places every contact point relative to the root;
//   3. points at or below the ground are contacts and act as anchors, so the
//      root translates horizontally by the negated mean displacement of the
//      contacts (a sphere carrying an internal pendulum also rolls toward the
//      pendulum's horizontal offset once it exceeds a rolling-resistance dead
//      zone);
//   4. the root is lifted so the lowest point rests on the ground, or falls
//      ballistically when nothing touches.
// Root orientation is fixed; robots never turn.

#ifndef CROWDBOTS_SIMULATION_H_
#define CROWDBOTS_SIMULATION_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crowdbots/color.h"
#include "crowdbots/geometry.h"
#include "crowdbots/morphology.h"

namespace crowdbots {

inline constexpr double kTimeStep = 0.05;            // s
inline constexpr int kEvaluationSteps = 1800;        // 30 s
inline constexpr int kWarmupSteps = 50;
inline constexpr double kGravity = 9.8;              // m/s^2
inline constexpr double kMaxJointSpeed = 2.0;        // rad/s
inline constexpr double kContactTolerance = 1e-9;    // m
inline constexpr double kTouchTolerance = 1e-6;      // m
inline constexpr double kEyeRange = 20.0;            // m
inline constexpr double kRollGain = 2.0;             // 1/s
inline constexpr double kRollDeadZone = 0.1;         // m of pendulum offset
inline constexpr int kTrajectoryStride = 18;

using HiddenState = std::array<double, kHiddenSize>;

struct WorldState {
  Vec3 root_position;
  double root_vertical_velocity = 0.0;
  std::vector<double> joint_angles;
  HiddenState hidden_state{};
  int step_index = 0;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct SensorFrame {
  std::vector<std::uint8_t> touch;     // per segment
  std::vector<double> proprioception;  // per joint, rad
  Vec3 head_position;
  std::vector<double> eye_distances;   // per eye, m (kEyeRange when nothing is hit)
  std::vector<double> motors;          // per joint, in (-1, 1)
};

// Frames are stored column-wise; frame(t) assembles one SensorFrame.
struct EvaluationTrace {
  std::uint64_t evaluation_id = 0;
  RobotId robot_id = 0;
  Species species = Species::kStickbot;
  std::string command_text;
  double command_code = 0.0;
  Color color = Color::kRed;

  int segment_count = 0;
  int joint_count = 0;
  int eye_count = 0;
  std::vector<std::uint8_t> touch;     // frames x segments
  std::vector<double> proprioception;  // frames x joints
  std::vector<double> eyes;            // frames x eyes
  std::vector<double> motors;          // frames x joints
  std::vector<Vec3> trajectory;        // root (head) position per frame

  int frame_count() const { return static_cast<int>(trajectory.size()); }
  SensorFrame frame(int t) const;
  const Vec3& head_position(int t) const { return trajectory[t]; }
  std::span<const double> joint_angles(int t) const {
    return {proprioception.data() + static_cast<std::size_t>(t) * joint_count,
            static_cast<std::size_t>(joint_count)};
  }

  friend bool operator==(const EvaluationTrace&, const EvaluationTrace&) = default;
};

// Controller forward pass:
//   hidden' = tanh(W_in^T [sensors, command, 1] + W_hh^T hidden)
//   motors  = tanh(W_out^T hidden')
// Throws DimensionError when sensor_inputs does not match the genome.
struct ControllerOutput {
  HiddenState hidden;
  std::vector<double> motors;
};
ControllerOutput controller_step(const ControllerGenome& genome,
                                 std::span<const double> sensor_inputs, double command_code,
                                 const HiddenState& hidden_state);

// World positions of every segment's two endpoints (spheres repeat the center).
std::vector<std::array<Vec3, 2>> segment_endpoints(const SpeciesSpec& spec,
                                                   const Vec3& root,
                                                   std::span<const double> joint_angles);

// Lowest height over all ground-contacting segment points.
double lowest_point_height(const SpeciesSpec& spec, const WorldState& state);

WorldState physics_step(const WorldState& state, std::span<const double> motor_outputs,
                        const SpeciesSpec& spec, const BodyGenome& body);
// Zero rest angles.
WorldState physics_step(const WorldState& state, std::span<const double> motor_outputs,
                        const SpeciesSpec& spec);

// Canonical start pose: rest angles, root over the origin, lowest point on the
// ground, hidden state zero. Warm-up steps are applied separately by evaluate.
WorldState rest_state(const RobotGenome& genome);

SensorFrame sense(const WorldState& state, const SpeciesSpec& spec);
// Sensor frame mapped onto controller inputs in channel-map order.
std::vector<double> normalized_inputs(const SensorFrame& frame, const SpeciesSpec& spec);

EvaluationTrace evaluate(const RobotGenome& genome, double command_code,
                         const std::string& command_text = {},
                         int duration_steps = kEvaluationSteps);

// Root positions at steps 0, stride, 2*stride, ... without recording frames.
// Matches evaluate(...).trajectory at those steps exactly.
std::vector<Vec3> sampled_trajectory(const RobotGenome& genome, double command_code,
                                     int duration_steps = kEvaluationSteps,
                                     int stride = kTrajectoryStride);

// sqrt of summed squared horizontal distances between corresponding samples
// (every stride-th position). Throws DimensionError on length mismatch.
double trajectory_distance(std::span<const Vec3> a, std::span<const Vec3> b,
                           int stride = kTrajectoryStride);
double trajectory_distance(const EvaluationTrace& a, const EvaluationTrace& b);

// Net horizontal head displacement between two frames of a trace.
double horizontal_displacement(const EvaluationTrace& trace, int from, int to);

std::uint64_t trace_hash(const EvaluationTrace& trace);

}  // namespace crowdbots

#endif  // CROWDBOTS_SIMULATION_H_
