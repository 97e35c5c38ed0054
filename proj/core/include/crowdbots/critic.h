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

// Critics: recurrent regressors that predict a crowd's normalized
// reinforcement of an evaluation from what the robot sensed of itself.
//
// Features are 100 rows (every 18th of 1800 frames) by 4 columns: the mean
// joint-angle change across joints and the raw head x, y, z. The network is
// a stack of LSTM layers with inverted dropout after each stack and a tanh
// output unit, trained with Adam on mean squared error.

#ifndef CROWDBOTS_CRITIC_H_
#define CROWDBOTS_CRITIC_H_

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crowdbots/errors.h"
#include "crowdbots/morphology.h"
#include "crowdbots/simulation.h"

namespace crowdbots {

inline constexpr int kFeatureRows = 100;
inline constexpr int kFeatureColumns = 4;
inline constexpr int kFeatureStride = 18;
inline constexpr int kExamplesPerClass = 100;
inline constexpr double kBonferroniFactor = 120.0;  // C(16, 2)

struct FeatureMatrix {
  std::array<double, kFeatureRows * kFeatureColumns> values{};  // row-major

  double operator()(int r, int c) const { return values[r * kFeatureColumns + c]; }
  double& operator()(int r, int c) { return values[r * kFeatureColumns + c]; }
  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

// 0, 18, ..., 1782.
std::array<int, kFeatureRows> retained_steps();

// Mean joint-angle change per retained step; the step before frame 0 is
// taken to equal frame 0. Throws FormatError unless the trace has 1800
// frames and at least one joint.
std::vector<double> joint_feature(const EvaluationTrace& trace);
FeatureMatrix build_features(const EvaluationTrace& trace);

// (e_y - e_n) / (e_y + e_n), negated under "stop"; nullopt when no votes.
std::optional<double> normalized_reinforcement(std::int64_t e_y, std::int64_t e_n,
                                               std::string_view command);

struct Example {
  std::uint64_t evaluation_id = 0;
  RobotId robot_id = 0;
  Species species = Species::kStickbot;
  std::string command;
  std::int64_t e_y = 0;
  std::int64_t e_n = 0;
  double o = 0.0;
  FeatureMatrix features;
  friend bool operator==(const Example&, const Example&) = default;
};

std::uint64_t dataset_checksum(std::span<const Example> examples);

struct Dataset {
  Species species = Species::kStickbot;
  std::vector<Example> examples;  // positives first, then negatives
  std::uint64_t checksum() const { return dataset_checksum(examples); }
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& message)
      : Error("insufficient_data", message) {}
};

// Draws per_class positive (o > 0) and per_class negative (o < 0) examples
// of `species` under "move"/"stop" without replacement. Throws
// InsufficientDataError naming the shortfall.
Dataset build_dataset(std::span<const Example> pool, Species species, std::uint64_t seed,
                      int per_class = kExamplesPerClass);

struct CriticShape {
  int inputs = kFeatureColumns;
  int hidden = 12;
  int layers = 2;

  int layer_inputs(int l) const { return l == 0 ? inputs : hidden; }
  std::size_t layer_offset(int l) const;  // start of layer l's weights
  std::size_t dense_offset() const { return layer_offset(layers); }
  std::size_t parameter_count() const { return dense_offset() + hidden + 1; }
  friend bool operator==(const CriticShape&, const CriticShape&) = default;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  double dropout = 0.2;
  int folds = 30;
};

// Stacked LSTM critic. Parameters are one flat vector: per layer the gate
// matrix W (4H x (inputs + H), column-major, gate rows ordered input,
// forget, candidate, output) followed by its bias, then the dense weights
// and bias.
class CriticModel {
 public:
  CriticModel() = default;
  // Glorot-uniform weights, forget-gate bias 1, other biases 0.
  CriticModel(const CriticShape& shape, std::uint64_t seed);

  const CriticShape& shape() const { return shape_; }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  // Inference (no dropout). Each sequence is steps x inputs, row-major.
  double predict(std::span<const double> sequence) const;
  std::vector<double> predict(std::span<const std::span<const double>> sequences) const;

  // Mean squared error over the batch. When `gradient` is non-null it is
  // resized and filled with d loss / d parameters. Dropout is applied when
  // dropout_rate > 0, with masks drawn from `dropout_seed`.
  double loss(std::span<const std::span<const double>> sequences,
              std::span<const double> targets, std::vector<double>* gradient = nullptr,
              double dropout_rate = 0.0, std::uint64_t dropout_seed = 0) const;

  // {"format": "crowdbots-critic", "version": 1, "shape": {...},
  //  "dataset_checksum": "<hex>", "parameters": [...]}
  nlohmann::json to_json(std::uint64_t dataset_checksum) const;
  static CriticModel from_json(const nlohmann::json& j);

  friend bool operator==(const CriticModel&, const CriticModel&) = default;

 private:
  CriticShape shape_;
  std::vector<double> params_;
};

struct TrainResult {
  CriticModel model;
  double initial_loss = 0.0;  // training split, no dropout, before epoch 1
  double first_epoch_loss = 0.0;
  double final_loss = 0.0;
};

// Trains on the given examples. Throws Error("non_finite_loss") with the
// epoch and batch when the loss diverges.
TrainResult train(std::span<const Example* const> examples, const CriticShape& shape,
                  const TrainConfig& config, std::uint64_t seed);

struct ErrorSummary {
  double signed_mean = 0.0;  // sum(o' - o) / n
  double absolute_mean = 0.0;
  friend bool operator==(const ErrorSummary&, const ErrorSummary&) = default;
};

// Throws DimensionError on empty or mismatched input.
ErrorSummary mean_errors(std::span<const double> predictions, std::span<const double> labels);

// Labels shuffled by a seeded uniform permutation.
std::vector<double> permute_labels(std::span<const double> labels, std::uint64_t seed);
ErrorSummary permuted_control(std::span<const double> predictions,
                              std::span<const double> labels, std::uint64_t seed);

// Stratified assignment of each example to a fold: sizes differ by at most
// one and every fold mixes classes as evenly as the counts allow.
std::vector<int> assign_folds(std::span<const Example> examples, int folds, std::uint64_t seed);

struct FoldResult {
  int fold = 0;
  std::vector<std::size_t> test_indices;
  std::vector<double> predictions;
  std::vector<double> labels;
  ErrorSummary error;
  ErrorSummary permuted;
  double first_epoch_loss = 0.0;
  double final_loss = 0.0;
};

struct TTest {
  double t = 0.0;
  double degrees_of_freedom = 0.0;
  double p = 1.0;            // two-sided
  double p_corrected = 1.0;  // p * 120, clamped to 1
};

// Pooled-variance two-sample t-test. A zero pooled variance is replaced by a
// tiny epsilon so identical constant samples give t = 0 and distinct ones a
// huge |t|. Throws DimensionError with fewer than two samples per side.
TTest compare(std::span<const double> a, std::span<const double> b);

struct CriticReport {
  Species species = Species::kStickbot;
  std::uint64_t dataset_checksum = 0;
  TrainConfig config;
  std::vector<FoldResult> folds;
  ErrorSummary experiment;  // means over folds
  ErrorSummary permuted;
  TTest test;  // fold MAE, experiment vs permuted

  std::vector<double> fold_mae() const;
  std::vector<double> permuted_fold_mae() const;
  nlohmann::json to_json() const;
};

using FoldProgress = std::function<void(const FoldResult&)>;

CriticReport cross_validate(const Dataset& dataset, const TrainConfig& config,
                            std::uint64_t seed, const CriticShape& shape = {},
                            const FoldProgress& progress = {});

}  // namespace crowdbots

#endif  // CROWDBOTS_CRITIC_H_
