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

#include "crowdbots/critic.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <Eigen/Core>
#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "crowdbots/hash.h"
#include "crowdbots/rng.h"

namespace crowdbots {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

template <typename Derived>
Mat sigmoid(const Eigen::MatrixBase<Derived>& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

// 2 sigmoid(2z) - 1: Eigen vectorizes exp but not tanh for doubles.
template <typename Derived>
Mat tanh(const Eigen::MatrixBase<Derived>& z) {
  return (2.0 * (1.0 + (-2.0 * z.array()).exp()).inverse() - 1.0).matrix();
}

// Activations kept for backpropagation, one entry per time step.
struct LayerTape {
  std::vector<Mat> cat;    // [x_t; h_{t-1}]
  std::vector<Mat> gates;  // activated i, f, g, o stacked
  std::vector<Mat> c;
  std::vector<Mat> tc;     // tanh(c)
};

// Inverted-dropout multipliers (0 or 1/(1-p)); empty when dropout is off.
struct Masks {
  std::vector<std::vector<Mat>> between;  // [layer][step] for all but the top layer
  Mat top;                                // top layer's last output
  bool active = false;
};

Mat draw_mask(Rng& rng, int rows, int cols, double rate) {
  Mat m(rows, cols);
  const double scale = 1.0 / (1.0 - rate);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.bernoulli(rate) ? 0.0 : scale;
  return m;
}

Masks make_masks(const CriticShape& s, int steps, int batch, double rate, std::uint64_t seed) {
  Masks m;
  if (rate <= 0.0) return m;
  m.active = true;
  Rng rng(seed);
  m.between.resize(s.layers - 1);
  for (int l = 0; l + 1 < s.layers; ++l)
    for (int t = 0; t < steps; ++t) m.between[l].push_back(draw_mask(rng, s.hidden, batch, rate));
  m.top = draw_mask(rng, s.hidden, batch, rate);
  return m;
}

// Works on an Eigen-owned copy of the parameters. Vectorized reductions peel
// differently depending on buffer alignment, and std::vector storage is only
// 16-byte aligned, so results would otherwise depend on where it landed.
class Network {
 public:
  Network(const CriticShape& shape, const std::vector<double>& params)
      : s_(shape), own_(Eigen::Map<const Vec>(params.data(), params.size())), p_(own_.data()) {}

  Eigen::Map<const Mat> weights(int l) const {
    return {p_ + s_.layer_offset(l), 4 * s_.hidden, s_.layer_inputs(l) + s_.hidden};
  }
  Eigen::Map<const Vec> bias(int l) const {
    const int h = s_.hidden;
    return {p_ + s_.layer_offset(l) + 4 * h * (s_.layer_inputs(l) + h), 4 * h};
  }
  Eigen::Map<const Vec> dense_w() const { return {p_ + s_.dense_offset(), s_.hidden}; }
  double dense_b() const { return p_[s_.dense_offset() + s_.hidden]; }

  // x: one (inputs x batch) matrix per step. Returns the outputs (1 x batch)
  // and, when tape is given, records what backward needs.
  RowVec forward(const std::vector<Mat>& x, const Masks& masks, std::vector<LayerTape>* tape,
                 Mat* top_out) const {
    const int H = s_.hidden;
    const int steps = static_cast<int>(x.size());
    const int batch = static_cast<int>(x.front().cols());
    std::vector<Mat> in = x;
    Mat last;
    if (tape) tape->assign(s_.layers, {});
    for (int l = 0; l < s_.layers; ++l) {
      const auto W = weights(l);
      const auto b = bias(l);
      const int n_in = s_.layer_inputs(l);
      Mat h = Mat::Zero(H, batch), c = Mat::Zero(H, batch);
      Mat cat(n_in + H, batch), z(4 * H, batch);
      LayerTape* lt = tape ? &(*tape)[l] : nullptr;
      for (int t = 0; t < steps; ++t) {
        cat.topRows(n_in) = in[t];
        cat.bottomRows(H) = h;
        z.noalias() = W * cat;
        z.colwise() += b;
        Mat gates(4 * H, batch);
        gates.topRows(2 * H) = sigmoid(z.topRows(2 * H));
        gates.middleRows(2 * H, H) = tanh(z.middleRows(2 * H, H));
        gates.bottomRows(H) = sigmoid(z.bottomRows(H));
        c = (gates.middleRows(H, H).array() * c.array() +
             gates.topRows(H).array() * gates.middleRows(2 * H, H).array())
                .matrix();
        Mat tc = tanh(c);
        h = (gates.bottomRows(H).array() * tc.array()).matrix();
        if (lt) {
          lt->cat.push_back(cat);
          lt->gates.push_back(std::move(gates));
          lt->c.push_back(c);
          lt->tc.push_back(std::move(tc));
        }
        if (l + 1 < s_.layers)
          in[t] = masks.active ? Mat(h.array() * masks.between[l][t].array()) : h;
      }
      last = h;
    }
    if (masks.active) last = (last.array() * masks.top.array()).matrix();
    RowVec y = (dense_w().transpose() * last).array() + dense_b();
    y = y.array().tanh();
    if (top_out) *top_out = std::move(last);
    return y;
  }

  // dy: d loss / d output (1 x batch). Accumulates into grad.
  void backward(const std::vector<LayerTape>& tape, const Masks& masks, const Mat& top,
                const RowVec& y, const RowVec& dy, double* grad) const {
    const int H = s_.hidden;
    const int steps = static_cast<int>(tape.front().cat.size());
    const int batch = static_cast<int>(y.cols());

    const RowVec dpre = (dy.array() * (1.0 - y.array().square())).matrix();
    Eigen::Map<Vec>(grad + s_.dense_offset(), H) += top * dpre.transpose();
    grad[s_.dense_offset() + H] += dpre.sum();

    std::vector<Mat> dh_ext(steps, Mat::Zero(H, batch));
    dh_ext.back() = dense_w() * dpre;
    if (masks.active) dh_ext.back() = (dh_ext.back().array() * masks.top.array()).matrix();

    for (int l = s_.layers - 1; l >= 0; --l) {
      const LayerTape& lt = tape[l];
      const auto W = weights(l);
      const int n_in = s_.layer_inputs(l);
      Eigen::Map<Mat> dW(grad + s_.layer_offset(l), 4 * H, n_in + H);
      Eigen::Map<Vec> db(grad + s_.layer_offset(l) + 4 * H * (n_in + H), 4 * H);
      Mat dh_next = Mat::Zero(H, batch), dc_next = Mat::Zero(H, batch);
      Mat dz(4 * H, batch), dcat(n_in + H, batch);
      std::vector<Mat> dx;
      if (l > 0) dx.resize(steps);
      for (int t = steps - 1; t >= 0; --t) {
        const Mat& g = lt.gates[t];
        const auto i = g.topRows(H).array();
        const auto f = g.middleRows(H, H).array();
        const auto cand = g.middleRows(2 * H, H).array();
        const auto o = g.bottomRows(H).array();
        const auto tc = lt.tc[t].array();
        const Eigen::ArrayXXd dh = (dh_ext[t] + dh_next).array();
        const Eigen::ArrayXXd dc = dc_next.array() + dh * o * (1.0 - tc.square());
        dz.bottomRows(H) = (dh * tc * o * (1.0 - o)).matrix();
        dz.topRows(H) = (dc * cand * i * (1.0 - i)).matrix();
        dz.middleRows(2 * H, H) = (dc * i * (1.0 - cand.square())).matrix();
        if (t > 0)
          dz.middleRows(H, H) = (dc * lt.c[t - 1].array() * f * (1.0 - f)).matrix();
        else
          dz.middleRows(H, H).setZero();
        dc_next = (dc * f).matrix();
        dW.noalias() += dz * lt.cat[t].transpose();
        db += dz.rowwise().sum();
        dcat.noalias() = W.transpose() * dz;
        dh_next = dcat.bottomRows(H);
        if (l > 0) dx[t] = dcat.topRows(n_in);
      }
      if (l > 0) {
        for (int t = 0; t < steps; ++t)
          dh_ext[t] = masks.active ? Mat(dx[t].array() * masks.between[l - 1][t].array())
                                   : dx[t];
      }
    }
  }

 private:
  CriticShape s_;
  Vec own_;
  const double* p_;
};

std::vector<Mat> to_steps(std::span<const std::span<const double>> seqs, int inputs) {
  if (seqs.empty()) throw DimensionError("empty batch");
  const std::size_t len = seqs.front().size();
  if (len == 0 || len % static_cast<std::size_t>(inputs) != 0)
    throw DimensionError("sequence length is not a multiple of the input width");
  const int steps = static_cast<int>(len / inputs);
  const int batch = static_cast<int>(seqs.size());
  std::vector<Mat> x(steps, Mat(inputs, batch));
  for (int b = 0; b < batch; ++b) {
    if (seqs[b].size() != len) throw DimensionError("sequences in a batch differ in length");
    for (int t = 0; t < steps; ++t)
      for (int k = 0; k < inputs; ++k) x[t](k, b) = seqs[b][t * inputs + k];
  }
  return x;
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::array<int, kFeatureRows> retained_steps() {
  std::array<int, kFeatureRows> r{};
  for (int k = 0; k < kFeatureRows; ++k) r[k] = k * kFeatureStride;
  return r;
}

std::vector<double> joint_feature(const EvaluationTrace& trace) {
  if (trace.frame_count() != kFeatureRows * kFeatureStride)
    throw FormatError("trace has " + std::to_string(trace.frame_count()) + " frames, expected " +
                      std::to_string(kFeatureRows * kFeatureStride));
  if (trace.joint_count < 1) throw FormatError("trace has no joints");
  if (trace.proprioception.size() !=
      static_cast<std::size_t>(trace.frame_count()) * trace.joint_count)
    throw FormatError("trace proprioception size does not match its joint count");
  std::vector<double> out;
  out.reserve(kFeatureRows);
  for (int t : retained_steps()) {
    const auto now = trace.joint_angles(t);
    const auto before = trace.joint_angles(t > 0 ? t - 1 : 0);
    double sum = 0.0;
    for (int i = 0; i < trace.joint_count; ++i) sum += now[i] - before[i];
    out.push_back(sum / trace.joint_count);
  }
  return out;
}

FeatureMatrix build_features(const EvaluationTrace& trace) {
  const std::vector<double> j = joint_feature(trace);
  FeatureMatrix f;
  const auto steps = retained_steps();
  for (int r = 0; r < kFeatureRows; ++r) {
    const Vec3& head = trace.head_position(steps[r]);
    f(r, 0) = j[r];
    f(r, 1) = head.x;
    f(r, 2) = head.y;
    f(r, 3) = head.z;
  }
  return f;
}

std::optional<double> normalized_reinforcement(std::int64_t e_y, std::int64_t e_n,
                                               std::string_view command) {
  if (e_y < 0 || e_n < 0 || e_y + e_n == 0) return std::nullopt;
  const double o = static_cast<double>(e_y - e_n) / static_cast<double>(e_y + e_n);
  return command == "stop" ? -o : o;
}

std::uint64_t dataset_checksum(std::span<const Example> examples) {
  Fnv1a h;
  auto put = [&h](const auto& v) { h.update(std::as_bytes(std::span(&v, 1))); };
  for (const Example& e : examples) {
    put(e.evaluation_id);
    put(e.robot_id);
    put(e.species);
    h.update(e.command);
    put(e.e_y);
    put(e.e_n);
    put(e.o);
    h.update(std::as_bytes(std::span(e.features.values)));
  }
  return h.digest();
}

Dataset build_dataset(std::span<const Example> pool, Species species, std::uint64_t seed,
                      int per_class) {
  std::vector<const Example*> pos, neg;
  for (const Example& e : pool) {
    if (e.species != species || (e.command != "move" && e.command != "stop")) continue;
    const auto o = normalized_reinforcement(e.e_y, e.e_n, e.command);
    if (!o) continue;
    if (*o > 0.0) pos.push_back(&e);
    if (*o < 0.0) neg.push_back(&e);
  }
  const auto need = static_cast<std::size_t>(per_class);
  if (pos.size() < need || neg.size() < need) {
    std::string msg = std::string(species_name(species)) + ": need " +
                      std::to_string(per_class) + " positive and " + std::to_string(per_class) +
                      " negative examples, have " + std::to_string(pos.size()) +
                      " positive and " + std::to_string(neg.size()) + " negative (short";
    if (pos.size() < need) msg += " " + std::to_string(need - pos.size()) + " positive";
    if (neg.size() < need) msg += " " + std::to_string(need - neg.size()) + " negative";
    throw InsufficientDataError(msg + ")");
  }
  Rng rng(derive_seed(seed, Stream::kDataset, static_cast<std::uint64_t>(species)));
  rng.shuffle(pos.begin(), pos.end());
  rng.shuffle(neg.begin(), neg.end());
  Dataset d;
  d.species = species;
  for (std::size_t k = 0; k < need; ++k) d.examples.push_back(*pos[k]);
  for (std::size_t k = 0; k < need; ++k) d.examples.push_back(*neg[k]);
  for (Example& e : d.examples) e.o = *normalized_reinforcement(e.e_y, e.e_n, e.command);
  return d;
}

std::size_t CriticShape::layer_offset(int l) const {
  std::size_t off = 0;
  for (int k = 0; k < l; ++k)
    off += static_cast<std::size_t>(4 * hidden) * (layer_inputs(k) + hidden + 1);
  return off;
}

CriticModel::CriticModel(const CriticShape& shape, std::uint64_t seed) : shape_(shape) {
  if (shape.inputs < 1 || shape.hidden < 1 || shape.layers < 1)
    throw DimensionError("critic shape must be positive");
  params_.assign(shape.parameter_count(), 0.0);
  Rng rng(seed);
  const int H = shape.hidden;
  for (int l = 0; l < shape.layers; ++l) {
    const int n_in = shape.layer_inputs(l);
    double* w = params_.data() + shape.layer_offset(l);
    // Input and recurrent blocks each get their own Glorot limit.
    const double lim_in = std::sqrt(6.0 / (n_in + 4 * H));
    const double lim_rec = std::sqrt(6.0 / (H + 4 * H));
    for (int c = 0; c < n_in + H; ++c)
      for (int r = 0; r < 4 * H; ++r) {
        const double lim = c < n_in ? lim_in : lim_rec;
        w[c * 4 * H + r] = rng.uniform(-lim, lim);
      }
    double* b = w + 4 * H * (n_in + H);
    for (int r = H; r < 2 * H; ++r) b[r] = 1.0;
  }
  const double lim = std::sqrt(6.0 / (H + 1));
  for (int k = 0; k < H; ++k) params_[shape.dense_offset() + k] = rng.uniform(-lim, lim);
}

double CriticModel::predict(std::span<const double> sequence) const {
  const std::span<const double> one[] = {sequence};
  return predict(one).front();
}

std::vector<double> CriticModel::predict(
    std::span<const std::span<const double>> sequences) const {
  const std::vector<Mat> x = to_steps(sequences, shape_.inputs);
  const RowVec y = Network(shape_, params_).forward(x, Masks{}, nullptr, nullptr);
  return {y.data(), y.data() + y.size()};
}

double CriticModel::loss(std::span<const std::span<const double>> sequences,
                         std::span<const double> targets, std::vector<double>* gradient,
                         double dropout_rate, std::uint64_t dropout_seed) const {
  if (sequences.size() != targets.size())
    throw DimensionError("critic batch has " + std::to_string(sequences.size()) +
                         " sequences but " + std::to_string(targets.size()) + " targets");
  const std::vector<Mat> x = to_steps(sequences, shape_.inputs);
  const int batch = static_cast<int>(sequences.size());
  const Masks masks =
      make_masks(shape_, static_cast<int>(x.size()), batch, dropout_rate, dropout_seed);
  const Network net(shape_, params_);
  std::vector<LayerTape> tape;
  Mat top;
  const RowVec y = net.forward(x, masks, gradient ? &tape : nullptr, &top);
  const Eigen::Map<const RowVec> target(targets.data(), batch);
  const RowVec diff = y - target;
  const double l = diff.squaredNorm() / batch;
  if (gradient) {
    Vec g = Vec::Zero(static_cast<Eigen::Index>(params_.size()));  // aligned, see Network
    net.backward(tape, masks, top, y, (2.0 / batch) * diff, g.data());
    gradient->assign(g.begin(), g.end());
  }
  return l;
}

nlohmann::json CriticModel::to_json(std::uint64_t checksum) const {
  return {{"format", "crowdbots-critic"},
          {"version", 1},
          {"shape", {{"inputs", shape_.inputs}, {"hidden", shape_.hidden}, {"layers", shape_.layers}}},
          {"dataset_checksum", hex64(checksum)},
          {"parameters", params_}};
}

CriticModel CriticModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "crowdbots-critic" || j.at("version") != 1)
      throw FormatError("not a version-1 critic");
    CriticModel m;
    const auto& s = j.at("shape");
    m.shape_ = {s.at("inputs").get<int>(), s.at("hidden").get<int>(), s.at("layers").get<int>()};
    m.params_ = j.at("parameters").get<std::vector<double>>();
    if (m.shape_.inputs < 1 || m.shape_.hidden < 1 || m.shape_.layers < 1 ||
        m.params_.size() != m.shape_.parameter_count())
      throw FormatError("critic parameter count does not match its shape");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("critic: ") + e.what());
  }
}

TrainResult train(std::span<const Example* const> examples, const CriticShape& shape,
                  const TrainConfig& config, std::uint64_t seed) {
  if (examples.empty()) throw DimensionError("no training examples");
  if (config.batch_size < 1 || config.epochs < 0)
    throw DimensionError("batch size and epochs must be positive");
  TrainResult result;
  result.model = CriticModel(shape, derive_seed(seed, Stream::kCriticInit));
  std::vector<double>& p = result.model.parameters();

  const std::size_t n = examples.size();
  std::vector<std::span<const double>> all(n);
  std::vector<double> all_targets(n);
  for (std::size_t k = 0; k < n; ++k) {
    all[k] = examples[k]->features.values;
    all_targets[k] = examples[k]->o;
  }
  result.initial_loss = result.model.loss(all, all_targets);

  std::vector<double> m(p.size(), 0.0), v(p.size(), 0.0), grad;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::span<const double>> batch;
  std::vector<double> targets;
  double b1t = 1.0, b2t = 1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng(derive_seed(seed, Stream::kCriticShuffle, epoch)).shuffle(order.begin(), order.end());
    for (std::size_t start = 0, bi = 0; start < n; start += config.batch_size, ++bi) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      targets.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(all[order[k]]);
        targets.push_back(all_targets[order[k]]);
      }
      const double l = result.model.loss(batch, targets, &grad, config.dropout,
                                         derive_seed(seed, Stream::kDropout, epoch, bi));
      bool finite = std::isfinite(l);
      for (double g : grad) finite = finite && std::isfinite(g);
      if (!finite)
        throw Error("non_finite_loss", "training diverged at epoch " + std::to_string(epoch + 1) +
                                           " batch " + std::to_string(bi + 1) +
                                           " (loss=" + std::to_string(l) + ")");
      b1t *= config.beta1;
      b2t *= config.beta2;
      const double rate = config.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * grad[k];
        v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * grad[k] * grad[k];
        p[k] -= rate * m[k] / (std::sqrt(v[k]) + config.epsilon);
      }
    }
    if (epoch == 0) result.first_epoch_loss = result.model.loss(all, all_targets);
  }
  result.final_loss = result.model.loss(all, all_targets);
  if (config.epochs == 0) result.first_epoch_loss = result.final_loss;
  return result;
}

ErrorSummary mean_errors(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw DimensionError("mean_errors needs equal, non-empty inputs (got " +
                         std::to_string(predictions.size()) + " and " +
                         std::to_string(labels.size()) + ")");
  ErrorSummary e;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    e.signed_mean += predictions[k] - labels[k];
    e.absolute_mean += std::abs(predictions[k] - labels[k]);
  }
  e.signed_mean /= static_cast<double>(labels.size());
  e.absolute_mean /= static_cast<double>(labels.size());
  return e;
}

std::vector<double> permute_labels(std::span<const double> labels, std::uint64_t seed) {
  std::vector<double> out(labels.begin(), labels.end());
  Rng(seed).shuffle(out.begin(), out.end());
  return out;
}

ErrorSummary permuted_control(std::span<const double> predictions,
                              std::span<const double> labels, std::uint64_t seed) {
  return mean_errors(predictions, permute_labels(labels, seed));
}

std::vector<int> assign_folds(std::span<const Example> examples, int folds, std::uint64_t seed) {
  if (folds < 2 || examples.size() < static_cast<std::size_t>(folds))
    throw DimensionError("need at least as many examples as folds (" +
                         std::to_string(examples.size()) + " < " + std::to_string(folds) + ")");
  std::vector<std::size_t> pos, neg;
  for (std::size_t k = 0; k < examples.size(); ++k)
    (examples[k].o > 0.0 ? pos : neg).push_back(k);
  Rng rng(seed);
  rng.shuffle(pos.begin(), pos.end());
  rng.shuffle(neg.begin(), neg.end());
  std::vector<int> fold(examples.size());
  std::size_t k = 0;
  for (std::size_t i : pos) fold[i] = static_cast<int>(k++ % folds);
  for (std::size_t i : neg) fold[i] = static_cast<int>(k++ % folds);
  return fold;
}

TTest compare(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw DimensionError("t-test needs at least two samples on each side");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  double ssa = 0.0, ssb = 0.0;
  for (double x : a) ssa += (x - ma) * (x - ma);
  for (double x : b) ssb += (x - mb) * (x - mb);
  TTest r;
  r.degrees_of_freedom = na + nb - 2.0;
  constexpr double kVarianceFloor = 1e-12;
  const double pooled = std::max((ssa + ssb) / r.degrees_of_freedom, kVarianceFloor);
  r.t = (ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  const boost::math::students_t dist(r.degrees_of_freedom);
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  r.p_corrected = std::min(1.0, r.p * kBonferroniFactor);
  return r;
}

std::vector<double> CriticReport::fold_mae() const {
  std::vector<double> v;
  for (const FoldResult& f : folds) v.push_back(f.error.absolute_mean);
  return v;
}

std::vector<double> CriticReport::permuted_fold_mae() const {
  std::vector<double> v;
  for (const FoldResult& f : folds) v.push_back(f.permuted.absolute_mean);
  return v;
}

nlohmann::json CriticReport::to_json() const {
  nlohmann::json fj = nlohmann::json::array();
  for (const FoldResult& f : folds)
    fj.push_back({{"fold", f.fold},
                  {"test_indices", f.test_indices},
                  {"predictions", f.predictions},
                  {"labels", f.labels},
                  {"mean_error", f.error.signed_mean},
                  {"mae", f.error.absolute_mean},
                  {"permuted_mean_error", f.permuted.signed_mean},
                  {"permuted_mae", f.permuted.absolute_mean},
                  {"first_epoch_loss", f.first_epoch_loss},
                  {"final_loss", f.final_loss}});
  return {{"format", "crowdbots-critic-report"},
          {"version", 1},
          {"species", species_name(species)},
          {"dataset_checksum", hex64(dataset_checksum)},
          {"config",
           {{"epochs", config.epochs},
            {"batch_size", config.batch_size},
            {"learning_rate", config.learning_rate},
            {"beta1", config.beta1},
            {"beta2", config.beta2},
            {"epsilon", config.epsilon},
            {"dropout", config.dropout},
            {"folds", config.folds}}},
          {"experiment", {{"mean_error", experiment.signed_mean}, {"mae", experiment.absolute_mean}}},
          {"permuted", {{"mean_error", permuted.signed_mean}, {"mae", permuted.absolute_mean}}},
          {"t_test",
           {{"t", test.t},
            {"df", test.degrees_of_freedom},
            {"p", test.p},
            {"p_corrected", test.p_corrected}}},
          {"folds", fj}};
}

CriticReport cross_validate(const Dataset& dataset, const TrainConfig& config,
                            std::uint64_t seed, const CriticShape& shape,
                            const FoldProgress& progress) {
  CriticReport report;
  report.species = dataset.species;
  report.dataset_checksum = dataset.checksum();
  report.config = config;
  const auto& ex = dataset.examples;
  const std::vector<int> fold_of = assign_folds(ex, config.folds, derive_seed(seed, Stream::kFolds));
  for (int f = 0; f < config.folds; ++f) {
    FoldResult r;
    r.fold = f;
    std::vector<const Example*> train_set;
    std::vector<std::span<const double>> test_x;
    for (std::size_t k = 0; k < ex.size(); ++k) {
      if (fold_of[k] == f) {
        r.test_indices.push_back(k);
        test_x.push_back(ex[k].features.values);
        r.labels.push_back(ex[k].o);
      } else {
        train_set.push_back(&ex[k]);
      }
    }
    const TrainResult tr =
        train(train_set, shape, config, derive_seed(seed, Stream::kCriticInit, f + 1));
    r.predictions = tr.model.predict(test_x);
    r.error = mean_errors(r.predictions, r.labels);
    r.permuted = permuted_control(r.predictions, r.labels, derive_seed(seed, Stream::kPermutation, f));
    r.first_epoch_loss = tr.first_epoch_loss;
    r.final_loss = tr.final_loss;
    if (progress) progress(r);
    report.folds.push_back(std::move(r));
  }
  const auto n = static_cast<double>(report.folds.size());
  for (const FoldResult& r : report.folds) {
    report.experiment.signed_mean += r.error.signed_mean / n;
    report.experiment.absolute_mean += r.error.absolute_mean / n;
    report.permuted.signed_mean += r.permuted.signed_mean / n;
    report.permuted.absolute_mean += r.permuted.absolute_mean / n;
  }
  report.test = compare(report.fold_mae(), report.permuted_fold_mae());
  return report;
}

}  // namespace crowdbots
