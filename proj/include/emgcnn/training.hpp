#pragma once

// Training protocol: stratified split, mini-batch Adam on categorical
// cross-entropy, fixed epoch count, per-epoch curves and final test metrics.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "emgcnn/metrics.hpp"
#include "emgcnn/nn/network.hpp"
#include "emgcnn/windowing.hpp"

namespace emgcnn::training {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 35;
  double train_fraction = 0.7;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
      throw UsageError("Adam betas must lie in [0, 1)");
    }
    if (!(epsilon >= 0.0)) throw UsageError("Adam epsilon must be >= 0");
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw UsageError("train fraction must lie in (0, 1)");
    }
    if (batch_size < 1) throw UsageError("batch size must be >= 1");
  }
};

inline constexpr double kProbabilityFloor = 1e-12;

inline double cross_entropy(std::span<const double> pred, ClassId target) {
  const auto t = static_cast<std::size_t>(to_index(target));
  if (t >= pred.size()) throw ShapeError("cross_entropy: target outside prediction vector");
  return -std::log(std::max(pred[t], kProbabilityFloor));
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// One Adam update with bias correction at step t (1-based):
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      std::int64_t t, const TrainConfig& cfg) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter/gradient/state sizes disagree");
  }
  if (t < 1) throw UsageError("adam_step: step index must be >= 1");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError("adam_step: non-finite gradient " + std::to_string(grads[i]) +
                           " at parameter " + std::to_string(i) + " (step " + std::to_string(t) +
                           ")");
    }
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
  state.step = t;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Stratified split: per class, a seeded shuffle then floor(fraction * n)
// frames (at least 1) go to train. Index lists come back in storage order.
inline Split split_indices(const windowing::FrameSet& frames, double fraction, std::uint64_t seed) {
  if (frames.frames.empty()) throw UsageError("split: empty frame set");
  if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("split: fraction must lie in (0, 1)");
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < frames.frames.size(); ++i) {
    by_class[static_cast<std::size_t>(to_index(frames.frames[i].label))].push_back(i);
  }
  std::vector<char> in_train(frames.frames.size(), 0);
  for (int c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    if (idx.empty()) continue;
    if (idx.size() < 2) {
      throw DataError("split: class " + std::string(kClassNames[c]) + " has only " +
                      std::to_string(idx.size()) + " frame");
    }
    Rng rng(combine_seed(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(idx);
    auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = 1;
  }
  Split s;
  for (std::size_t i = 0; i < in_train.size(); ++i) (in_train[i] ? s.train : s.test).push_back(i);
  return s;
}

inline windowing::FrameSet subset(const windowing::FrameSet& fs, std::span<const std::size_t> idx) {
  windowing::FrameSet out;
  out.params = fs.params;
  out.height = fs.height;
  out.recording_ids = fs.recording_ids;
  out.frames.reserve(idx.size());
  for (auto i : idx) out.frames.push_back(fs.frames.at(i));
  return out;
}

inline std::pair<windowing::FrameSet, windowing::FrameSet> split_frames(
    const windowing::FrameSet& frames, double fraction, std::uint64_t seed) {
  const Split s = split_indices(frames, fraction, seed);
  return {subset(frames, s.train), subset(frames, s.test)};
}

struct EpochStats {
  double train_loss = 0;
  double train_accuracy = 0;
  double val_loss = 0;
  double val_accuracy = 0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  eval::ConfusionMatrix test_confusion;
  double test_accuracy = 0;
  double test_f1_macro = 0;
  double test_loss = 0;
  double train_accuracy = 0;  // eval mode, after the final epoch
  std::size_t train_frames = 0;
  std::size_t test_frames = 0;
  double seconds = 0;  // wall clock, not part of the deterministic payload
  std::uint64_t seed = 0;

  // Every field except the wall-clock time.
  [[nodiscard]] bool same_results(const TrainReport& o) const {
    return epochs == o.epochs && test_confusion == o.test_confusion &&
           test_accuracy == o.test_accuracy && test_f1_macro == o.test_f1_macro &&
           test_loss == o.test_loss && train_accuracy == o.train_accuracy &&
           train_frames == o.train_frames && test_frames == o.test_frames && seed == o.seed;
  }
};

inline ClassId argmax_class(const nn::Vector& probs) {
  Eigen::Index best;
  probs.maxCoeff(&best);
  return static_cast<ClassId>(best);
}

struct EvalResult {
  double loss = 0;
  eval::ConfusionMatrix confusion;
};

inline EvalResult evaluate(const nn::Network& net, const windowing::FrameSet& frames,
                           std::span<const std::size_t> indices) {
  EvalResult r;
  const auto& spec = net.spec();
  for (auto i : indices) {
    const auto& f = frames.frames[i];
    const auto probs =
        net.forward(nn::frame_tensor(f.data, spec.input_height, spec.window), nn::Mode::eval);
    r.loss += cross_entropy(std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())),
                            f.label);
    r.confusion.add(f.label, argmax_class(probs));
  }
  if (!indices.empty()) r.loss /= static_cast<double>(indices.size());
  if (!std::isfinite(r.loss)) throw NumericalError("evaluation loss is not finite");
  return r;
}

// Trains `net` in place on the train indices; validation curve and final
// metrics come from the test indices.
inline TrainReport fit(nn::Network& net, const windowing::FrameSet& frames, const Split& split,
                       const TrainConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const auto& spec = net.spec();
  TrainReport report;
  report.seed = cfg.seed;
  report.train_frames = split.train.size();
  report.test_frames = split.test.size();

  Rng rng(combine_seed(cfg.seed, 0x747261696eULL));
  AdamState adam(net.num_params());
  nn::Buffer grad(net.num_params());
  std::vector<std::size_t> order = split.train;
  nn::ForwardCache cache;
  std::int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = begin; b < end; ++b) {
        const auto& f = frames.frames[order[b]];
        const auto probs = net.forward(nn::frame_tensor(f.data, spec.input_height, spec.window),
                                       nn::Mode::train, &rng, &cache);
        const double loss = net.backward(cache, f.label, grad);
        if (!std::isfinite(loss)) {
          throw NumericalError("training loss became non-finite at epoch " +
                               std::to_string(epoch + 1));
        }
        loss_sum += loss;
        if (argmax_class(probs) == f.label) ++correct;
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (double& g : grad) g *= inv;
      adam_step(net.params(), grad, adam, ++step, cfg);
    }
    EpochStats st;
    st.train_loss = loss_sum / static_cast<double>(order.size());
    st.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    const EvalResult val = evaluate(net, frames, split.test);
    st.val_loss = val.loss;
    st.val_accuracy = eval::accuracy(val.confusion);
    report.epochs.push_back(st);
    if (epoch + 1 == cfg.epochs) {
      report.test_confusion = val.confusion;
      report.test_loss = val.loss;
    }
  }
  report.test_accuracy = eval::accuracy(report.test_confusion);
  report.test_f1_macro = eval::f1_macro(report.test_confusion);
  report.train_accuracy = eval::accuracy(evaluate(net, frames, split.train).confusion);
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

inline std::uint64_t init_seed(std::uint64_t seed) { return combine_seed(seed, 0x696e6974ULL); }

// Split, build, train, evaluate. Everything derives from cfg.seed.
inline std::pair<nn::Network, TrainReport> train(const windowing::FrameSet& frames,
                                                 const nn::NetworkSpec& spec,
                                                 const TrainConfig& cfg) {
  cfg.validate();
  spec.validate();
  if (frames.height != spec.input_height || frames.params.window_len != spec.window) {
    throw ShapeError("train: frames are " + std::to_string(frames.height) + "x" +
                     std::to_string(frames.params.window_len) + ", network expects " +
                     std::to_string(spec.input_height) + "x" + std::to_string(spec.window));
  }
  std::array<bool, kNumClasses> present{};
  for (const auto& f : frames.frames) present[static_cast<std::size_t>(to_index(f.label))] = true;
  if (std::count(present.begin(), present.end(), true) < 2) {
    throw DataError("train: need frames from at least two classes");
  }
  const Split split = split_indices(frames, cfg.train_fraction, cfg.seed);
  nn::Network net = nn::build_network(spec, init_seed(cfg.seed));
  TrainReport report = fit(net, frames, split, cfg);
  return {std::move(net), std::move(report)};
}

inline std::pair<nn::Network, TrainReport> train(const windowing::FrameSet& frames, int window,
                                                 int kernel, const TrainConfig& cfg) {
  return train(frames, nn::full_spec(window, kernel), cfg);
}

}  // namespace emgcnn::training
