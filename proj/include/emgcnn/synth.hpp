#pragma once

// Seeded synthetic multichannel sEMG that follows the acquisition protocol:
// per session, every active class appears `trials_per_active_class` times in
// random order, each trial followed by a rest (NM) period.
//
// Signal model for an active trial of class c:
//   x(t) = M_c w(t) e(t) + n(t)
// M_c is a K x 8 spatial mixing matrix, w(t) eight independent band-limited
// Gaussian carriers, e(t) a trapezoidal envelope and n(t) white sensor noise.
// Each column of M_c is a Gaussian footprint over the electrode index,
// modulated by a class-specific spatial period, so classes differ in their
// local cross-channel correlation (a translation-invariant cue) as well as in
// per-channel power. Rest periods carry sensor noise only.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "emgcnn/dsp.hpp"
#include "emgcnn/random.hpp"
#include "emgcnn/recording.hpp"
#include "emgcnn/windowing.hpp"

namespace emgcnn::synth {

enum class Scale { full, small };

struct SynthConfig {
  std::uint64_t seed = 0;
  int subjects = 4;
  int sessions = 5;
  int trials_per_active_class = 10;
  double trial_duration = 5.0;  // s
  double rest_duration = 5.0;   // s
  double sample_rate = 1024.0;  // Hz
  int channels = 32;
  double snr = 3.0;
  Scale scale = Scale::full;

  // `small` overrides sessions=1, trials=3, rate=512.
  [[nodiscard]] SynthConfig resolved() const {
    SynthConfig c = *this;
    if (scale == Scale::small) {
      c.sessions = 1;
      c.trials_per_active_class = 3;
      c.sample_rate = 512.0;
    }
    return c;
  }

  void validate() const {
    const SynthConfig c = resolved();
    if (c.subjects < 1 || c.sessions < 1 || c.trials_per_active_class < 1 || c.channels < 1) {
      throw UsageError("synth: all counts must be >= 1");
    }
    if (!(c.trial_duration > 0.0) || !(c.rest_duration > 0.0)) {
      throw UsageError("synth: durations must be > 0");
    }
    if (!(c.sample_rate > 0.0) || !(c.snr > 0.0)) {
      throw UsageError("synth: sample rate and SNR must be > 0");
    }
    if (c.trial_samples() < 1 || c.rest_samples() < 1) {
      throw UsageError("synth: durations shorter than one sample");
    }
  }

  [[nodiscard]] Eigen::Index trial_samples() const {
    return static_cast<Eigen::Index>(std::llround(trial_duration * sample_rate));
  }
  [[nodiscard]] Eigen::Index rest_samples() const {
    return static_cast<Eigen::Index>(std::llround(rest_duration * sample_rate));
  }
  [[nodiscard]] Eigen::Index recording_samples() const {
    return static_cast<Eigen::Index>(4 * trials_per_active_class) *
           (trial_samples() + rest_samples());
  }
};

inline constexpr int kSources = 8;
inline constexpr double kRampSeconds = 0.5;
inline constexpr double kCarrierLoHz = 20.0;
inline constexpr double kCarrierHiHz = 450.0;

// Spatial periods (in electrodes) handed out to the four active classes in a
// seed-dependent order; 0 means an unmodulated footprint.
inline constexpr std::array<double, 4> kSpatialPeriods = {0.0, 8.0, 4.5, 3.0};

using MixingSet = std::array<Eigen::MatrixXd, kNumClasses>;  // index 0 (NM) unused

namespace detail {

inline Eigen::MatrixXd footprint_matrix(int channels, double period, Rng& rng) {
  Eigen::MatrixXd m(channels, kSources);
  for (int j = 0; j < kSources; ++j) {
    const double centre = rng.uniform(0.0, channels);
    const double width = rng.uniform(2.0, 5.0);
    const double amp = rng.uniform(0.6, 1.4);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int ch = 0; ch < channels; ++ch) {
      const double d = ch - centre;
      const double mod = period > 0.0 ? std::cos(2.0 * std::numbers::pi * d / period + phase) : 1.0;
      m(ch, j) = amp * std::exp(-d * d / (2.0 * width * width)) * mod;
    }
  }
  return m;
}

}  // namespace detail

// Base class patterns (shared by all subjects) for a seed.
inline MixingSet base_mixing(const SynthConfig& cfg) {
  Rng rng(combine_seed(cfg.seed, hash_string("mixing")));
  std::vector<double> periods(kSpatialPeriods.begin(), kSpatialPeriods.end());
  rng.shuffle(periods);
  MixingSet set;
  set[0] = Eigen::MatrixXd::Zero(cfg.channels, kSources);
  for (int c = 1; c < kNumClasses; ++c) {
    set[static_cast<std::size_t>(c)] =
        detail::footprint_matrix(cfg.channels, periods[static_cast<std::size_t>(c - 1)], rng);
  }
  return set;
}

// Subject-specific perturbation of the base patterns.
inline MixingSet subject_mixing(const SynthConfig& cfg, const MixingSet& base, int subject) {
  Rng rng(combine_seed(cfg.seed, combine_seed(hash_string("subject"), static_cast<std::uint64_t>(subject))));
  MixingSet set = base;
  for (int c = 1; c < kNumClasses; ++c) {
    auto& m = set[static_cast<std::size_t>(c)];
    const double rms = std::sqrt(m.squaredNorm() / static_cast<double>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += 0.2 * rms * rng.normal();
  }
  return set;
}

inline std::string subject_name(int s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%02d", s + 1);
  return buf;
}

inline std::string session_name(int s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "R%02d", s + 1);
  return buf;
}

// One recording; a pure function of (config, subject, session).
inline EmgRecording generate_recording(const SynthConfig& config, int subject, int session) {
  config.validate();
  const SynthConfig cfg = config.resolved();
  const MixingSet mixing = subject_mixing(cfg, base_mixing(cfg), subject);
  Rng rng(combine_seed(cfg.seed, combine_seed(static_cast<std::uint64_t>(subject) + 1,
                                              static_cast<std::uint64_t>(session) + 1)));

  std::vector<ClassId> trials;
  for (int c = 1; c < kNumClasses; ++c)
    for (int r = 0; r < cfg.trials_per_active_class; ++r) trials.push_back(static_cast<ClassId>(c));
  rng.shuffle(trials);

  const Eigen::Index trial_len = cfg.trial_samples();
  const Eigen::Index rest_len = cfg.rest_samples();
  const Eigen::Index total = cfg.recording_samples();
  const int k = cfg.channels;

  EmgRecording rec;
  rec.subject_id = subject_name(subject);
  rec.session_id = session_name(session);
  rec.sample_rate = cfg.sample_rate;
  rec.samples = Eigen::MatrixXd::Zero(k, total);
  rec.labels.assign(static_cast<std::size_t>(total), ClassId::NM);

  // Band-limited carriers, unit RMS.
  const double hi = std::min(kCarrierHiHz, 0.45 * cfg.sample_rate);
  const auto carrier_filter = dsp::design_bandpass(kCarrierLoHz, hi, cfg.sample_rate, 2);
  Eigen::MatrixXd carriers(kSources, total);
  {
    std::vector<double> w(static_cast<std::size_t>(total));
    for (int j = 0; j < kSources; ++j) {
      for (double& v : w) v = rng.normal();
      dsp::filter_causal(carrier_filter, w);
      const double rms = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0) /
                                   static_cast<double>(total));
      for (Eigen::Index t = 0; t < total; ++t) carriers(j, t) = w[static_cast<std::size_t>(t)] / rms;
    }
  }

  const auto ramp = std::max<Eigen::Index>(
      1, std::min<Eigen::Index>(static_cast<Eigen::Index>(std::llround(kRampSeconds * cfg.sample_rate)),
                                trial_len / 2));
  double signal_power = 0.0;
  Eigen::Index active_count = 0;
  Eigen::Index pos = 0;
  for (ClassId c : trials) {
    const auto& m = mixing[static_cast<std::size_t>(to_index(c))];
    for (Eigen::Index i = 0; i < trial_len; ++i) {
      const Eigen::Index t = pos + i;
      const double env =
          std::min({1.0, static_cast<double>(i + 1) / static_cast<double>(ramp),
                    static_cast<double>(trial_len - i) / static_cast<double>(ramp)});
      rec.samples.col(t).noalias() = env * (m * carriers.col(t));
      rec.labels[static_cast<std::size_t>(t)] = c;
      signal_power += rec.samples.col(t).squaredNorm();
    }
    active_count += trial_len;
    pos += trial_len + rest_len;
  }

  // SNR = RMS(signal) / RMS(noise) over active periods.
  const double signal_rms = std::sqrt(signal_power / static_cast<double>(active_count * k));
  const double noise_sigma = signal_rms / cfg.snr;
  for (Eigen::Index i = 0; i < rec.samples.size(); ++i) {
    rec.samples.data()[i] = static_cast<float>(rec.samples.data()[i] + noise_sigma * rng.normal());
  }
  return rec;
}

// All recordings, ordered by (subject, session).
inline std::vector<EmgRecording> generate(const SynthConfig& config) {
  config.validate();
  const SynthConfig cfg = config.resolved();
  std::vector<EmgRecording> out;
  for (int s = 0; s < cfg.subjects; ++s)
    for (int r = 0; r < cfg.sessions; ++r) out.push_back(generate_recording(config, s, r));
  return out;
}

// Balanced accuracy (mean per-class recall) of a nearest-centroid classifier,
// trained on `train_fraction` of each class after a seeded shuffle.
inline double nearest_centroid_accuracy(const std::vector<Eigen::VectorXd>& features,
                                        const std::vector<ClassId>& labels, double train_fraction,
                                        std::uint64_t seed) {
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[static_cast<std::size_t>(to_index(labels[i]))].push_back(i);
  int present = 0;
  for (const auto& v : by_class) present += v.size() >= 2 ? 1 : 0;
  if (present < 2) throw DataError("separability check needs at least two classes");

  const Eigen::Index dim = features.front().size();
  std::array<Eigen::VectorXd, kNumClasses> centroid;
  std::array<std::vector<std::size_t>, kNumClasses> test;
  std::array<bool, kNumClasses> has{};
  for (int c = 0; c < kNumClasses; ++c) {
    auto idx = by_class[static_cast<std::size_t>(c)];
    if (idx.size() < 2) continue;
    Rng rng(combine_seed(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(idx);
    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(idx.size()))), 1,
        idx.size() - 1);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < n_train; ++i) sum += features[idx[i]];
    centroid[static_cast<std::size_t>(c)] = sum / static_cast<double>(n_train);
    has[static_cast<std::size_t>(c)] = true;
    test[static_cast<std::size_t>(c)].assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  double recall_sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (!has[static_cast<std::size_t>(c)]) continue;
    std::size_t hit = 0;
    for (auto i : test[static_cast<std::size_t>(c)]) {
      int best = -1;
      double best_d = 0.0;
      for (int q = 0; q < kNumClasses; ++q) {
        if (!has[static_cast<std::size_t>(q)]) continue;
        const double d = (features[i] - centroid[static_cast<std::size_t>(q)]).squaredNorm();
        if (best < 0 || d < best_d) {
          best = q;
          best_d = d;
        }
      }
      if (best == c) ++hit;
    }
    recall_sum += static_cast<double>(hit) / static_cast<double>(test[static_cast<std::size_t>(c)].size());
  }
  return recall_sum / present;
}

struct WindowFeatures {
  std::vector<Eigen::VectorXd> features;  // per-window channel RMS
  std::vector<ClassId> labels;
};

inline WindowFeatures rms_features(const std::vector<EmgRecording>& recordings, int window = 125) {
  WindowFeatures wf;
  const windowing::WindowParams p{window, 0.0};
  for (const auto& rec : recordings) {
    for (const LabelRun& run : label_runs(rec.labels)) {
      const auto n = windowing::frame_count(run.length, p);
      for (std::int64_t i = 0; i < n; ++i) {
        const Eigen::Index start = run.begin + i * p.stride();
        wf.features.push_back(
            (rec.samples.middleCols(start, window).rowwise().squaredNorm() / window).cwiseSqrt());
        wf.labels.push_back(run.label);
      }
    }
  }
  return wf;
}

// Generator sanity gate: nearest-centroid accuracy on channel-RMS features of
// non-overlapping 125-sample windows, 70/30 split.
inline double separability_check(const std::vector<EmgRecording>& recordings) {
  const WindowFeatures wf = rms_features(recordings);
  if (wf.features.empty()) throw DataError("separability check: no complete windows");
  return nearest_centroid_accuracy(wf.features, wf.labels, 0.7, 0);
}

}  // namespace emgcnn::synth
