#pragma once

// IIR filter design (notch, Butterworth band-pass), zero-phase application and
// class-wise z-score normalization.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "emgcnn/recording.hpp"

namespace emgcnn::dsp {

// Second-order section, a0 normalized to 1:
//   H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;

  [[nodiscard]] std::complex<double> response(double omega) const {
    const std::complex<double> z1 = std::polar(1.0, -omega);
    const std::complex<double> z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
  }

  // Poles of z^2 + a1 z + a2 strictly inside the unit circle (stability triangle).
  [[nodiscard]] bool is_stable() const { return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2; }

  [[nodiscard]] bool is_finite() const {
    return std::isfinite(b0) && std::isfinite(b1) && std::isfinite(b2) && std::isfinite(a1) &&
           std::isfinite(a2);
  }
};

struct BiquadCascade {
  std::vector<Biquad> sections;

  [[nodiscard]] int order() const { return 2 * static_cast<int>(sections.size()); }

  [[nodiscard]] std::complex<double> response(double freq_hz, double fs) const {
    const double omega = 2.0 * std::numbers::pi * freq_hz / fs;
    std::complex<double> h = 1.0;
    for (const auto& s : sections) h *= s.response(omega);
    return h;
  }

  [[nodiscard]] double magnitude_db(double freq_hz, double fs) const {
    return 20.0 * std::log10(std::abs(response(freq_hz, fs)));
  }

  [[nodiscard]] bool is_stable() const {
    return std::all_of(sections.begin(), sections.end(),
                       [](const Biquad& s) { return s.is_finite() && s.is_stable(); });
  }
};

namespace detail {

inline void require_stable(const BiquadCascade& c, const char* what) {
  if (!c.is_stable()) throw NumericalError(std::string(what) + ": designed filter is unstable");
}

}  // namespace detail

// Standard bi-quad notch (null exactly at f0, unity gain at DC and Nyquist).
inline BiquadCascade design_notch(double f0, double fs, double q = 30.0) {
  if (!(fs > 0.0) || !(f0 > 0.0) || !(f0 < fs / 2.0)) {
    throw UsageError("notch frequency " + std::to_string(f0) + " Hz outside (0, fs/2) for fs=" +
                     std::to_string(fs));
  }
  if (!(q > 0.0)) throw UsageError("notch quality factor must be > 0");
  const double w0 = 2.0 * std::numbers::pi * f0 / fs;
  const double cw = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  BiquadCascade c;
  c.sections.push_back({1.0 / a0, -2.0 * cw / a0, 1.0 / a0, -2.0 * cw / a0, (1.0 - alpha) / a0});
  detail::require_stable(c, "design_notch");
  return c;
}

// Butterworth band-pass of prototype order `order` (2*order poles in total,
// `order` bi-quads), bilinear transform with pre-warped band edges. The gain is
// normalized to 1 at the (warped) geometric centre frequency.
inline BiquadCascade design_bandpass(double lo, double hi, double fs, int order = 4) {
  if (!(fs > 0.0) || !(lo > 0.0) || !(lo < hi) || !(hi < fs / 2.0)) {
    throw UsageError("band-pass edges (" + std::to_string(lo) + ", " + std::to_string(hi) +
                     ") Hz invalid for fs=" + std::to_string(fs) + " (need 0 < lo < hi < fs/2)");
  }
  if (order < 1) throw UsageError("band-pass order must be >= 1");
  using cd = std::complex<double>;
  const double two_fs = 2.0 * fs;
  const double w_lo = two_fs * std::tan(std::numbers::pi * lo / fs);
  const double w_hi = two_fs * std::tan(std::numbers::pi * hi / fs);
  const double w0 = std::sqrt(w_lo * w_hi);
  const double bw = w_hi - w_lo;

  std::vector<cd> poles;
  poles.reserve(2 * static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) {
    const cd p = std::polar(1.0, std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order));
    const cd half = p * bw / 2.0;
    const cd root = std::sqrt(half * half - w0 * w0);
    for (const cd s : {half + root, half - root}) poles.push_back((two_fs + s) / (two_fs - s));
  }

  // Pair each upper-half-plane pole with its conjugate; real poles pair up.
  const double eps = 1e-12;
  std::vector<double> real_poles;
  std::vector<std::pair<double, double>> denominators;  // (a1, a2)
  for (const cd& z : poles) {
    if (z.imag() > eps) {
      denominators.emplace_back(-2.0 * z.real(), std::norm(z));
    } else if (std::abs(z.imag()) <= eps) {
      real_poles.push_back(z.real());
    }
  }
  std::sort(real_poles.begin(), real_poles.end());
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
    const double r1 = real_poles[i], r2 = real_poles[i + 1];
    denominators.emplace_back(-(r1 + r2), r1 * r2);
  }
  if (static_cast<int>(denominators.size()) != order) {
    throw NumericalError("design_bandpass: pole pairing failed");
  }

  // The low-frequency half of the sections takes the zeros at DC, the
  // high-frequency half the zeros at Nyquist, and a middle section (odd order)
  // one of each. Each section is scaled to unit gain at the centre frequency.
  // Keeping every section's gain near one in the pass band keeps round-off in
  // the cascade at the level of a single section.
  auto pole_angle = [](const std::pair<double, double>& d) {
    const cd disc = std::sqrt(cd(d.first * d.first - 4.0 * d.second));
    return (std::abs(std::arg((-d.first + disc) / 2.0)) +
            std::abs(std::arg((-d.first - disc) / 2.0))) / 2.0;
  };
  std::sort(denominators.begin(), denominators.end(),
            [&](const auto& x, const auto& y) { return pole_angle(x) < pole_angle(y); });
  const double f_center = fs / std::numbers::pi * std::atan(w0 / two_fs);
  const double omega_center = 2.0 * std::numbers::pi * f_center / fs;
  const int half = order / 2;
  BiquadCascade c;
  for (int i = 0; i < order; ++i) {
    const auto [a1, a2] = denominators[static_cast<std::size_t>(i)];
    Biquad s = i < half                 ? Biquad{1.0, -2.0, 1.0, a1, a2}
               : i >= order - half      ? Biquad{1.0, 2.0, 1.0, a1, a2}
                                        : Biquad{1.0, 0.0, -1.0, a1, a2};
    const double g = 1.0 / std::abs(s.response(omega_center));
    s.b0 *= g;
    s.b1 *= g;
    s.b2 *= g;
    c.sections.push_back(s);
  }
  detail::require_stable(c, "design_bandpass");
  return c;
}

// Causal filtering, transposed direct form II, zero initial state, in place.
inline void filter_causal(const BiquadCascade& cascade, std::span<double> x) {
  for (const auto& s : cascade.sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

// Zero-phase filtering: forward pass, reverse, second pass, reverse.
inline std::vector<double> filter_forward_backward(const BiquadCascade& cascade,
                                                   std::span<const double> signal) {
  if (signal.size() <= 3 * static_cast<std::size_t>(cascade.order())) {
    throw UsageError("signal of length " + std::to_string(signal.size()) +
                     " too short for zero-phase filtering (need > " +
                     std::to_string(3 * cascade.order()) + ")");
  }
  std::vector<double> y(signal.begin(), signal.end());
  filter_causal(cascade, y);
  std::reverse(y.begin(), y.end());
  filter_causal(cascade, y);
  std::reverse(y.begin(), y.end());
  return y;
}

// Zero-phase filtering of every channel of a recording.
inline void filter_recording(const BiquadCascade& cascade, EmgRecording& rec) {
  std::vector<double> row(static_cast<std::size_t>(rec.num_samples()));
  for (Eigen::Index ch = 0; ch < rec.num_channels(); ++ch) {
    for (Eigen::Index t = 0; t < rec.num_samples(); ++t) row[static_cast<std::size_t>(t)] = rec.samples(ch, t);
    const auto y = filter_forward_backward(cascade, row);
    for (Eigen::Index t = 0; t < rec.num_samples(); ++t) rec.samples(ch, t) = y[static_cast<std::size_t>(t)];
  }
}

// Groups whose population standard deviation falls below this are zeroed.
inline constexpr double kSigmaGuard = 1e-12;

// Z-score per (class, channel): each channel's samples of one class are pooled
// and shifted/scaled to zero mean and unit population standard deviation.
// Statistics cover the whole recording, test portions included.
inline EmgRecording zscore_classwise(const EmgRecording& recording) {
  EmgRecording out = recording;
  const Eigen::Index k = recording.num_channels();
  const Eigen::Index n = recording.num_samples();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, kNumClasses);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(kNumClasses);
  for (Eigen::Index t = 0; t < n; ++t) {
    const int c = to_index(recording.labels[static_cast<std::size_t>(t)]);
    sum.col(c) += recording.samples.col(t);
    count(c) += 1.0;
  }
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(k, kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) {
    if (count(c) > 0) mean.col(c) = sum.col(c) / count(c);
  }
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(k, kNumClasses);
  for (Eigen::Index t = 0; t < n; ++t) {
    const int c = to_index(recording.labels[static_cast<std::size_t>(t)]);
    sq.col(c) += (recording.samples.col(t) - mean.col(c)).cwiseAbs2();
  }
  Eigen::MatrixXd inv_sigma = Eigen::MatrixXd::Zero(k, kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) {
    if (count(c) == 0) continue;
    for (Eigen::Index ch = 0; ch < k; ++ch) {
      const double sigma = std::sqrt(sq(ch, c) / count(c));
      inv_sigma(ch, c) = sigma < kSigmaGuard ? 0.0 : 1.0 / sigma;
    }
  }
  for (Eigen::Index t = 0; t < n; ++t) {
    const int c = to_index(recording.labels[static_cast<std::size_t>(t)]);
    out.samples.col(t) =
        (recording.samples.col(t) - mean.col(c)).cwiseProduct(inv_sigma.col(c));
  }
  return out;
}

struct PreprocessOptions {
  double notch_hz = 50.0;
  double notch_q = 30.0;
  double band_lo_hz = 10.0;
  double band_hi_hz = 500.0;
  int band_order = 4;
};

// Upper band edge actually used at a given rate: the requested edge when it is
// below Nyquist, otherwise 0.45 * fs (e.g. 230.4 Hz for 512 Hz recordings).
inline double effective_band_hi(double requested_hi, double fs) {
  return requested_hi < fs / 2.0 ? requested_hi : 0.45 * fs;
}

// notch -> band-pass -> class-wise z-score.
inline EmgRecording preprocess(const EmgRecording& recording, const PreprocessOptions& opt = {}) {
  const double fs = recording.sample_rate;
  EmgRecording r = recording;
  filter_recording(design_notch(opt.notch_hz, fs, opt.notch_q), r);
  filter_recording(
      design_bandpass(opt.band_lo_hz, effective_band_hi(opt.band_hi_hz, fs), fs, opt.band_order),
      r);
  return zscore_classwise(r);
}

}  // namespace emgcnn::dsp
