#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "emgcnn/core.hpp"

namespace emgcnn {

// One subject/session multichannel recording with a per-sample class track.
// samples is K x L, column-major, so each column holds the K channel values of
// one time step (the same interleaving the samples file uses).
struct EmgRecording {
  std::string subject_id;
  std::string session_id;
  double sample_rate = 1024.0;
  Eigen::MatrixXd samples;
  std::vector<ClassId> labels;

  [[nodiscard]] Eigen::Index num_channels() const { return samples.rows(); }
  [[nodiscard]] Eigen::Index num_samples() const { return samples.cols(); }

  [[nodiscard]] std::string id() const { return subject_id + "/" + session_id; }

  // Throws ShapeError / FormatError when an invariant is broken.
  void validate() const {
    if (!(sample_rate > 0.0)) throw FormatError("recording " + id() + ": sample_rate must be > 0");
    if (samples.rows() < 1) throw ShapeError("recording " + id() + ": needs at least one channel");
    if (static_cast<Eigen::Index>(labels.size()) != samples.cols()) {
      throw LengthMismatchError("recording " + id() + ": " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(samples.cols()) + " samples");
    }
    for (ClassId c : labels) {
      if (!is_valid_class(to_index(c))) {
        throw FormatError("recording " + id() + ": invalid class id " +
                          std::to_string(to_index(c)));
      }
    }
  }

  friend bool operator==(const EmgRecording& a, const EmgRecording& b) {
    return a.subject_id == b.subject_id && a.session_id == b.session_id &&
           a.sample_rate == b.sample_rate && a.samples.rows() == b.samples.rows() &&
           a.samples.cols() == b.samples.cols() && a.samples == b.samples &&
           a.labels == b.labels;
  }
};

// A maximal run of constant label: [begin, begin + length).
struct LabelRun {
  ClassId label;
  Eigen::Index begin;
  Eigen::Index length;
};

inline std::vector<LabelRun> label_runs(const std::vector<ClassId>& labels) {
  std::vector<LabelRun> runs;
  const auto n = static_cast<Eigen::Index>(labels.size());
  Eigen::Index start = 0;
  for (Eigen::Index i = 1; i <= n; ++i) {
    if (i == n || labels[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(start)]) {
      runs.push_back({labels[static_cast<std::size_t>(start)], start, i - start});
      start = i;
    }
  }
  return runs;
}

}  // namespace emgcnn
