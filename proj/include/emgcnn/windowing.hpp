#pragma once

// Sliding-window segmentation of recordings into labeled K x T frames.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emgcnn/recording.hpp"

namespace emgcnn::windowing {

struct WindowParams {
  int window_len = 125;         // T, samples
  double overlap_fraction = 0;  // f in [0, 1)

  [[nodiscard]] int overlap() const {
    return static_cast<int>(std::floor(overlap_fraction * window_len));
  }
  [[nodiscard]] int stride() const { return window_len - overlap(); }

  void validate() const {
    if (window_len < 1) throw UsageError("window length must be >= 1");
    if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
      throw UsageError("overlap fraction must lie in [0, 1)");
    }
    if (stride() < 1) throw UsageError("window stride must be >= 1");
  }
};

// Frames emitted by a constant-label run of length R: floor((R - T) / S) + 1,
// or 0 when R < T.
inline std::int64_t frame_count(std::int64_t run_length, const WindowParams& p) {
  p.validate();
  if (run_length < p.window_len) return 0;
  return (run_length - p.window_len) / p.stride() + 1;
}

// One frame; data is K x T row-major (channel rows, time columns), i.e. an
// (H=K, W=T, C=1) tensor in the network's layout.
struct Frame {
  std::vector<double> data;
  ClassId label = ClassId::NM;
  std::uint32_t recording = 0;  // index into FrameSet::recording_ids
  std::int64_t start = 0;
};

struct FrameSet {
  WindowParams params;
  int height = 0;  // K
  std::vector<std::string> recording_ids;
  std::vector<Frame> frames;

  [[nodiscard]] std::size_t size() const { return frames.size(); }
  [[nodiscard]] std::size_t frame_size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(params.window_len);
  }
};

namespace detail {

inline void append_frames(const EmgRecording& rec, std::uint32_t rec_index, const WindowParams& p,
                          std::vector<Frame>& out) {
  const int t_len = p.window_len;
  const Eigen::Index k = rec.num_channels();
  for (const LabelRun& run : label_runs(rec.labels)) {
    const std::int64_t n = frame_count(run.length, p);
    for (std::int64_t i = 0; i < n; ++i) {
      const Eigen::Index start = run.begin + i * p.stride();
      Frame f;
      f.label = run.label;
      f.recording = rec_index;
      f.start = start;
      f.data.resize(static_cast<std::size_t>(k * t_len));
      for (Eigen::Index ch = 0; ch < k; ++ch) {
        for (int t = 0; t < t_len; ++t) {
          f.data[static_cast<std::size_t>(ch * t_len + t)] = rec.samples(ch, start + t);
        }
      }
      out.push_back(std::move(f));
    }
  }
}

}  // namespace detail

// Frames never straddle a label change: each maximal constant-label run is
// windowed independently with starts 0, S, 2S, ... relative to the run.
inline FrameSet segment(const EmgRecording& recording, const WindowParams& params) {
  params.validate();
  FrameSet fs;
  fs.params = params;
  fs.height = static_cast<int>(recording.num_channels());
  fs.recording_ids.push_back(recording.id());
  detail::append_frames(recording, 0, params, fs.frames);
  return fs;
}

// Recording order, then run order, then start index.
inline FrameSet segment_all(std::span<const EmgRecording* const> recordings,
                            const WindowParams& params) {
  params.validate();
  FrameSet fs;
  fs.params = params;
  for (std::size_t i = 0; i < recordings.size(); ++i) {
    const auto& rec = *recordings[i];
    if (i == 0) {
      fs.height = static_cast<int>(rec.num_channels());
    } else if (rec.num_channels() != fs.height) {
      throw ShapeError("segment_all: recordings disagree on channel count");
    }
    fs.recording_ids.push_back(rec.id());
    detail::append_frames(rec, static_cast<std::uint32_t>(i), params, fs.frames);
  }
  return fs;
}

inline FrameSet segment_all(std::span<const EmgRecording> recordings, const WindowParams& params) {
  std::vector<const EmgRecording*> ptrs;
  for (const auto& r : recordings) ptrs.push_back(&r);
  return segment_all(std::span<const EmgRecording* const>(ptrs), params);
}

}  // namespace emgcnn::windowing
