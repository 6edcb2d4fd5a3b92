#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "emgcnn/random.hpp"
#include "emgcnn/recording.hpp"
#include "emgcnn/synth.hpp"

namespace emgcnn::testing {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "emgcnn_" + tag;
    if (info != nullptr) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

// Recording with float32-representable Gaussian samples and the given labels.
inline EmgRecording random_recording(int channels, const std::vector<ClassId>& labels,
                                     std::uint64_t seed, const std::string& subject = "S01",
                                     const std::string& session = "R01") {
  EmgRecording r;
  r.subject_id = subject;
  r.session_id = session;
  r.sample_rate = 1024.0;
  r.samples.resize(channels, static_cast<Eigen::Index>(labels.size()));
  Rng rng(seed);
  for (Eigen::Index t = 0; t < r.samples.cols(); ++t)
    for (Eigen::Index c = 0; c < channels; ++c) r.samples(c, t) = static_cast<float>(rng.normal());
  r.labels = labels;
  return r;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::vector<ClassId> label_track(const std::vector<std::pair<ClassId, int>>& runs) {
  std::vector<ClassId> out;
  for (const auto& [c, n] : runs) out.insert(out.end(), static_cast<std::size_t>(n), c);
  return out;
}

// Very small synthetic dataset: 1 s trials and rests at 512 Hz, one trial per
// active class, so a subject has 4096 samples.
inline synth::SynthConfig tiny_synth_config(std::uint64_t seed = 5, int subjects = 2) {
  synth::SynthConfig c;
  c.seed = seed;
  c.subjects = subjects;
  c.sessions = 1;
  c.trials_per_active_class = 1;
  c.trial_duration = 1.0;
  c.rest_duration = 1.0;
  c.sample_rate = 512.0;
  return c;
}

}  // namespace emgcnn::testing
