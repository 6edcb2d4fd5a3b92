#pragma once

// On-disk dataset format:
//   <dir>/manifest.json    version, sample_rate_hz, num_channels, class_names,
//                          recordings[{subject_id, session_id, num_samples,
//                                      samples_file, labels_file}]
//   <samples_file>         little-endian float32, sample-major interleaved
//                          (time outer, channel inner), num_samples * K values
//   <labels_file>          one uint8 class id per sample
//
// Samples are held as float64 in memory and stored as float32, so a round
// trip is bit-exact for any recording whose values are float32-representable
// (everything produced by synth or read back from disk).

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "emgcnn/binary_io.hpp"
#include "emgcnn/recording.hpp"

namespace emgcnn::dataio {

inline constexpr int kDatasetFormatVersion = 1;

struct ManifestEntry {
  std::string subject_id;
  std::string session_id;
  std::size_t num_samples = 0;
  std::string samples_file;
  std::string labels_file;
};

struct DatasetManifest {
  int version = kDatasetFormatVersion;
  double sample_rate_hz = 1024.0;
  int num_channels = 32;
  std::vector<ManifestEntry> recordings;
};

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw IoError("missing file " + path.string());
  const auto bytes = detail::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kDatasetFormatVersion) {
      throw VersionError("unknown dataset format version " + std::to_string(m.version));
    }
    m.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    m.num_channels = j.at("num_channels").get<int>();
    const auto names = j.at("class_names").get<std::vector<std::string>>();
    if (names.size() != kClassNames.size()) throw FormatError("manifest class_names has wrong size");
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] != kClassNames[i]) {
        throw FormatError("manifest class_names[" + std::to_string(i) + "] is '" + names[i] +
                          "', expected '" + std::string(kClassNames[i]) + "'");
      }
    }
    for (const auto& r : j.at("recordings")) {
      m.recordings.push_back({r.at("subject_id").get<std::string>(),
                              r.at("session_id").get<std::string>(),
                              r.at("num_samples").get<std::size_t>(),
                              r.at("samples_file").get<std::string>(),
                              r.at("labels_file").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (!(m.sample_rate_hz > 0.0) || m.num_channels < 1) {
    throw FormatError("manifest " + path.string() + ": invalid sample rate or channel count");
  }
  return m;
}

inline EmgRecording load_recording(const std::filesystem::path& dir, const DatasetManifest& m,
                                   std::size_t index) {
  const ManifestEntry& e = m.recordings.at(index);
  const auto samples_path = dir / e.samples_file;
  const auto labels_path = dir / e.labels_file;
  if (!std::filesystem::exists(samples_path)) throw IoError("missing file " + samples_path.string());
  if (!std::filesystem::exists(labels_path)) throw IoError("missing file " + labels_path.string());

  const auto k = static_cast<std::size_t>(m.num_channels);
  const auto sample_bytes = detail::read_file(samples_path);
  if (sample_bytes.size() != e.num_samples * k * 4) {
    throw LengthMismatchError(samples_path.string() + ": expected " +
                              std::to_string(e.num_samples * k * 4) + " bytes, found " +
                              std::to_string(sample_bytes.size()));
  }
  const auto label_bytes = detail::read_file(labels_path);
  if (label_bytes.size() != e.num_samples) {
    throw LengthMismatchError(labels_path.string() + ": expected " +
                              std::to_string(e.num_samples) + " labels, found " +
                              std::to_string(label_bytes.size()));
  }

  EmgRecording rec;
  rec.subject_id = e.subject_id;
  rec.session_id = e.session_id;
  rec.sample_rate = m.sample_rate_hz;
  rec.samples.resize(m.num_channels, static_cast<Eigen::Index>(e.num_samples));
  double* dst = rec.samples.data();
  for (std::size_t i = 0; i < e.num_samples * k; ++i) dst[i] = detail::read_f32(&sample_bytes[4 * i]);
  rec.labels.resize(e.num_samples);
  for (std::size_t i = 0; i < e.num_samples; ++i) {
    const auto id = static_cast<unsigned char>(label_bytes[i]);
    if (!is_valid_class(id)) {
      throw FormatError(labels_path.string() + ": invalid class id " + std::to_string(id) +
                        " at sample " + std::to_string(i));
    }
    rec.labels[i] = static_cast<ClassId>(id);
  }
  return rec;
}

inline std::vector<EmgRecording> load_dataset(const std::filesystem::path& dir) {
  const auto m = read_manifest(dir);
  std::vector<EmgRecording> out;
  out.reserve(m.recordings.size());
  for (std::size_t i = 0; i < m.recordings.size(); ++i) out.push_back(load_recording(dir, m, i));
  return out;
}

// Incremental writer: recordings are written as they are added, the manifest
// on finish(). Lets large generated datasets stream to disk.
class DatasetWriter {
 public:
  explicit DatasetWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create directory " + dir_.string() + ": " + ec.message());
  }

  void add(const EmgRecording& rec) {
    rec.validate();
    if (manifest_.recordings.empty()) {
      manifest_.sample_rate_hz = rec.sample_rate;
      manifest_.num_channels = static_cast<int>(rec.num_channels());
    } else if (rec.sample_rate != manifest_.sample_rate_hz ||
               rec.num_channels() != manifest_.num_channels) {
      throw FormatError("recording " + rec.id() +
                        " does not match the dataset's sample rate / channel count");
    }
    char stem[32];
    std::snprintf(stem, sizeof stem, "rec%04zu", manifest_.recordings.size());
    ManifestEntry e{rec.subject_id, rec.session_id, static_cast<std::size_t>(rec.num_samples()),
                    std::string(stem) + ".samples.f32", std::string(stem) + ".labels.u8"};

    std::vector<char> bytes;
    bytes.reserve(static_cast<std::size_t>(rec.samples.size()) * 4);
    detail::append_f32(bytes, std::span<const double>(rec.samples.data(),
                                                      static_cast<std::size_t>(rec.samples.size())));
    detail::write_file(dir_ / e.samples_file, bytes);

    std::vector<char> labels(rec.labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<char>(rec.labels[i]);
    detail::write_file(dir_ / e.labels_file, labels);

    manifest_.recordings.push_back(std::move(e));
  }

  void finish() {
    nlohmann::json j;
    j["version"] = manifest_.version;
    j["sample_rate_hz"] = manifest_.sample_rate_hz;
    j["num_channels"] = manifest_.num_channels;
    j["class_names"] = std::vector<std::string>(kClassNames.begin(), kClassNames.end());
    j["recordings"] = nlohmann::json::array();
    for (const auto& e : manifest_.recordings) {
      j["recordings"].push_back({{"subject_id", e.subject_id},
                                 {"session_id", e.session_id},
                                 {"num_samples", e.num_samples},
                                 {"samples_file", e.samples_file},
                                 {"labels_file", e.labels_file}});
    }
    detail::write_text(dir_ / "manifest.json", j.dump(2) + "\n");
  }

 private:
  std::filesystem::path dir_;
  DatasetManifest manifest_;
};

inline void save_dataset(const std::vector<EmgRecording>& recordings,
                         const std::filesystem::path& dir) {
  DatasetWriter writer(dir);
  for (const auto& r : recordings) writer.add(r);
  writer.finish();
}

}  // namespace emgcnn::dataio
