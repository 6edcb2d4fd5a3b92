#pragma once

// Frame dump layout:
//   8 bytes      magic "EMGFRM1\0"
//   header line  compact JSON terminated by '\n': format version, window,
//                overlap fraction, height K, frame count, recording ids
//   per frame    uint8 label, uint32 recording index, uint64 start sample,
//                then K*T little-endian float32 values, time outer and
//                channel inner (the dataset's sample-major convention)

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "emgcnn/binary_io.hpp"
#include "emgcnn/windowing.hpp"

namespace emgcnn::dataio {

inline constexpr std::array<char, 8> kFrameMagic = {'E', 'M', 'G', 'F', 'R', 'M', '1', '\0'};
inline constexpr int kFrameFormatVersion = 1;

inline std::vector<char> encode_frames(const windowing::FrameSet& fs) {
  const nlohmann::json header = {{"version", kFrameFormatVersion},
                                 {"window", fs.params.window_len},
                                 {"overlap_frac", fs.params.overlap_fraction},
                                 {"height", fs.height},
                                 {"num_frames", fs.frames.size()},
                                 {"recording_ids", fs.recording_ids}};
  std::vector<char> out(kFrameMagic.begin(), kFrameMagic.end());
  const std::string line = header.dump() + "\n";
  out.insert(out.end(), line.begin(), line.end());
  const auto k = static_cast<std::size_t>(fs.height);
  const auto t_len = static_cast<std::size_t>(fs.params.window_len);
  std::vector<double> interleaved(k * t_len);
  for (const auto& f : fs.frames) {
    if (f.data.size() != k * t_len) throw ShapeError("encode_frames: frame has wrong size");
    out.push_back(static_cast<char>(to_index(f.label)));
    detail::append_u32(out, f.recording);
    detail::append_u64(out, static_cast<std::uint64_t>(f.start));
    for (std::size_t ch = 0; ch < k; ++ch) {
      for (std::size_t t = 0; t < t_len; ++t) interleaved[t * k + ch] = f.data[ch * t_len + t];
    }
    detail::append_f32(out, interleaved);
  }
  return out;
}

inline windowing::FrameSet decode_frames(const std::vector<char>& bytes, const std::string& what) {
  if (bytes.size() < kFrameMagic.size() ||
      !std::equal(kFrameMagic.begin(), kFrameMagic.end(), bytes.begin())) {
    throw FormatError(what + ": not a frame dump (bad magic)");
  }
  const auto header_begin = bytes.begin() + static_cast<std::ptrdiff_t>(kFrameMagic.size());
  const auto newline = std::find(header_begin, bytes.end(), '\n');
  if (newline == bytes.end()) throw TruncatedError(what + ": header line is not terminated");
  windowing::FrameSet fs;
  std::size_t count = 0;
  try {
    const auto header = nlohmann::json::parse(header_begin, newline);
    const int version = header.at("version").get<int>();
    if (version != kFrameFormatVersion) {
      throw VersionError(what + ": unknown frame format version " + std::to_string(version));
    }
    fs.params.window_len = header.at("window").get<int>();
    fs.params.overlap_fraction = header.at("overlap_frac").get<double>();
    fs.height = header.at("height").get<int>();
    count = header.at("num_frames").get<std::size_t>();
    fs.recording_ids = header.at("recording_ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": malformed header: " + e.what());
  }
  try {
    fs.params.validate();
  } catch (const UsageError& e) {
    throw FormatError(what + ": " + e.what());
  }
  if (fs.height < 1) throw FormatError(what + ": height must be >= 1");
  const auto k = static_cast<std::size_t>(fs.height);
  const auto t_len = static_cast<std::size_t>(fs.params.window_len);
  const std::size_t record = 1 + 4 + 8 + 4 * k * t_len;
  const auto payload = static_cast<std::size_t>(bytes.end() - newline - 1);
  if (payload < record * count) {
    throw TruncatedError(what + ": payload shorter than " + std::to_string(count) + " frames");
  }
  if (payload > record * count) throw FormatError(what + ": trailing bytes after the frames");
  const char* src = &*(newline + 1);
  fs.frames.resize(count);
  for (auto& f : fs.frames) {
    const auto label = static_cast<unsigned char>(*src);
    if (!is_valid_class(label)) throw FormatError(what + ": invalid class id " + std::to_string(label));
    f.label = static_cast<ClassId>(label);
    f.recording = detail::read_u32(src + 1);
    if (f.recording >= fs.recording_ids.size()) {
      throw FormatError(what + ": frame references unknown recording");
    }
    f.start = static_cast<std::int64_t>(detail::read_u64(src + 5));
    src += 13;
    f.data.resize(k * t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t ch = 0; ch < k; ++ch) {
        f.data[ch * t_len + t] = detail::read_f32(src);
        src += 4;
      }
    }
  }
  return fs;
}

inline void save_frames(const windowing::FrameSet& fs, const std::filesystem::path& path) {
  detail::write_file(path, encode_frames(fs));
}

inline windowing::FrameSet load_frames(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing file " + path.string());
  return decode_frames(detail::read_file(path), path.string());
}

}  // namespace emgcnn::dataio
