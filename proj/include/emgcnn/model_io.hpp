#pragma once

// Model file layout:
//   8 bytes      magic "EMGCNN1\0"
//   header line  compact JSON terminated by '\n': format version, network
//                spec fields, parameter count and the (name, shape) of every
//                parameter tensor
//   payload      parameters as little-endian float32 in layout order:
//                per conv block weights [out][in][kh][kw] then bias [out],
//                then dense layers weights [out][in] then bias [out]
//
// The file size is exactly 8 + header bytes + 4 * parameter count.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "emgcnn/binary_io.hpp"
#include "emgcnn/nn/network.hpp"

namespace emgcnn::dataio {

inline constexpr std::array<char, 8> kModelMagic = {'E', 'M', 'G', 'C', 'N', 'N', '1', '\0'};
inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json spec_to_json(const nn::NetworkSpec& s) {
  return {{"input_height", s.input_height}, {"window", s.window},
          {"kernel", s.kernel},             {"conv_channels", s.conv_channels},
          {"pool_after", s.pool_after},     {"dropout", s.dropout},
          {"dense_units", s.dense_units},   {"num_classes", s.num_classes}};
}

inline nn::NetworkSpec spec_from_json(const nlohmann::json& j) {
  nn::NetworkSpec s;
  s.input_height = j.at("input_height").get<int>();
  s.window = j.at("window").get<int>();
  s.kernel = j.at("kernel").get<int>();
  s.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  s.pool_after = j.at("pool_after").get<std::vector<bool>>();
  s.dropout = j.at("dropout").get<double>();
  s.dense_units = j.at("dense_units").get<int>();
  s.num_classes = j.at("num_classes").get<int>();
  return s;
}

inline nlohmann::json layers_to_json(const nn::NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& [name, shape] : nn::ParamLayout(spec).describe(spec)) {
    layers.push_back({{"name", name}, {"shape", shape}});
  }
  return layers;
}

inline std::vector<char> encode_model(const nn::Network& net) {
  const nlohmann::json header = {{"version", kModelFormatVersion},
                                 {"spec", spec_to_json(net.spec())},
                                 {"param_count", net.num_params()},
                                 {"layers", layers_to_json(net.spec())}};
  std::vector<char> out(kModelMagic.begin(), kModelMagic.end());
  const std::string line = header.dump() + "\n";
  out.insert(out.end(), line.begin(), line.end());
  for (double v : net.params()) {
    if (!std::isfinite(v)) throw NumericalError("save_model: non-finite parameter");
  }
  detail::append_f32(out, net.params());
  return out;
}

inline nn::Network decode_model(const std::vector<char>& bytes, const std::string& what) {
  if (bytes.size() < kModelMagic.size() ||
      !std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin())) {
    throw FormatError(what + ": not a model file (bad magic)");
  }
  const auto header_begin = bytes.begin() + static_cast<std::ptrdiff_t>(kModelMagic.size());
  const auto newline = std::find(header_begin, bytes.end(), '\n');
  if (newline == bytes.end()) throw TruncatedError(what + ": header line is not terminated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_begin, newline);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": malformed header: " + e.what());
  }
  nn::NetworkSpec spec;
  std::size_t declared = 0;
  nlohmann::json layers;
  try {
    const int version = header.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw VersionError(what + ": unknown model format version " + std::to_string(version));
    }
    spec = spec_from_json(header.at("spec"));
    declared = header.at("param_count").get<std::size_t>();
    layers = header.at("layers");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": incomplete header: " + e.what());
  }
  try {
    spec.validate();
  } catch (const UsageError& e) {
    throw ShapeError(what + ": invalid network spec: " + e.what());
  }
  const nn::ParamLayout layout(spec);
  if (layers != layers_to_json(spec) || declared != layout.total) {
    throw ShapeError(what + ": recorded layer shapes (" + std::to_string(declared) +
                     " parameters) disagree with the layer layout, which needs " +
                     std::to_string(layout.total));
  }
  const auto payload = static_cast<std::size_t>(bytes.end() - newline - 1);
  if (payload < 4 * declared) {
    throw TruncatedError(what + ": weight payload has " + std::to_string(payload) +
                         " bytes, expected " + std::to_string(4 * declared));
  }
  if (payload > 4 * declared) {
    throw FormatError(what + ": " + std::to_string(payload - 4 * declared) +
                      " trailing bytes after the weights");
  }
  nn::Network net(spec);
  const char* src = &*(newline + 1);
  for (double& v : net.params()) {
    v = detail::read_f32(src);
    src += 4;
  }
  return net;
}

inline void save_model(const nn::Network& net, const std::filesystem::path& path) {
  detail::write_file(path, encode_model(net));
}

inline nn::Network load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing file " + path.string());
  return decode_model(detail::read_file(path), path.string());
}

}  // namespace emgcnn::dataio
