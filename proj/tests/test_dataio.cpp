#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <array>
#include <cstring>
#include <fstream>

#include "emgcnn/dataio.hpp"
#include "emgcnn/frame_io.hpp"
#include "emgcnn/model_io.hpp"
#include "test_support.hpp"

using namespace emgcnn;
using emgcnn::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::vector<ClassId> mixed_labels(int n) {
  std::vector<ClassId> l(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) l[static_cast<std::size_t>(i)] = static_cast<ClassId>((i / 100) % 5);
  return l;
}

void write_manifest(const fs::path& dir, const nlohmann::json& j) {
  fs::create_directories(dir);
  std::ofstream(dir / "manifest.json") << j.dump();
}

nlohmann::json manifest_json(std::size_t num_samples) {
  return {{"version", 1},
          {"sample_rate_hz", 1024.0},
          {"num_channels", 32},
          {"class_names", {"NM", "WS", "WP", "HO", "HC"}},
          {"recordings",
           {{{"subject_id", "S01"},
             {"session_id", "R01"},
             {"num_samples", num_samples},
             {"samples_file", "a.f32"},
             {"labels_file", "a.u8"}}}}};
}

void write_bytes(const fs::path& p, std::size_t n, char fill = 0) {
  std::ofstream out(p, std::ios::binary);
  const std::string s(n, fill);
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

TEST(Dataset, EmptyManifestLoadsAsEmptyList) {
  TempDir dir("ds");
  auto j = manifest_json(0);
  j["recordings"] = nlohmann::json::array();
  write_manifest(dir.path(), j);
  EXPECT_TRUE(dataio::load_dataset(dir.path()).empty());
}

TEST(Dataset, ByteCountArithmeticFor5120By32) {
  TempDir dir("ds");
  write_manifest(dir.path(), manifest_json(5120));
  write_bytes(dir / "a.f32", 5120 * 32 * 4);
  write_bytes(dir / "a.u8", 5120);
  const auto recs = dataio::load_dataset(dir.path());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].num_samples(), 5120);
  EXPECT_EQ(recs[0].num_channels(), 32);
}

TEST(Dataset, SamplesFileShortByFourBytesIsALengthMismatch) {
  TempDir dir("ds");
  write_manifest(dir.path(), manifest_json(5120));
  write_bytes(dir / "a.f32", 5120 * 32 * 4 - 4);
  write_bytes(dir / "a.u8", 5120);
  EXPECT_THROW(dataio::load_dataset(dir.path()), LengthMismatchError);
}

TEST(Dataset, LabelsFileLengthMismatch) {
  TempDir dir("ds");
  write_manifest(dir.path(), manifest_json(100));
  write_bytes(dir / "a.f32", 100 * 32 * 4);
  write_bytes(dir / "a.u8", 99);
  EXPECT_THROW(dataio::load_dataset(dir.path()), LengthMismatchError);
}

TEST(Dataset, InvalidLabelByteIsAFormatError) {
  TempDir dir("ds");
  write_manifest(dir.path(), manifest_json(10));
  write_bytes(dir / "a.f32", 10 * 32 * 4);
  write_bytes(dir / "a.u8", 10, 7);
  EXPECT_THROW(dataio::load_dataset(dir.path()), FormatError);
}

TEST(Dataset, MissingFilesAndMalformedManifests) {
  TempDir dir("ds");
  EXPECT_THROW(dataio::load_dataset(dir.path()), IoError);
  write_manifest(dir.path(), manifest_json(10));
  EXPECT_THROW(dataio::load_dataset(dir.path()), IoError);  // payload files absent

  std::ofstream(dir / "manifest.json") << "{ not json";
  EXPECT_THROW(dataio::load_dataset(dir.path()), FormatError);

  auto j = manifest_json(10);
  j.erase("num_channels");
  write_manifest(dir.path(), j);
  EXPECT_THROW(dataio::load_dataset(dir.path()), FormatError);

  j = manifest_json(10);
  j["class_names"] = {"NM", "WS", "WP", "HC", "HO"};
  write_manifest(dir.path(), j);
  EXPECT_THROW(dataio::load_dataset(dir.path()), FormatError);
}

TEST(Dataset, UnknownVersionIsAVersionError) {
  TempDir dir("ds");
  auto j = manifest_json(0);
  j["version"] = 2;
  write_manifest(dir.path(), j);
  EXPECT_THROW(dataio::load_dataset(dir.path()), VersionError);
}

TEST(Dataset, RoundTripIsBitExact) {
  TempDir dir("ds");
  const auto rec = emgcnn::testing::random_recording(32, mixed_labels(777), 9);
  dataio::save_dataset({rec}, dir.path());
  const auto back = dataio::load_dataset(dir.path());
  ASSERT_EQ(back.size(), 1u);
  EXPECT_TRUE(back[0] == rec);
  EXPECT_EQ(std::memcmp(back[0].samples.data(), rec.samples.data(),
                        sizeof(double) * static_cast<std::size_t>(rec.samples.size())),
            0);
}

TEST(Dataset, SamplesFileSizeFor32By1024) {
  TempDir dir("ds");
  const auto rec = emgcnn::testing::random_recording(32, mixed_labels(1024), 1);
  dataio::save_dataset({rec}, dir.path());
  const auto m = dataio::read_manifest(dir.path());
  EXPECT_EQ(fs::file_size(dir / m.recordings[0].samples_file), 131072u);
  EXPECT_EQ(fs::file_size(dir / m.recordings[0].labels_file), 1024u);
}

TEST(Dataset, SamplesAreSampleMajorLittleEndianFloat32) {
  TempDir dir("ds");
  EmgRecording rec;
  rec.subject_id = "S01";
  rec.session_id = "R01";
  rec.samples.resize(2, 2);
  rec.samples << 1.0f, 2.0f, -3.5f, 0.25f;  // (ch0,t0)=1 (ch0,t1)=2 (ch1,t0)=-3.5 (ch1,t1)=.25
  rec.labels = {ClassId::NM, ClassId::HC};
  dataio::save_dataset({rec}, dir.path());
  const auto m = dataio::read_manifest(dir.path());
  const auto bytes = emgcnn::detail::read_file(dir / m.recordings[0].samples_file);
  ASSERT_EQ(bytes.size(), 16u);
  // time outer, channel inner: t0c0, t0c1, t1c0, t1c1
  const std::array<unsigned char, 16> expected = {0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x60, 0xc0,
                                                  0x00, 0x00, 0x00, 0x40, 0x00, 0x00, 0x80, 0x3e};
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(static_cast<unsigned char>(bytes[i]), expected[i]);
  const auto labels = emgcnn::detail::read_file(dir / m.recordings[0].labels_file);
  EXPECT_EQ(labels[1], 4);
}

TEST(Dataset, ManifestListsRecordingsInSaveOrder) {
  TempDir dir("ds");
  std::vector<EmgRecording> recs;
  for (int i = 0; i < 4; ++i) {
    recs.push_back(emgcnn::testing::random_recording(
        4, mixed_labels(50 + i), static_cast<std::uint64_t>(i), "S0" + std::to_string(4 - i)));
  }
  dataio::save_dataset(recs, dir.path());
  const auto m = dataio::read_manifest(dir.path());
  ASSERT_EQ(m.recordings.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(m.recordings[static_cast<std::size_t>(i)].subject_id, "S0" + std::to_string(4 - i));
  }
  const auto back = dataio::load_dataset(dir.path());
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(back[static_cast<std::size_t>(i)] == recs[static_cast<std::size_t>(i)]);
}

TEST(Dataset, FileSizesFollowFromHeaderFields) {
  TempDir dir("ds");
  const auto cfg = emgcnn::testing::tiny_synth_config();
  const auto recs = synth::generate(cfg);
  dataio::save_dataset(recs, dir.path());
  const auto m = dataio::read_manifest(dir.path());
  for (const auto& e : m.recordings) {
    EXPECT_EQ(fs::file_size(dir / e.samples_file), e.num_samples * 4 * static_cast<std::size_t>(m.num_channels));
    EXPECT_EQ(fs::file_size(dir / e.labels_file), e.num_samples);
  }
}

// ---------------------------------------------------------------- models

namespace {

nn::Network toy_network(int window, int kernel, std::uint64_t seed) {
  return nn::build_network(nn::scaled_spec(window, kernel, 8), seed);
}

}  // namespace

TEST(Model, RoundTripIsBitExactAndForwardIdentical) {
  TempDir dir("model");
  const auto net = nn::build_network(125, 3, 11);
  dataio::save_model(net, dir / "m.bin");
  const auto back = dataio::load_model(dir / "m.bin");
  EXPECT_EQ(back.spec(), net.spec());
  ASSERT_EQ(back.num_params(), net.num_params());
  EXPECT_TRUE(std::equal(net.params().begin(), net.params().end(), back.params().begin()));
  std::vector<double> frame(32 * 125);
  Rng rng(3);
  for (double& v : frame) v = rng.normal();
  const auto t = nn::frame_tensor(frame, 32, 125);
  const auto p1 = net.forward(t, nn::Mode::eval);
  const auto p2 = back.forward(t, nn::Mode::eval);
  EXPECT_TRUE(p1 == p2);
}

TEST(Model, FileSizeIsMagicHeaderAndFloat32Payload) {
  TempDir dir("model");
  const auto net = toy_network(32, 5, 1);
  const auto bytes = dataio::encode_model(net);
  const auto nl = std::find(bytes.begin() + 8, bytes.end(), '\n');
  const auto header_len = static_cast<std::size_t>(nl - bytes.begin()) + 1;
  EXPECT_EQ(bytes.size(), header_len + 4 * net.num_params());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), std::string("EMGCNN1\0", 8));
  const auto header = nlohmann::json::parse(bytes.begin() + 8, nl);
  EXPECT_EQ(header["spec"]["window"], 32);
  EXPECT_EQ(header["spec"]["kernel"], 5);
  EXPECT_EQ(header["version"], 1);
  EXPECT_EQ(header["layers"][0]["name"], "conv1.weight");
  EXPECT_EQ(header["layers"][0]["shape"], nlohmann::json({4, 1, 5, 5}));
}

TEST(Model, PayloadOrderIsConvWeightsThenBias) {
  auto net = toy_network(16, 3, 2);
  const auto& L = net.layout();
  net.params()[L.conv_bias[0].offset] = 0.5;  // first conv bias follows first conv weights
  const auto bytes = dataio::encode_model(net);
  const auto nl = std::find(bytes.begin() + 8, bytes.end(), '\n');
  const char* payload = &*(nl + 1);
  EXPECT_EQ(L.conv_bias[0].offset, 4u * 1 * 3 * 3);
  EXPECT_EQ(emgcnn::detail::read_f32(payload + 4 * L.conv_bias[0].offset), 0.5f);
  EXPECT_EQ(emgcnn::detail::read_f32(payload),
            static_cast<float>(net.params()[0]));
}

TEST(Model, WrongMagicIsAFormatError) {
  TempDir dir("model");
  auto bytes = dataio::encode_model(toy_network(16, 3, 1));
  bytes[0] = 'X';
  emgcnn::detail::write_file(dir / "m.bin", bytes);
  EXPECT_THROW(dataio::load_model(dir / "m.bin"), FormatError);
}

TEST(Model, UnknownVersionIsAVersionError) {
  auto bytes = dataio::encode_model(toy_network(16, 3, 1));
  const auto nl = std::find(bytes.begin() + 8, bytes.end(), '\n');
  auto header = nlohmann::json::parse(bytes.begin() + 8, nl);
  header["version"] = 9;
  std::vector<char> out(bytes.begin(), bytes.begin() + 8);
  const auto line = header.dump() + "\n";
  out.insert(out.end(), line.begin(), line.end());
  out.insert(out.end(), nl + 1, bytes.end());
  EXPECT_THROW(dataio::decode_model(out, "m"), VersionError);
}

TEST(Model, HeaderKernel5WithKernel3PayloadIsAShapeError) {
  const auto net3 = toy_network(16, 3, 1);
  auto bytes = dataio::encode_model(net3);
  const auto nl = std::find(bytes.begin() + 8, bytes.end(), '\n');
  auto header = nlohmann::json::parse(bytes.begin() + 8, nl);
  header["spec"]["kernel"] = 5;
  std::vector<char> out(bytes.begin(), bytes.begin() + 8);
  const auto line = header.dump() + "\n";
  out.insert(out.end(), line.begin(), line.end());
  out.insert(out.end(), nl + 1, bytes.end());
  EXPECT_THROW(dataio::decode_model(out, "m"), ShapeError);

  // Consistent kernel-5 header and layer list over a kernel-3 sized payload.
  const auto net5 = toy_network(16, 5, 1);
  auto bytes5 = dataio::encode_model(net5);
  const auto nl5 = std::find(bytes5.begin() + 8, bytes5.end(), '\n');
  std::vector<char> mixed(bytes5.begin(), nl5 + 1);
  mixed.insert(mixed.end(), nl + 1, bytes.end());
  EXPECT_THROW(dataio::decode_model(mixed, "m"), TruncatedError);
}

TEST(Model, TruncatedPayloadIsATruncatedError) {
  TempDir dir("model");
  auto bytes = dataio::encode_model(toy_network(16, 3, 1));
  bytes.resize(bytes.size() - 3);
  emgcnn::detail::write_file(dir / "m.bin", bytes);
  EXPECT_THROW(dataio::load_model(dir / "m.bin"), TruncatedError);
  const auto nl = std::find(bytes.begin() + 8, bytes.end(), '\n');
  bytes.erase(nl, bytes.end());
  EXPECT_THROW(dataio::decode_model(bytes, "m"), TruncatedError);
}

TEST(Model, TrailingBytesAreRejected) {
  auto bytes = dataio::encode_model(toy_network(16, 3, 1));
  bytes.push_back(0);
  EXPECT_THROW(dataio::decode_model(bytes, "m"), FormatError);
}

TEST(Model, MissingFileIsAnIoError) {
  EXPECT_THROW(dataio::load_model("/nonexistent/model.bin"), IoError);
}

// ---------------------------------------------------------------- frames

TEST(Frames, DumpRoundTripIsBitExact) {
  TempDir dir("frames");
  const auto labels = emgcnn::testing::label_track(
      {{ClassId::NM, 300}, {ClassId::HO, 260}, {ClassId::NM, 90}, {ClassId::WP, 400}});
  const auto rec = emgcnn::testing::random_recording(6, labels, 4);
  const auto set = windowing::segment(rec, {64, 0.5});
  dataio::save_frames(set, dir / "f.bin");
  const auto back = dataio::load_frames(dir / "f.bin");
  EXPECT_EQ(back.params.window_len, 64);
  EXPECT_EQ(back.params.overlap_fraction, 0.5);
  EXPECT_EQ(back.height, 6);
  EXPECT_EQ(back.recording_ids, set.recording_ids);
  ASSERT_EQ(back.frames.size(), set.frames.size());
  for (std::size_t i = 0; i < set.frames.size(); ++i) {
    EXPECT_EQ(back.frames[i].data, set.frames[i].data);
    EXPECT_EQ(back.frames[i].label, set.frames[i].label);
    EXPECT_EQ(back.frames[i].start, set.frames[i].start);
    EXPECT_EQ(back.frames[i].recording, set.frames[i].recording);
  }
  const auto bytes = emgcnn::detail::read_file(dir / "f.bin");
  const auto nl = std::find(bytes.begin() + 8, bytes.end(), '\n');
  EXPECT_EQ(static_cast<std::size_t>(bytes.end() - nl - 1), set.frames.size() * (13 + 4 * 6 * 64));
}

TEST(Frames, CorruptDumpsRaiseFormatErrors) {
  const auto rec = emgcnn::testing::random_recording(
      2, emgcnn::testing::label_track({{ClassId::WS, 40}}), 4);
  auto bytes = dataio::encode_frames(windowing::segment(rec, {8, 0.0}));
  auto cut = bytes;
  cut.resize(cut.size() - 1);
  EXPECT_THROW(dataio::decode_frames(cut, "f"), TruncatedError);
  auto bad = bytes;
  bad[3] = 'Z';
  EXPECT_THROW(dataio::decode_frames(bad, "f"), FormatError);
  auto extra = bytes;
  extra.push_back(1);
  EXPECT_THROW(dataio::decode_frames(extra, "f"), FormatError);
}
