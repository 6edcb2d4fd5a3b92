#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "emgcnn/core.hpp"

namespace emgcnn::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00U) | ((v << 8) & 0xff0000U) | (v << 24);
}

// Appends values as little-endian IEEE-754 binary32.
template <typename Range>
void append_f32(std::vector<char>& out, const Range& values) {
  const std::size_t base = out.size();
  out.resize(base + 4 * std::size(values));
  char* dst = out.data() + base;
  for (auto v : values) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    if constexpr (std::endian::native == std::endian::big) bits = bswap32(bits);
    std::memcpy(dst, &bits, 4);
    dst += 4;
  }
}

inline float read_f32(const char* src) {
  std::uint32_t bits;
  std::memcpy(&bits, src, 4);
  if constexpr (std::endian::native == std::endian::big) bits = bswap32(bits);
  return std::bit_cast<float>(bits);
}

inline void append_u32(std::vector<char>& out, std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) v = bswap32(v);
  const auto* p = reinterpret_cast<const char*>(&v);
  out.insert(out.end(), p, p + 4);
}

inline std::uint32_t read_u32(const char* src) {
  std::uint32_t v;
  std::memcpy(&v, src, 4);
  if constexpr (std::endian::native == std::endian::big) v = bswap32(v);
  return v;
}

inline std::uint64_t bswap64(std::uint64_t v) {
  return (static_cast<std::uint64_t>(bswap32(static_cast<std::uint32_t>(v))) << 32) |
         bswap32(static_cast<std::uint32_t>(v >> 32));
}

inline void append_u64(std::vector<char>& out, std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) v = bswap64(v);
  const auto* p = reinterpret_cast<const char*>(&v);
  out.insert(out.end(), p, p + 8);
}

inline std::uint64_t read_u64(const char* src) {
  std::uint64_t v;
  std::memcpy(&v, src, 8);
  if constexpr (std::endian::native == std::endian::big) v = bswap64(v);
  return v;
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<char> bytes(size);
  if (size > 0 && !in.read(bytes.data(), static_cast<std::streamsize>(size))) {
    throw IoError("failed reading " + path.string());
  }
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span<const char>(text.data(), text.size()));
}

}  // namespace emgcnn::detail
