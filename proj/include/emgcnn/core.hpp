#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace emgcnn {

inline constexpr std::string_view kVersion = "0.1.0";

// Error hierarchy. The CLI maps these onto exit codes:
// UsageError -> 1, DataError (and subclasses) -> 2, NumericalError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class LengthMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kNumClasses = 5;

// Motion classes. The id <-> name table is part of every on-disk format.
enum class ClassId : std::uint8_t { NM = 0, WS = 1, WP = 2, HO = 3, HC = 4 };

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {"NM", "WS", "WP",
                                                                           "HO", "HC"};

constexpr std::string_view class_name(ClassId c) { return kClassNames[static_cast<int>(c)]; }

constexpr bool is_valid_class(int id) { return id >= 0 && id < kNumClasses; }

inline std::optional<ClassId> class_from_name(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == name) return static_cast<ClassId>(i);
  }
  return std::nullopt;
}

constexpr int to_index(ClassId c) { return static_cast<int>(c); }

}  // namespace emgcnn
