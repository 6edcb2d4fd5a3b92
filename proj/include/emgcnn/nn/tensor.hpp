#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "emgcnn/core.hpp"

namespace emgcnn::nn {

// Storage for everything Eigen maps over. Eigen's vectorized loops split
// their work by the address alignment of the data, so a fixed alignment keeps
// the floating-point summation order, and therefore every result, identical
// from run to run.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

struct Shape3 {
  int height = 0;
  int width = 0;
  int channels = 0;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  [[nodiscard]] int positions() const { return height * width; }

  friend bool operator==(const Shape3&, const Shape3&) = default;
};

inline std::string to_string(const Shape3& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
         std::to_string(s.channels);
}

// Dense H x W x C tensor, row-major with channels innermost. As an Eigen
// matrix it is a C x (H*W) column-major block, one column per position.
struct Tensor {
  Shape3 shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(Shape3 s, double fill = 0.0) : shape(s), data(s.size(), fill) {}
  Tensor(Shape3 s, Buffer values) : shape(s), data(std::move(values)) {
    if (data.size() != shape.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + to_string(shape));
    }
  }

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * shape.width + x) * shape.channels + c];
  }
  [[nodiscard]] double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * shape.width + x) * shape.channels + c];
  }

  [[nodiscard]] Eigen::Map<const Eigen::MatrixXd> matrix() const {
    return {data.data(), shape.channels, shape.positions()};
  }
  Eigen::Map<Eigen::MatrixXd> matrix() { return {data.data(), shape.channels, shape.positions()}; }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }
};

}  // namespace emgcnn::nn
