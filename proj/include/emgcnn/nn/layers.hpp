#pragma once

// Layer primitives with forward and reverse-mode passes. Convolutions are
// lowered to a single GEMM per call via an im2col patch matrix.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "emgcnn/nn/tensor.hpp"
#include "emgcnn/random.hpp"

namespace emgcnn::nn {

using Vector = Eigen::VectorXd;

namespace detail {

// Per-thread scratch reused across calls; patch matrices reach tens of MB and
// reallocating them every layer costs more than the copy itself.
inline Eigen::MatrixXd& scratch(int slot) {
  thread_local std::array<Eigen::MatrixXd, 2> buffers;
  return buffers[static_cast<std::size_t>(slot)];
}

// Patch matrix of shape (k*k*Cin) x (H*W); rows ordered (ky, kx, cin), zero
// padding of k/2 on every side.
inline void im2col(const Tensor& in, int k, Eigen::MatrixXd& cols) {
  const auto [h, w, cin] = in.shape;
  const int r = k / 2;
  cols.resize(static_cast<Eigen::Index>(k) * k * cin, static_cast<Eigen::Index>(h) * w);
  double* dst = cols.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ky = 0; ky < k; ++ky) {
        const int sy = y + ky - r;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = x + kx - r;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
            std::fill(dst, dst + cin, 0.0);
          } else {
            const double* src = &in.data[(static_cast<std::size_t>(sy) * w + sx) * cin];
            std::copy(src, src + cin, dst);
          }
          dst += cin;
        }
      }
    }
  }
}

inline Eigen::MatrixXd im2col(const Tensor& in, int k) {
  Eigen::MatrixXd cols;
  im2col(in, k, cols);
  return cols;
}

// Adjoint of im2col: scatter-adds patch gradients back onto the input grid.
inline void col2im_add(const Eigen::MatrixXd& dcols, int k, Tensor& din) {
  const auto [h, w, cin] = din.shape;
  const int r = k / 2;
  const double* src = dcols.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ky = 0; ky < k; ++ky) {
        const int sy = y + ky - r;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = x + kx - r;
          if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
            double* dst = &din.data[(static_cast<std::size_t>(sy) * w + sx) * cin];
            for (int c = 0; c < cin; ++c) dst[c] += src[c];
          }
          src += cin;
        }
      }
    }
  }
}

// Canonical [out][in][ky][kx] weights -> GEMM layout Cout x (ky, kx, cin).
inline Eigen::MatrixXd gemm_weights(std::span<const double> w, int cout, int cin, int k) {
  Eigen::MatrixXd g(cout, static_cast<Eigen::Index>(k) * k * cin);
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < cin; ++i)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx)
          g(o, (ky * k + kx) * cin + i) =
              w[((static_cast<std::size_t>(o) * cin + i) * k + ky) * k + kx];
  return g;
}

inline void add_canonical(const Eigen::MatrixXd& g, int cout, int cin, int k, std::span<double> w) {
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < cin; ++i)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx)
          w[((static_cast<std::size_t>(o) * cin + i) * k + ky) * k + kx] +=
              g(o, (ky * k + kx) * cin + i);
}

}  // namespace detail

struct ConvShape {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;

  [[nodiscard]] std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
};

inline void check_conv(const Tensor& in, const ConvShape& cs, std::span<const double> weights,
                       std::span<const double> bias) {
  if (cs.kernel < 1 || cs.kernel % 2 == 0) throw ShapeError("conv2d: kernel size must be odd");
  if (in.shape.channels != cs.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(in.shape.channels) +
                     " channels, layer expects " + std::to_string(cs.in_channels));
  }
  if (weights.size() != cs.weight_count() ||
      bias.size() != static_cast<std::size_t>(cs.out_channels)) {
    throw ShapeError("conv2d: weight/bias size mismatch");
  }
  if (in.data.size() != in.shape.size()) throw ShapeError("conv2d: malformed input tensor");
}

// Same-size cross-correlation: out(y,x,o) = b[o] + sum W[o][i][ky][kx] *
// in(y+ky-k/2, x+kx-k/2, i), zero outside the input.
//
// Two implementations with identical semantics: an im2col + GEMM lowering
// (fast for wide layers) and a direct shift-and-accumulate over channel planes
// (fast for narrow layers, no patch matrix). conv2d() picks by layer width.
inline Tensor conv2d_gemm(const Tensor& in, const ConvShape& cs, std::span<const double> weights,
                          std::span<const double> bias) {
  check_conv(in, cs, weights, bias);
  Tensor out({in.shape.height, in.shape.width, cs.out_channels});
  const Eigen::MatrixXd wg =
      detail::gemm_weights(weights, cs.out_channels, cs.in_channels, cs.kernel);
  const Eigen::Map<const Vector> b(bias.data(), cs.out_channels);
  auto om = out.matrix();
  Eigen::MatrixXd& cols = detail::scratch(0);
  detail::im2col(in, cs.kernel, cols);
  om.noalias() = wg * cols;
  om.colwise() += b;
  return out;
}

// Accumulates dL/dW and dL/db into the given spans; writes dL/din when
// requested (skipped for the network input).
inline void conv2d_backward_gemm(const Tensor& in, const ConvShape& cs, std::span<const double> weights,
                            const Tensor& dout, std::span<double> dweights, std::span<double> dbias,
                            Tensor* din) {
  Eigen::MatrixXd& cols = detail::scratch(0);
  detail::im2col(in, cs.kernel, cols);
  const auto dm = dout.matrix();
  const Eigen::MatrixXd dwg = dm * cols.transpose();
  detail::add_canonical(dwg, cs.out_channels, cs.in_channels, cs.kernel, dweights);
  Eigen::Map<Vector>(dbias.data(), cs.out_channels) += dm.rowwise().sum();
  if (din != nullptr) {
    const Eigen::MatrixXd wg =
        detail::gemm_weights(weights, cs.out_channels, cs.in_channels, cs.kernel);
    Eigen::MatrixXd& dcols = detail::scratch(1);
    dcols.resize(wg.cols(), dm.cols());
    dcols.noalias() = wg.transpose() * dm;
    *din = Tensor(in.shape);
    detail::col2im_add(dcols, cs.kernel, *din);
  }
}

namespace detail {

// Valid output range along one axis for tap offset d: [lo, hi).
struct Span1 {
  int lo, hi;
};
inline Span1 tap_range(int n, int d) { return {std::max(0, -d), std::min(n, n - d)}; }

// HWC tensor -> one contiguous H*W plane per channel (column c of the result).
inline Eigen::MatrixXd to_planes(const Tensor& t) { return t.matrix().transpose(); }

}  // namespace detail

inline Tensor conv2d_direct(const Tensor& in, const ConvShape& cs, std::span<const double> weights,
                            std::span<const double> bias) {
  check_conv(in, cs, weights, bias);
  const auto [h, w, cin] = in.shape;
  const int k = cs.kernel, r = k / 2;
  const Eigen::MatrixXd src = detail::to_planes(in);
  Eigen::MatrixXd dst(static_cast<Eigen::Index>(h) * w, cs.out_channels);
  for (int o = 0; o < cs.out_channels; ++o) {
    double* out = dst.col(o).data();
    std::fill(out, out + static_cast<std::ptrdiff_t>(h) * w, bias[static_cast<std::size_t>(o)]);
    for (int i = 0; i < cin; ++i) {
      const double* plane = src.col(i).data();
      const double* wk = &weights[(static_cast<std::size_t>(o) * cin + i) * k * k];
      for (int ky = 0; ky < k; ++ky) {
        const auto yr = detail::tap_range(h, ky - r);
        for (int kx = 0; kx < k; ++kx) {
          const double wv = wk[ky * k + kx];
          const auto xr = detail::tap_range(w, kx - r);
          const int n = xr.hi - xr.lo;
          for (int y = yr.lo; y < yr.hi; ++y) {
            double* orow = out + static_cast<std::ptrdiff_t>(y) * w + xr.lo;
            const double* irow = plane + static_cast<std::ptrdiff_t>(y + ky - r) * w + xr.lo + kx - r;
            for (int x = 0; x < n; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
  Tensor out({h, w, cs.out_channels});
  out.matrix() = dst.transpose();
  return out;
}

inline void conv2d_backward_direct(const Tensor& in, const ConvShape& cs,
                                   std::span<const double> weights, const Tensor& dout,
                                   std::span<double> dweights, std::span<double> dbias,
                                   Tensor* din) {
  const auto [h, w, cin] = in.shape;
  const int k = cs.kernel, r = k / 2;
  const Eigen::MatrixXd src = detail::to_planes(in);
  const Eigen::MatrixXd grad = detail::to_planes(dout);
  Eigen::MatrixXd dsrc;
  if (din != nullptr) dsrc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(h) * w, cin);
  for (int o = 0; o < cs.out_channels; ++o) {
    const double* g = grad.col(o).data();
    dbias[static_cast<std::size_t>(o)] += grad.col(o).sum();
    for (int i = 0; i < cin; ++i) {
      const double* plane = src.col(i).data();
      double* dplane = din != nullptr ? dsrc.col(i).data() : nullptr;
      const std::size_t base = (static_cast<std::size_t>(o) * cin + i) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const auto yr = detail::tap_range(h, ky - r);
        for (int kx = 0; kx < k; ++kx) {
          const auto xr = detail::tap_range(w, kx - r);
          const int n = xr.hi - xr.lo;
          const double wv = weights[base + static_cast<std::size_t>(ky * k + kx)];
          double acc = 0.0;
          for (int y = yr.lo; y < yr.hi; ++y) {
            const double* grow = g + static_cast<std::ptrdiff_t>(y) * w + xr.lo;
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(y + ky - r) * w + xr.lo + kx - r;
            const double* irow = plane + off;
            double row_acc = 0.0;
            for (int x = 0; x < n; ++x) row_acc += grow[x] * irow[x];
            acc += row_acc;
            if (dplane != nullptr) {
              double* drow = dplane + off;
              for (int x = 0; x < n; ++x) drow[x] += wv * grow[x];
            }
          }
          dweights[base + static_cast<std::size_t>(ky * k + kx)] += acc;
        }
      }
    }
  }
  if (din != nullptr) {
    *din = Tensor(in.shape);
    din->matrix() = dsrc.transpose();
  }
}

// Layers with at most this many input*output channel pairs use the direct path.
inline constexpr int kDirectConvMaxPairs = 16;

inline bool use_direct_conv(const ConvShape& cs) {
  return cs.in_channels * cs.out_channels <= kDirectConvMaxPairs;
}

inline Tensor conv2d(const Tensor& in, const ConvShape& cs, std::span<const double> weights,
                     std::span<const double> bias) {
  return use_direct_conv(cs) ? conv2d_direct(in, cs, weights, bias)
                             : conv2d_gemm(in, cs, weights, bias);
}

inline void conv2d_backward(const Tensor& in, const ConvShape& cs, std::span<const double> weights,
                            const Tensor& dout, std::span<double> dweights, std::span<double> dbias,
                            Tensor* din) {
  if (use_direct_conv(cs)) {
    conv2d_backward_direct(in, cs, weights, dout, dweights, dbias, din);
  } else {
    conv2d_backward_gemm(in, cs, weights, dout, dweights, dbias, din);
  }
}

inline Tensor relu(Tensor x) {
  for (double& v : x.data) v = v > 0.0 ? v : 0.0;
  return x;
}

// Gradient through ReLU given its output (output > 0 <=> input > 0).
inline void relu_backward(const Tensor& out, Tensor& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(out.data[i] > 0.0)) grad.data[i] = 0.0;
  }
}

enum class Mode { eval, train };

// Inverted dropout multipliers: 0 with probability p, else 1/(1-p).
inline std::vector<double> dropout_mask(std::size_t n, double p, Rng& rng) {
  std::vector<double> mask(n);
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  return mask;
}

inline Tensor apply_mask(Tensor x, std::span<const double> mask) {
  if (mask.size() != x.data.size()) throw ShapeError("dropout mask size mismatch");
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] *= mask[i];
  return x;
}

// Identity in eval mode; in train mode draws a fresh mask from rng.
inline Tensor dropout(Tensor x, double p, Mode mode, Rng& rng) {
  if (mode == Mode::eval || p <= 0.0) return x;
  if (!(p < 1.0)) throw UsageError("dropout probability must be < 1");
  const auto mask = dropout_mask(x.data.size(), p, rng);
  return apply_mask(std::move(x), mask);
}

struct PoolResult {
  Tensor out;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

// Non-overlapping 2x2 max pooling; a trailing odd row/column is dropped.
inline PoolResult maxpool2x2(const Tensor& in) {
  const auto [h, w, c] = in.shape;
  if (h < 2 || w < 2) throw ShapeError("maxpool2x2: input smaller than 2x2");
  PoolResult r{Tensor({h / 2, w / 2, c}), {}};
  r.argmax.resize(r.out.data.size());
  for (int y = 0; y < h / 2; ++y) {
    for (int x = 0; x < w / 2; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        std::size_t best = (static_cast<std::size_t>(2 * y) * w + 2 * x) * c + ch;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (static_cast<std::size_t>(2 * y + dy) * w + 2 * x + dx) * c + ch;
            if (in.data[idx] > in.data[best]) best = idx;
          }
        }
        const std::size_t o = (static_cast<std::size_t>(y) * (w / 2) + x) * c + ch;
        r.out.data[o] = in.data[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

inline Tensor maxpool2x2_backward(const Shape3& in_shape, const std::vector<std::size_t>& argmax,
                                  const Tensor& dout) {
  Tensor din(in_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) din.data[argmax[o]] += dout.data[o];
  return din;
}

struct GlobalPoolResult {
  Vector out;
  std::vector<std::size_t> argmax;
};

inline GlobalPoolResult global_max_pool(const Tensor& in) {
  const int c = in.shape.channels;
  if (in.shape.positions() < 1 || c < 1) throw ShapeError("global_max_pool: empty tensor");
  GlobalPoolResult r{Vector::Constant(c, -std::numeric_limits<double>::infinity()),
                     std::vector<std::size_t>(static_cast<std::size_t>(c), 0)};
  for (std::size_t i = 0; i < in.data.size(); ++i) {
    const auto ch = static_cast<Eigen::Index>(i % static_cast<std::size_t>(c));
    if (in.data[i] > r.out(ch) || i < static_cast<std::size_t>(c)) {
      r.out(ch) = in.data[i];
      r.argmax[static_cast<std::size_t>(ch)] = i;
    }
  }
  return r;
}

inline Tensor global_max_pool_backward(const Shape3& in_shape,
                                       const std::vector<std::size_t>& argmax, const Vector& dout) {
  Tensor din(in_shape);
  for (std::size_t ch = 0; ch < argmax.size(); ++ch) {
    din.data[argmax[ch]] += dout(static_cast<Eigen::Index>(ch));
  }
  return din;
}

// y = W x + b with W stored row-major [out][in].
inline Vector dense(const Vector& x, std::span<const double> w, std::span<const double> b) {
  const auto m = static_cast<Eigen::Index>(b.size());
  if (m == 0 || w.size() != static_cast<std::size_t>(m * x.size())) {
    throw ShapeError("dense: weight/bias size mismatch");
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> wm(w.data(), m, x.size());
  return wm * x + Eigen::Map<const Vector>(b.data(), m);
}

// Accumulates dW, db; returns dL/dx.
inline Vector dense_backward(const Vector& x, std::span<const double> w, const Vector& dy,
                             std::span<double> dw, std::span<double> db) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> wm(w.data(), dy.size(), x.size());
  Eigen::Map<RowMajor>(dw.data(), dy.size(), x.size()) += dy * x.transpose();
  Eigen::Map<Vector>(db.data(), dy.size()) += dy;
  return wm.transpose() * dy;
}

inline Vector softmax(const Vector& z) {
  const Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace emgcnn::nn
