#pragma once

// The classifier: four conv blocks (conv -> ReLU -> dropout [-> 2x2 max pool]),
// global max pool, dense + ReLU, dense + softmax. All parameters live in one
// flat vector so optimizers and serializers can treat them uniformly.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "emgcnn/nn/layers.hpp"

namespace emgcnn::nn {

struct NetworkSpec {
  int input_height = 32;  // K electrodes
  int window = 125;       // T samples
  int kernel = 3;         // k, shared by every conv layer
  std::vector<int> conv_channels = {32, 32, 64, 64};
  std::vector<bool> pool_after = {false, false, true, true};
  double dropout = 0.1;
  int dense_units = 128;
  int num_classes = kNumClasses;

  [[nodiscard]] int num_blocks() const { return static_cast<int>(conv_channels.size()); }

  void validate() const {
    if (kernel < 1 || kernel % 2 == 0) {
      throw UsageError("kernel size must be odd and >= 1, got " + std::to_string(kernel));
    }
    if (conv_channels.empty() || conv_channels.size() != pool_after.size()) {
      throw UsageError("conv_channels and pool_after must be non-empty and equally long");
    }
    for (int c : conv_channels) {
      if (c < 1) throw UsageError("conv channel counts must be >= 1");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
    if (dense_units < 1 || num_classes < 2) throw UsageError("invalid dense/class sizes");
    int h = input_height, w = window;
    for (std::size_t i = 0; i < pool_after.size(); ++i) {
      if (!pool_after[i]) continue;
      if (h < 2 || w < 2) {
        throw UsageError("input " + std::to_string(input_height) + "x" + std::to_string(window) +
                         " too small for the network's pooling stages");
      }
      h /= 2;
      w /= 2;
    }
    if (h < 1 || w < 1) throw UsageError("input too small");
  }

  [[nodiscard]] Shape3 input_shape() const { return {input_height, window, 1}; }

  // Output of each block; pooling uses floor semantics.
  [[nodiscard]] std::vector<Shape3> block_output_shapes() const {
    std::vector<Shape3> out;
    int h = input_height, w = window;
    for (int i = 0; i < num_blocks(); ++i) {
      if (pool_after[static_cast<std::size_t>(i)]) {
        h /= 2;
        w /= 2;
      }
      out.push_back({h, w, conv_channels[static_cast<std::size_t>(i)]});
    }
    return out;
  }

  [[nodiscard]] ConvShape conv_shape(int block) const {
    const int cin = block == 0 ? 1 : conv_channels[static_cast<std::size_t>(block - 1)];
    return {cin, conv_channels[static_cast<std::size_t>(block)], kernel};
  }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Full-size network for window T and kernel k.
inline NetworkSpec full_spec(int window, int kernel) {
  NetworkSpec s;
  s.window = window;
  s.kernel = kernel;
  return s;
}

// Same topology with every conv/dense width divided by `divisor` (min 1).
inline NetworkSpec scaled_spec(int window, int kernel, int divisor) {
  NetworkSpec s = full_spec(window, kernel);
  if (divisor < 1) throw UsageError("width divisor must be >= 1");
  for (int& c : s.conv_channels) c = std::max(1, c / divisor);
  s.dense_units = std::max(1, s.dense_units / divisor);
  return s;
}

// Offsets of each parameter tensor in the flat vector, in serialization order:
// conv blocks (weights [out][in][ky][kx], bias), then dense layers
// (weights [out][in], bias).
struct ParamLayout {
  struct Slot {
    std::size_t offset = 0;
    std::size_t size = 0;
  };
  std::vector<Slot> conv_weight, conv_bias;
  Slot dense1_weight, dense1_bias, dense2_weight, dense2_bias;
  std::size_t total = 0;

  explicit ParamLayout(const NetworkSpec& spec) {
    auto take = [this](std::size_t n) {
      Slot s{total, n};
      total += n;
      return s;
    };
    for (int b = 0; b < spec.num_blocks(); ++b) {
      const ConvShape cs = spec.conv_shape(b);
      conv_weight.push_back(take(cs.weight_count()));
      conv_bias.push_back(take(static_cast<std::size_t>(cs.out_channels)));
    }
    const auto feat = static_cast<std::size_t>(spec.conv_channels.back());
    const auto hidden = static_cast<std::size_t>(spec.dense_units);
    const auto classes = static_cast<std::size_t>(spec.num_classes);
    dense1_weight = take(hidden * feat);
    dense1_bias = take(hidden);
    dense2_weight = take(classes * hidden);
    dense2_bias = take(classes);
  }

  // (name, shape) of every tensor in order; recorded in model file headers.
  [[nodiscard]] std::vector<std::pair<std::string, std::vector<int>>> describe(
      const NetworkSpec& spec) const {
    std::vector<std::pair<std::string, std::vector<int>>> d;
    for (int b = 0; b < spec.num_blocks(); ++b) {
      const ConvShape cs = spec.conv_shape(b);
      const std::string n = "conv" + std::to_string(b + 1);
      d.push_back({n + ".weight", {cs.out_channels, cs.in_channels, cs.kernel, cs.kernel}});
      d.push_back({n + ".bias", {cs.out_channels}});
    }
    d.push_back({"dense1.weight", {spec.dense_units, spec.conv_channels.back()}});
    d.push_back({"dense1.bias", {spec.dense_units}});
    d.push_back({"dense2.weight", {spec.num_classes, spec.dense_units}});
    d.push_back({"dense2.bias", {spec.num_classes}});
    return d;
  }
};

// Dropout multipliers for each conv block, frozen for one forward/backward.
using DropoutMasks = std::vector<std::vector<double>>;

// Intermediate values of one forward pass, kept for the backward pass.
struct ForwardCache {
  std::vector<Tensor> block_inputs;  // input of each conv
  std::vector<Tensor> activations;   // ReLU output of each conv (pre-dropout)
  DropoutMasks masks;                // empty in eval mode
  std::vector<std::vector<std::size_t>> pool_argmax;
  std::vector<Shape3> pool_input_shapes;
  Shape3 last_block_shape;
  std::vector<std::size_t> gmp_argmax;
  Vector pooled;   // global max pool output
  Vector hidden;   // dense1 after ReLU
  Vector logits;
  Vector probs;
  std::vector<Shape3> block_shapes;  // output of each block
};

class Network {
 public:
  Network() : Network(NetworkSpec{}) {}
  explicit Network(NetworkSpec spec)
      : spec_(validated(std::move(spec))), layout_(spec_), params_(layout_.total, 0.0) {}

  [[nodiscard]] const NetworkSpec& spec() const { return spec_; }
  [[nodiscard]] const ParamLayout& layout() const { return layout_; }
  [[nodiscard]] std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  [[nodiscard]] std::size_t num_params() const { return params_.size(); }

  [[nodiscard]] std::span<const double> slot(const ParamLayout::Slot& s) const {
    return std::span<const double>(params_).subspan(s.offset, s.size);
  }

  // Forward pass. In train mode dropout masks are drawn from `rng` unless
  // `fixed_masks` is given (used for gradient checking).
  Vector forward(const Tensor& frame, Mode mode, Rng* rng = nullptr, ForwardCache* cache = nullptr,
                 const DropoutMasks* fixed_masks = nullptr) const {
    if (frame.shape != spec_.input_shape() || frame.data.size() != frame.shape.size()) {
      throw ShapeError("forward: frame shape " + to_string(frame.shape) +
                       " does not match network input " + to_string(spec_.input_shape()));
    }
    const bool train = mode == Mode::train && spec_.dropout > 0.0;
    if (train && fixed_masks == nullptr && rng == nullptr) {
      throw UsageError("forward: train mode needs an rng or fixed masks");
    }
    if (cache) *cache = ForwardCache{};
    Tensor x = frame;
    for (int b = 0; b < spec_.num_blocks(); ++b) {
      const auto bi = static_cast<std::size_t>(b);
      const ConvShape cs = spec_.conv_shape(b);
      Tensor act = relu(conv2d(x, cs, slot(layout_.conv_weight[bi]), slot(layout_.conv_bias[bi])));
      if (cache) {
        cache->block_inputs.push_back(std::move(x));
        cache->activations.push_back(act);
      }
      if (train) {
        std::vector<double> mask = fixed_masks ? fixed_masks->at(bi)
                                               : dropout_mask(act.data.size(), spec_.dropout, *rng);
        act = apply_mask(std::move(act), mask);
        if (cache) cache->masks.push_back(std::move(mask));
      }
      if (spec_.pool_after[bi]) {
        PoolResult pr = maxpool2x2(act);
        if (cache) {
          cache->pool_input_shapes.push_back(act.shape);
          cache->pool_argmax.push_back(std::move(pr.argmax));
        }
        x = std::move(pr.out);
      } else {
        if (cache) {
          cache->pool_input_shapes.push_back({});
          cache->pool_argmax.emplace_back();
        }
        x = std::move(act);
      }
      if (cache) cache->block_shapes.push_back(x.shape);
    }
    GlobalPoolResult g = global_max_pool(x);
    Vector hidden = dense(g.out, slot(layout_.dense1_weight), slot(layout_.dense1_bias));
    hidden = hidden.cwiseMax(0.0);
    Vector logits = dense(hidden, slot(layout_.dense2_weight), slot(layout_.dense2_bias));
    Vector probs = softmax(logits);
    if (cache) {
      cache->last_block_shape = x.shape;
      cache->gmp_argmax = std::move(g.argmax);
      cache->pooled = std::move(g.out);
      cache->hidden = std::move(hidden);
      cache->logits = std::move(logits);
      cache->probs = probs;
    }
    return probs;
  }

  // Reverse pass of cross-entropy loss for `target`, given the cache of a
  // forward pass on `frame`. Gradients are accumulated into `grad` (size
  // num_params()). Returns the (unclamped-gradient) loss -ln(max(p, 1e-12)).
  double backward(const ForwardCache& cache, ClassId target, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw ShapeError("backward: gradient buffer size mismatch");
    const int t = to_index(target);
    if (t < 0 || t >= spec_.num_classes) throw ShapeError("backward: target out of range");
    auto gslot = [&grad](const ParamLayout::Slot& s) { return grad.subspan(s.offset, s.size); };

    Vector dlogits = cache.probs;
    dlogits(t) -= 1.0;
    Vector dhidden = dense_backward(cache.hidden, slot(layout_.dense2_weight), dlogits,
                                    gslot(layout_.dense2_weight), gslot(layout_.dense2_bias));
    for (Eigen::Index i = 0; i < dhidden.size(); ++i) {
      if (!(cache.hidden(i) > 0.0)) dhidden(i) = 0.0;
    }
    const Vector dpooled = dense_backward(cache.pooled, slot(layout_.dense1_weight), dhidden,
                                          gslot(layout_.dense1_weight), gslot(layout_.dense1_bias));
    Tensor dx = global_max_pool_backward(cache.last_block_shape, cache.gmp_argmax, dpooled);

    for (int b = spec_.num_blocks() - 1; b >= 0; --b) {
      const auto bi = static_cast<std::size_t>(b);
      if (spec_.pool_after[bi]) {
        dx = maxpool2x2_backward(cache.pool_input_shapes[bi], cache.pool_argmax[bi], dx);
      }
      if (!cache.masks.empty()) {
        const auto& m = cache.masks[bi];
        for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= m[i];
      }
      relu_backward(cache.activations[bi], dx);
      Tensor din;
      conv2d_backward(cache.block_inputs[bi], spec_.conv_shape(b), slot(layout_.conv_weight[bi]),
                      dx, gslot(layout_.conv_weight[bi]), gslot(layout_.conv_bias[bi]),
                      b > 0 ? &din : nullptr);
      dx = std::move(din);
    }
    return -std::log(std::max(cache.probs(t), 1e-12));
  }

 private:
  static NetworkSpec validated(NetworkSpec s) {
    s.validate();
    return s;
  }

  NetworkSpec spec_;
  ParamLayout layout_;
  Buffer params_;
};

// Weights uniform in +-sqrt(6 / fan_in), biases zero, from a seeded stream.
// Values are rounded to float32 so a freshly built network survives the
// float32 model file bit-exactly.
inline Network build_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network net(spec);
  Rng rng(combine_seed(seed, 0x6e6e2d696e6974ULL));
  const ParamLayout& L = net.layout();
  auto fill = [&](const ParamLayout::Slot& s, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    auto p = net.params().subspan(s.offset, s.size);
    for (double& v : p) v = static_cast<float>(rng.uniform(-limit, limit));
  };
  for (int b = 0; b < spec.num_blocks(); ++b) {
    const ConvShape cs = spec.conv_shape(b);
    fill(L.conv_weight[static_cast<std::size_t>(b)],
         static_cast<std::size_t>(cs.in_channels) * cs.kernel * cs.kernel);
  }
  fill(L.dense1_weight, static_cast<std::size_t>(spec.conv_channels.back()));
  fill(L.dense2_weight, static_cast<std::size_t>(spec.dense_units));
  return net;
}

inline Network build_network(int window, int kernel, std::uint64_t seed) {
  return build_network(full_spec(window, kernel), seed);
}

// Frame data (K x T row-major) viewed as the network's input tensor.
inline Tensor frame_tensor(std::span<const double> data, int height, int window) {
  return Tensor({height, window, 1}, Buffer(data.begin(), data.end()));
}

}  // namespace emgcnn::nn
