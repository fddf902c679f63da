#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "treebp/init.hpp"
#include "treebp/ops.hpp"
#include "treebp/rng.hpp"
#include "treebp/tensor.hpp"

namespace treebp {

enum class Geometry { CIFAR, MNIST };

inline const char* geometry_name(Geometry g) {
  return g == Geometry::CIFAR ? "cifar" : "mnist";
}

// Tree-3: grouped conv -> max-pool -> per-branch tree sampling -> FC head.
// CIFAR geometry pools to 14x14 maps sampled as 7 bands of 2 rows x 14 cols;
// MNIST pools to 12x12 maps sampled as 3 bands of 4 rows x 12 cols.
struct Tree3Config {
  std::size_t k = 6;   // filters per input channel
  std::size_t m = 16;  // branches
  Activation activation = Activation::ReLU;
  Geometry geometry = Geometry::CIFAR;
  std::size_t outputs = 10;  // 1 for the ten-architecture variant

  std::size_t channels() const { return geometry == Geometry::CIFAR ? 3 : 1; }
  std::size_t input_hw() const { return geometry == Geometry::CIFAR ? 32 : 28; }
  std::size_t conv_hw() const { return input_hw() - kFilterSize + 1; }
  std::size_t pool_hw() const { return conv_hw() / 2; }
  std::size_t rect_rows() const { return geometry == Geometry::CIFAR ? 2 : 4; }
  std::size_t rects() const { return pool_hw() / rect_rows(); }  // 7 or 3

  std::size_t tree_fan_in() const { return rect_rows() * pool_hw() * k; }
  std::size_t fc_rows() const { return rects() * channels() * m; }

  // Flattened tree output index for (branch, channel, rectangle).
  std::size_t unit_index(std::size_t b, std::size_t c, std::size_t r) const {
    return (b * channels() + c) * rects() + r;
  }

  void validate() const {
    if (k == 0) throw ConfigError("tree3: K must be >= 1");
    if (m == 0) throw ConfigError("tree3: M must be >= 1");
    if (outputs != 10 && outputs != 1) {
      throw ConfigError("tree3: outputs must be 10 or 1, got " + std::to_string(outputs));
    }
  }
};

template <typename T>
struct Tree3Params {
  Tensor<T> w_conv;  // [C][K][5][5], shared across branches
  Tensor<T> w_tree;  // [M][C][K][P][P] where P = pooled map side
  Tensor<T> w_fc;    // [R*C*M][outputs]

  std::array<Tensor<T>*, 3> tensors() { return {&w_conv, &w_tree, &w_fc}; }
  std::array<const Tensor<T>*, 3> tensors() const { return {&w_conv, &w_tree, &w_fc}; }

  template <typename U>
  Tree3Params<U> cast() const {
    return {w_conv.template cast<U>(), w_tree.template cast<U>(),
            w_fc.template cast<U>()};
  }
};

template <typename T>
Tree3Params<T> zero_tree3_params(const Tree3Config& cfg) {
  cfg.validate();
  const std::size_t c = cfg.channels(), p = cfg.pool_hw();
  Tree3Params<T> params;
  params.w_conv = Tensor<T>({c, cfg.k, kFilterSize, kFilterSize});
  params.w_tree = Tensor<T>({cfg.m, c, cfg.k, p, p});
  params.w_fc = Tensor<T>({cfg.fc_rows(), cfg.outputs});
  return params;
}

// Zero-mean Gaussians with He-normal stddev sqrt(2/fan_in): conv fan-in 25,
// tree fan-in (band rows x pooled cols x K), FC fan-in R*C*M.
template <typename T>
Tree3Params<T> init_tree3(const Tree3Config& cfg, std::uint64_t seed,
                          InitScheme scheme = InitScheme::HeNormal) {
  auto params = zero_tree3_params<T>(cfg);
  Rng rng(derive_seed(seed, "init"));
  detail::fill_gaussian(params.w_conv, rng,
                        detail::init_stddev(scheme, kFilterSize * kFilterSize, cfg.k * kFilterSize * kFilterSize));
  detail::fill_gaussian(params.w_tree, rng,
                        detail::init_stddev(scheme, cfg.tree_fan_in(), 1));
  detail::fill_gaussian(params.w_fc, rng,
                        detail::init_stddev(scheme, cfg.fc_rows(), cfg.outputs));
  return params;
}

// Per-layer activations retained for one backward pass.
template <typename T>
struct Tree3Trace {
  Tensor<T> input;     // [C][H][W]
  Tensor<T> conv_pre;  // [C*K][H-4][W-4]
  PoolTrace<T> pool;   // output [C*K][P][P] of activated conv, plus argmax
  Tensor<T> tree_pre;  // [M][C][R]
  Tensor<T> tree_out;  // [M][C][R]
  Tensor<T> logits;    // [outputs]
};

template <typename T>
void check_tree3_shapes(const Tree3Params<T>& params, const Tree3Config& cfg) {
  const auto expect = zero_tree3_params<T>(cfg);
  if (!params.w_conv.same_shape(expect.w_conv)) {
    throw ShapeError("tree3: w_conv shape " + shape_string(params.w_conv.shape()) +
                     ", config requires " + shape_string(expect.w_conv.shape()));
  }
  if (!params.w_tree.same_shape(expect.w_tree)) {
    throw ShapeError("tree3: w_tree shape " + shape_string(params.w_tree.shape()) +
                     ", config requires " + shape_string(expect.w_tree.shape()));
  }
  if (!params.w_fc.same_shape(expect.w_fc)) {
    throw ShapeError("tree3: w_fc shape " + shape_string(params.w_fc.shape()) +
                     ", config requires " + shape_string(expect.w_fc.shape()));
  }
}

template <typename T>
Tree3Trace<T> tree3_forward(const Tree3Params<T>& params, const Tree3Config& cfg,
                            const Tensor<T>& image) {
  cfg.validate();
  check_tree3_shapes(params, cfg);
  const std::size_t c = cfg.channels(), hw = cfg.input_hw();
  if (image.rank() != 3 || image.extent(0) != c || image.extent(1) != hw ||
      image.extent(2) != hw) {
    throw ShapeError("tree3_forward: image shape " + shape_string(image.shape()) +
                     " does not match " + geometry_name(cfg.geometry) + " geometry " +
                     shape_string({c, hw, hw}));
  }

  Tree3Trace<T> trace;
  trace.input = image;
  trace.conv_pre = conv2d_grouped(image, params.w_conv, c);

  Tensor<T> conv_act(trace.conv_pre.shape());
  for (std::size_t i = 0; i < conv_act.size(); ++i) {
    conv_act[i] = activate(cfg.activation, trace.conv_pre[i]);
  }
  trace.pool = maxpool2x2(conv_act);

  const std::size_t p = cfg.pool_hw(), rr = cfg.rect_rows(), nr = cfg.rects();
  trace.tree_pre = Tensor<T>({cfg.m, c, nr});
  trace.tree_out = Tensor<T>({cfg.m, c, nr});
  for (std::size_t b = 0; b < cfg.m; ++b) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      for (std::size_t r = 0; r < nr; ++r) {
        T acc = T(0);
        for (std::size_t k = 0; k < cfg.k; ++k) {
          const T* pool_map = trace.pool.output.data() + (ci * cfg.k + k) * p * p;
          const T* w_map = params.w_tree.data() + (((b * c + ci) * cfg.k + k)) * p * p;
          for (std::size_t i = r * rr; i < (r + 1) * rr; ++i) {
            for (std::size_t j = 0; j < p; ++j) {
              acc += w_map[i * p + j] * pool_map[i * p + j];
            }
          }
        }
        const std::size_t u = cfg.unit_index(b, ci, r);
        trace.tree_pre[u] = acc;
        trace.tree_out[u] = activate(cfg.activation, acc);
      }
    }
  }

  trace.logits = dense_forward(trace.tree_out, params.w_fc);
  return trace;
}

// Ten single-output Tree-3 architectures sharing one convolutional layer; the
// ten scalar outputs form the logits of a joint softmax.
template <typename T>
struct TenTreeParams {
  Tensor<T> w_conv;
  struct Head {
    Tensor<T> w_tree;
    Tensor<T> w_fc;  // [R*C*M][1]
  };
  std::array<Head, 10> heads;

  std::vector<Tensor<T>*> tensors() {
    std::vector<Tensor<T>*> out{&w_conv};
    for (auto& h : heads) {
      out.push_back(&h.w_tree);
      out.push_back(&h.w_fc);
    }
    return out;
  }
  std::vector<const Tensor<T>*> tensors() const {
    std::vector<const Tensor<T>*> out{&w_conv};
    for (const auto& h : heads) {
      out.push_back(&h.w_tree);
      out.push_back(&h.w_fc);
    }
    return out;
  }
};

template <typename T>
struct TenTreeTrace {
  Tensor<T> input;
  Tensor<T> conv_pre;
  PoolTrace<T> pool;
  std::array<Tensor<T>, 10> tree_pre;
  std::array<Tensor<T>, 10> tree_out;
  Tensor<T> logits;  // [10], one scalar per architecture
};

template <typename T>
TenTreeParams<T> zero_ten_tree_params(const Tree3Config& cfg) {
  Tree3Config head_cfg = cfg;
  head_cfg.outputs = 1;
  const auto shaped = zero_tree3_params<T>(head_cfg);
  TenTreeParams<T> params;
  params.w_conv = shaped.w_conv;
  for (auto& head : params.heads) {
    head.w_tree = Tensor<T>(shaped.w_tree.shape());
    head.w_fc = Tensor<T>(shaped.w_fc.shape());
  }
  return params;
}

template <typename T>
TenTreeParams<T> init_ten_tree(const Tree3Config& cfg, std::uint64_t seed,
                               InitScheme scheme = InitScheme::HeNormal) {
  Tree3Config head_cfg = cfg;
  head_cfg.outputs = 1;
  head_cfg.validate();
  TenTreeParams<T> params;
  Rng rng(derive_seed(seed, "init"));
  auto shaped = zero_tree3_params<T>(head_cfg);
  params.w_conv = shaped.w_conv;
  detail::fill_gaussian(params.w_conv, rng,
                        detail::init_stddev(scheme, kFilterSize * kFilterSize, cfg.k * kFilterSize * kFilterSize));
  for (auto& head : params.heads) {
    head.w_tree = Tensor<T>(shaped.w_tree.shape());
    head.w_fc = Tensor<T>(shaped.w_fc.shape());
    detail::fill_gaussian(head.w_tree, rng, detail::init_stddev(scheme, head_cfg.tree_fan_in(), 1));
    detail::fill_gaussian(head.w_fc, rng, detail::init_stddev(scheme, head_cfg.fc_rows(), 1));
  }
  return params;
}

template <typename T>
TenTreeTrace<T> ten_tree_forward(const TenTreeParams<T>& params, const Tree3Config& cfg,
                                 const Tensor<T>& image) {
  Tree3Config head_cfg = cfg;
  head_cfg.outputs = 1;
  head_cfg.validate();
  const std::size_t c = head_cfg.channels(), hw = head_cfg.input_hw();
  if (image.rank() != 3 || image.extent(0) != c || image.extent(1) != hw ||
      image.extent(2) != hw) {
    throw ShapeError("ten_tree_forward: image shape " + shape_string(image.shape()) +
                     " does not match geometry " + shape_string({c, hw, hw}));
  }

  TenTreeTrace<T> trace;
  trace.input = image;
  trace.conv_pre = conv2d_grouped(image, params.w_conv, c);
  Tensor<T> conv_act(trace.conv_pre.shape());
  for (std::size_t i = 0; i < conv_act.size(); ++i) {
    conv_act[i] = activate(head_cfg.activation, trace.conv_pre[i]);
  }
  trace.pool = maxpool2x2(conv_act);

  const std::size_t p = head_cfg.pool_hw(), rr = head_cfg.rect_rows(), nr = head_cfg.rects();
  trace.logits = Tensor<T>({10});
  for (std::size_t arch = 0; arch < 10; ++arch) {
    const auto& head = params.heads[arch];
    Tensor<T> pre({head_cfg.m, c, nr});
    Tensor<T> out({head_cfg.m, c, nr});
    for (std::size_t b = 0; b < head_cfg.m; ++b) {
      for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t r = 0; r < nr; ++r) {
          T acc = T(0);
          for (std::size_t k = 0; k < head_cfg.k; ++k) {
            const T* pool_map = trace.pool.output.data() + (ci * head_cfg.k + k) * p * p;
            const T* w_map = head.w_tree.data() + (((b * c + ci) * head_cfg.k + k)) * p * p;
            for (std::size_t i = r * rr; i < (r + 1) * rr; ++i) {
              for (std::size_t j = 0; j < p; ++j) {
                acc += w_map[i * p + j] * pool_map[i * p + j];
              }
            }
          }
          const std::size_t u = head_cfg.unit_index(b, ci, r);
          pre[u] = acc;
          out[u] = activate(head_cfg.activation, acc);
        }
      }
    }
    trace.logits[arch] = dense_forward(out, head.w_fc)[0];
    trace.tree_pre[arch] = std::move(pre);
    trace.tree_out[arch] = std::move(out);
  }
  return trace;
}

// One row of the layer table (weight/input/output sizes) for shape checks.
struct LayerRow {
  std::string name;
  std::vector<std::size_t> weight;
  std::vector<std::size_t> input;
  std::vector<std::size_t> output;
};

inline std::vector<LayerRow> tree3_layer_table(const Tree3Config& cfg) {
  const std::size_t c = cfg.channels(), k = cfg.k, m = cfg.m;
  const std::size_t hw = cfg.input_hw(), chw = cfg.conv_hw(), p = cfg.pool_hw();
  const std::size_t nr = cfg.rects();
  return {
      {"conv2d", {c, k, 5, 5}, {c, hw, hw}, {c * k, chw, chw}},
      {"maxpool2d", {2, 2}, {c * k, chw, chw}, {c * k, p, p}},
      {"tree_sampling", {c * k, m, p, p}, {c * k, p, p}, {c * m, nr}},
      {"fc", {nr * c * m, cfg.outputs}, {c * m, nr}, {cfg.outputs}},
  };
}

}  // namespace treebp
