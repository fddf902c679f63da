#pragma once

#include <cstdint>
#include <string>

#include "treebp/init.hpp"
#include "treebp/ops.hpp"
#include "treebp/rng.hpp"
#include "treebp/tensor.hpp"

namespace treebp {

// LeNet-5 over 3x32x32 input: two conv+pool stages then three dense layers.
// Widths are adjustable so the feedforward baseline can be shrunk while
// keeping the wiring; canonical widths are 6/16/120/84.
struct LeNet5Config {
  std::size_t c1 = 6;
  std::size_t c2 = 16;
  std::size_t f1 = 120;
  std::size_t f2 = 84;
  Activation activation = Activation::ReLU;
  bool bias = true;

  static constexpr std::size_t kChannels = 3;
  static constexpr std::size_t kInputHW = 32;
  static constexpr std::size_t kOutputs = 10;

  std::size_t flat() const { return c2 * 5 * 5; }

  void validate() const {
    if (c1 == 0 || c2 == 0 || f1 == 0 || f2 == 0) {
      throw ConfigError("lenet5: layer widths must be >= 1");
    }
  }
};

template <typename T>
struct LeNet5Params {
  Tensor<T> conv1;  // [c1][3][5][5]
  Tensor<T> bias1;  // [c1]
  Tensor<T> conv2;  // [c2][c1][5][5]
  Tensor<T> bias2;  // [c2]
  Tensor<T> fc1;    // [flat][f1]
  Tensor<T> bias3;  // [f1]
  Tensor<T> fc2;    // [f1][f2]
  Tensor<T> bias4;  // [f2]
  Tensor<T> fc3;    // [f2][10]
  Tensor<T> bias5;  // [10]

  std::array<Tensor<T>*, 10> tensors() {
    return {&conv1, &bias1, &conv2, &bias2, &fc1, &bias3, &fc2, &bias4, &fc3, &bias5};
  }
  std::array<const Tensor<T>*, 10> tensors() const {
    return {&conv1, &bias1, &conv2, &bias2, &fc1, &bias3, &fc2, &bias4, &fc3, &bias5};
  }

  template <typename U>
  LeNet5Params<U> cast() const {
    return {conv1.template cast<U>(), bias1.template cast<U>(),
            conv2.template cast<U>(), bias2.template cast<U>(),
            fc1.template cast<U>(),   bias3.template cast<U>(),
            fc2.template cast<U>(),   bias4.template cast<U>(),
            fc3.template cast<U>(),   bias5.template cast<U>()};
  }
};

template <typename T>
LeNet5Params<T> zero_lenet5_params(const LeNet5Config& cfg) {
  cfg.validate();
  LeNet5Params<T> p;
  p.conv1 = Tensor<T>({cfg.c1, LeNet5Config::kChannels, kFilterSize, kFilterSize});
  p.bias1 = Tensor<T>({cfg.c1});
  p.conv2 = Tensor<T>({cfg.c2, cfg.c1, kFilterSize, kFilterSize});
  p.bias2 = Tensor<T>({cfg.c2});
  p.fc1 = Tensor<T>({cfg.flat(), cfg.f1});
  p.bias3 = Tensor<T>({cfg.f1});
  p.fc2 = Tensor<T>({cfg.f1, cfg.f2});
  p.bias4 = Tensor<T>({cfg.f2});
  p.fc3 = Tensor<T>({cfg.f2, LeNet5Config::kOutputs});
  p.bias5 = Tensor<T>({LeNet5Config::kOutputs});
  return p;
}

template <typename T>
LeNet5Params<T> init_lenet5(const LeNet5Config& cfg, std::uint64_t seed,
                            InitScheme scheme = InitScheme::HeNormal) {
  auto p = zero_lenet5_params<T>(cfg);
  Rng rng(derive_seed(seed, "init"));
  const std::size_t fs2 = kFilterSize * kFilterSize;
  detail::fill_gaussian(p.conv1, rng, detail::init_stddev(scheme, LeNet5Config::kChannels * fs2, cfg.c1 * fs2));
  detail::fill_gaussian(p.conv2, rng, detail::init_stddev(scheme, cfg.c1 * fs2, cfg.c2 * fs2));
  detail::fill_gaussian(p.fc1, rng, detail::init_stddev(scheme, cfg.flat(), cfg.f1));
  detail::fill_gaussian(p.fc2, rng, detail::init_stddev(scheme, cfg.f1, cfg.f2));
  detail::fill_gaussian(p.fc3, rng, detail::init_stddev(scheme, cfg.f2, LeNet5Config::kOutputs));
  // biases stay zero
  return p;
}

template <typename T>
struct LeNet5Trace {
  Tensor<T> input;     // [3][32][32]
  Tensor<T> c1_pre;    // [c1][28][28]
  PoolTrace<T> pool1;  // [c1][14][14]
  Tensor<T> c2_pre;    // [c2][10][10]
  PoolTrace<T> pool2;  // [c2][5][5]
  Tensor<T> f1_pre, f1_out;  // [f1]
  Tensor<T> f2_pre, f2_out;  // [f2]
  Tensor<T> logits;          // [10]
};

template <typename T>
LeNet5Trace<T> lenet5_forward(const LeNet5Params<T>& params, const LeNet5Config& cfg,
                              const Tensor<T>& image) {
  cfg.validate();
  if (image.rank() != 3 || image.extent(0) != LeNet5Config::kChannels ||
      image.extent(1) != LeNet5Config::kInputHW ||
      image.extent(2) != LeNet5Config::kInputHW) {
    throw ShapeError("lenet5_forward: image shape " + shape_string(image.shape()) +
                     ", expected " + shape_string({3, 32, 32}));
  }

  LeNet5Trace<T> trace;
  trace.input = image;
  trace.c1_pre = conv2d_full(image, params.conv1, cfg.bias ? &params.bias1 : nullptr);
  Tensor<T> a1(trace.c1_pre.shape());
  for (std::size_t i = 0; i < a1.size(); ++i) a1[i] = activate(cfg.activation, trace.c1_pre[i]);
  trace.pool1 = maxpool2x2(a1);

  trace.c2_pre = conv2d_full(trace.pool1.output, params.conv2, cfg.bias ? &params.bias2 : nullptr);
  Tensor<T> a2(trace.c2_pre.shape());
  for (std::size_t i = 0; i < a2.size(); ++i) a2[i] = activate(cfg.activation, trace.c2_pre[i]);
  trace.pool2 = maxpool2x2(a2);

  trace.f1_pre = dense_forward(trace.pool2.output, params.fc1, cfg.bias ? &params.bias3 : nullptr);
  trace.f1_out = Tensor<T>({cfg.f1});
  for (std::size_t i = 0; i < cfg.f1; ++i) trace.f1_out[i] = activate(cfg.activation, trace.f1_pre[i]);

  trace.f2_pre = dense_forward(trace.f1_out, params.fc2, cfg.bias ? &params.bias4 : nullptr);
  trace.f2_out = Tensor<T>({cfg.f2});
  for (std::size_t i = 0; i < cfg.f2; ++i) trace.f2_out[i] = activate(cfg.activation, trace.f2_pre[i]);

  trace.logits = dense_forward(trace.f2_out, params.fc3, cfg.bias ? &params.bias5 : nullptr);
  return trace;
}

}  // namespace treebp
