#pragma once

// Independent naive-loop implementations used as oracles by the test suite.
// Everything here is written directly from the architectural definitions with
// plain quadruple loops and double accumulators -- no code shared with the
// library under test.

#include <cmath>
#include <cstddef>
#include <vector>

#include "treebp/lenet5.hpp"
#include "treebp/tensor.hpp"
#include "treebp/tree3.hpp"

namespace oracle {

using treebp::Activation;
using treebp::Geometry;
using treebp::LeNet5Config;
using treebp::LeNet5Params;
using treebp::Tensor;
using treebp::Tree3Config;
using treebp::Tree3Params;

inline double act(Activation a, double x) {
  if (a == Activation::ReLU) return x > 0.0 ? x : 0.0;
  return 1.0 / (1.0 + std::exp(-x));
}

// Valid 5x5 convolution of one input channel with one filter.
inline std::vector<double> conv_one(const std::vector<double>& in, std::size_t h,
                                    std::size_t w, const std::vector<double>& f) {
  const std::size_t oh = h - 4, ow = w - 4;
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (std::size_t u = 0; u < 5; ++u)
        for (std::size_t v = 0; v < 5; ++v) s += f[u * 5 + v] * in[(i + u) * w + j + v];
      out[i * ow + j] = s;
    }
  return out;
}

inline std::vector<double> pool2(const std::vector<double>& in, std::size_t h,
                                 std::size_t w) {
  std::vector<double> out((h / 2) * (w / 2));
  for (std::size_t i = 0; i < h / 2; ++i)
    for (std::size_t j = 0; j < w / 2; ++j) {
      double best = in[(2 * i) * w + 2 * j];
      for (std::size_t u = 0; u < 2; ++u)
        for (std::size_t v = 0; v < 2; ++v)
          best = std::max(best, in[(2 * i + u) * w + 2 * j + v]);
      out[i * (w / 2) + j] = best;
    }
  return out;
}

struct Tree3Out {
  std::vector<double> tree_pre;  // [M][C][R] flattened as (b*C+c)*R + r
  std::vector<double> tree_out;
  std::vector<double> logits;
};

// Forward pass for the tree architecture, written from its definition: shared
// grouped conv, activation, 2x2 max pool, per-branch banded tree sums over the
// K filter maps, activation, dense head.
template <typename T>
Tree3Out tree3_forward(const Tree3Params<T>& p, const Tree3Config& cfg,
                       const Tensor<T>& image) {
  const std::size_t C = cfg.channels(), K = cfg.k, M = cfg.m;
  const std::size_t HW = cfg.input_hw(), CH = HW - 4, P = CH / 2;
  const std::size_t RR = cfg.rect_rows(), R = cfg.rects(), OUT = cfg.outputs;

  std::vector<std::vector<double>> pooled(C * K);
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<double> in(HW * HW);
    for (std::size_t i = 0; i < HW * HW; ++i) in[i] = double(image[c * HW * HW + i]);
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> f(25);
      for (std::size_t i = 0; i < 25; ++i)
        f[i] = double(p.w_conv[(c * K + k) * 25 + i]);
      auto pre = conv_one(in, HW, HW, f);
      for (auto& x : pre) x = act(cfg.activation, x);
      pooled[c * K + k] = pool2(pre, CH, CH);
    }
  }

  Tree3Out out;
  out.tree_pre.assign(M * C * R, 0.0);
  out.tree_out.assign(M * C * R, 0.0);
  for (std::size_t b = 0; b < M; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t r = 0; r < R; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t i = r * RR; i < (r + 1) * RR; ++i)
            for (std::size_t j = 0; j < P; ++j)
              s += double(p.w_tree[(((b * C + c) * K + k) * P + i) * P + j]) *
                   pooled[c * K + k][i * P + j];
        const std::size_t u = (b * C + c) * R + r;
        out.tree_pre[u] = s;
        out.tree_out[u] = act(cfg.activation, s);
      }

  out.logits.assign(OUT, 0.0);
  for (std::size_t i = 0; i < M * C * R; ++i)
    for (std::size_t o = 0; o < OUT; ++o)
      out.logits[o] += out.tree_out[i] * double(p.w_fc[i * OUT + o]);
  return out;
}

inline double xent(const std::vector<double>& logits, int label) {
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  double denom = 0.0;
  for (double z : logits) denom += std::exp(z - mx);
  return std::log(denom) - (logits[label] - mx);
}

template <typename T>
double tree3_loss(const Tree3Params<T>& p, const Tree3Config& cfg,
                  const Tensor<T>& image, int label) {
  return xent(oracle::tree3_forward(p, cfg, image).logits, label);
}

struct LeNetOut {
  std::vector<double> logits;
};

template <typename T>
LeNetOut lenet5_forward(const LeNet5Params<T>& p, const LeNet5Config& cfg,
                        const Tensor<T>& image) {
  const std::size_t C = LeNet5Config::kChannels, HW = LeNet5Config::kInputHW;
  const Activation a = cfg.activation;

  auto full_conv = [&](const std::vector<std::vector<double>>& in, std::size_t h,
                       std::size_t w, const Tensor<T>& filt, const Tensor<T>& bias,
                       std::size_t nf) {
    std::vector<std::vector<double>> maps(nf);
    const std::size_t nc = in.size();
    for (std::size_t f = 0; f < nf; ++f) {
      std::vector<double> m((h - 4) * (w - 4), cfg.bias ? double(bias[f]) : 0.0);
      for (std::size_t c = 0; c < nc; ++c) {
        std::vector<double> fl(25);
        for (std::size_t i = 0; i < 25; ++i) fl[i] = double(filt[(f * nc + c) * 25 + i]);
        auto one = conv_one(in[c], h, w, fl);
        for (std::size_t i = 0; i < one.size(); ++i) m[i] += one[i];
      }
      for (auto& x : m) x = act(a, x);
      maps[f] = pool2(m, h - 4, w - 4);
    }
    return maps;
  };

  std::vector<std::vector<double>> in(C);
  for (std::size_t c = 0; c < C; ++c) {
    in[c].resize(HW * HW);
    for (std::size_t i = 0; i < HW * HW; ++i) in[c][i] = double(image[c * HW * HW + i]);
  }
  auto p1 = full_conv(in, HW, HW, p.conv1, p.bias1, cfg.c1);      // [c1] 14x14
  auto p2 = full_conv(p1, 14, 14, p.conv2, p.bias2, cfg.c2);      // [c2] 5x5

  std::vector<double> flat;
  for (const auto& m : p2) flat.insert(flat.end(), m.begin(), m.end());

  auto dense = [&](const std::vector<double>& x, const Tensor<T>& w,
                   const Tensor<T>& bias, std::size_t nout, bool activated) {
    std::vector<double> y(nout, 0.0);
    for (std::size_t o = 0; o < nout; ++o) {
      double s = cfg.bias ? double(bias[o]) : 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * double(w[i * nout + o]);
      y[o] = activated ? act(a, s) : s;
    }
    return y;
  };
  auto f1 = dense(flat, p.fc1, p.bias3, cfg.f1, true);
  auto f2 = dense(f1, p.fc2, p.bias4, cfg.f2, true);
  LeNetOut out;
  out.logits = dense(f2, p.fc3, p.bias5, LeNet5Config::kOutputs, false);
  return out;
}

template <typename T>
double lenet5_loss(const LeNet5Params<T>& p, const LeNet5Config& cfg,
                   const Tensor<T>& image, int label) {
  return xent(oracle::lenet5_forward(p, cfg, image).logits, label);
}

// Central-difference derivative of the oracle loss w.r.t. one entry of one
// parameter tensor (tensors indexed in the library's tensors() order).
template <typename Params, typename LossFn>
double fd_grad(Params params, std::size_t tensor, std::size_t index, double eps,
               LossFn loss) {
  auto ts = params.tensors();
  auto& t = *ts[tensor];
  const auto orig = t[index];
  t[index] = orig + eps;
  const double up = loss(params);
  t[index] = orig - eps;
  const double down = loss(params);
  t[index] = orig;
  return (up - down) / (2.0 * eps);
}

}  // namespace oracle
