#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "treebp/tensor.hpp"

namespace treebp {

enum class Activation { ReLU, Sigmoid };

inline const char* activation_name(Activation a) {
  return a == Activation::ReLU ? "relu" : "sigmoid";
}

template <typename T>
inline T activate(Activation a, T x) {
  if (a == Activation::ReLU) return x > T(0) ? x : T(0);
  return T(1) / (T(1) + std::exp(-x));
}

// Derivative evaluated from the *activated* output. For ReLU this equals the
// pre-activation rule with ReLU'(0) = 0, since out > 0 iff pre > 0.
template <typename T>
inline T activation_deriv_from_output(Activation a, T out) {
  if (a == Activation::ReLU) return out > T(0) ? T(1) : T(0);
  return out * (T(1) - out);
}

inline constexpr std::size_t kFilterSize = 5;

// Grouped valid convolution: each input channel is convolved with its own set
// of K filters. input [C][H][W], filters [C][K][5][5], output [C*K][H-4][W-4].
// Stride 1, no padding, no bias.
template <typename T>
Tensor<T> conv2d_grouped(const Tensor<T>& input, const Tensor<T>& filters,
                         std::size_t groups) {
  if (input.rank() != 3) {
    throw ShapeError("conv2d_grouped: input rank " + std::to_string(input.rank()) +
                     ", expected 3 (CxHxW)");
  }
  if (filters.rank() != 4) {
    throw ShapeError("conv2d_grouped: filters rank " + std::to_string(filters.rank()) +
                     ", expected 4 (CxKx5x5)");
  }
  const std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
  if (groups != c) {
    throw ShapeError("conv2d_grouped: groups " + std::to_string(groups) +
                     " must equal input channel count " + std::to_string(c));
  }
  if (filters.extent(0) != c) {
    throw ShapeError("conv2d_grouped: filter channel extent " +
                     std::to_string(filters.extent(0)) + " != input channels " +
                     std::to_string(c));
  }
  if (filters.extent(2) != kFilterSize || filters.extent(3) != kFilterSize) {
    throw ShapeError("conv2d_grouped: filter spatial extents " +
                     shape_string({filters.extent(2), filters.extent(3)}) +
                     ", expected (5x5)");
  }
  if (h < kFilterSize || w < kFilterSize) {
    throw ShapeError("conv2d_grouped: input spatial extents " + shape_string({h, w}) +
                     " smaller than the 5x5 filter");
  }
  const std::size_t k = filters.extent(1);
  const std::size_t oh = h - kFilterSize + 1, ow = w - kFilterSize + 1;

  Tensor<T> out({c * k, oh, ow});
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* in_ch = input.data() + ci * h * w;
    for (std::size_t ki = 0; ki < k; ++ki) {
      const T* f = filters.data() + (ci * k + ki) * kFilterSize * kFilterSize;
      T* o = out.data() + (ci * k + ki) * oh * ow;
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          T acc = T(0);
          for (std::size_t u = 0; u < kFilterSize; ++u) {
            const T* row = in_ch + (i + u) * w + j;
            const T* frow = f + u * kFilterSize;
            for (std::size_t v = 0; v < kFilterSize; ++v) acc += frow[v] * row[v];
          }
          o[i * ow + j] = acc;
        }
      }
    }
  }
  return out;
}

// Full-depth valid convolution: input [C][H][W], filters [F][C][5][5],
// optional bias [F]; output [F][H-4][W-4].
template <typename T>
Tensor<T> conv2d_full(const Tensor<T>& input, const Tensor<T>& filters,
                      const Tensor<T>* bias = nullptr) {
  if (input.rank() != 3) {
    throw ShapeError("conv2d_full: input rank " + std::to_string(input.rank()) +
                     ", expected 3 (CxHxW)");
  }
  if (filters.rank() != 4) {
    throw ShapeError("conv2d_full: filters rank " + std::to_string(filters.rank()) +
                     ", expected 4 (FxCx5x5)");
  }
  const std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
  if (filters.extent(1) != c) {
    throw ShapeError("conv2d_full: filter depth " + std::to_string(filters.extent(1)) +
                     " != input channels " + std::to_string(c));
  }
  if (filters.extent(2) != kFilterSize || filters.extent(3) != kFilterSize) {
    throw ShapeError("conv2d_full: filter spatial extents " +
                     shape_string({filters.extent(2), filters.extent(3)}) +
                     ", expected (5x5)");
  }
  if (h < kFilterSize || w < kFilterSize) {
    throw ShapeError("conv2d_full: input spatial extents " + shape_string({h, w}) +
                     " smaller than the 5x5 filter");
  }
  const std::size_t nf = filters.extent(0);
  if (bias && bias->size() != nf) {
    throw ShapeError("conv2d_full: bias length " + std::to_string(bias->size()) +
                     " != filter count " + std::to_string(nf));
  }
  const std::size_t oh = h - kFilterSize + 1, ow = w - kFilterSize + 1;

  Tensor<T> out({nf, oh, ow});
  for (std::size_t f = 0; f < nf; ++f) {
    T* o = out.data() + f * oh * ow;
    const T b = bias ? (*bias)[f] : T(0);
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        T acc = b;
        for (std::size_t ci = 0; ci < c; ++ci) {
          const T* in_ch = input.data() + ci * h * w;
          const T* fk = filters.data() + (f * c + ci) * kFilterSize * kFilterSize;
          for (std::size_t u = 0; u < kFilterSize; ++u) {
            const T* row = in_ch + (i + u) * w + j;
            const T* frow = fk + u * kFilterSize;
            for (std::size_t v = 0; v < kFilterSize; ++v) acc += frow[v] * row[v];
          }
        }
        o[i * ow + j] = acc;
      }
    }
  }
  return out;
}

// Output of 2x2/stride-2 max pooling plus the window-local index (0..3,
// row-major within the window) of each winning element. Ties go to the lowest
// index so backward passes replay deterministically.
template <typename T>
struct PoolTrace {
  Tensor<T> output;
  std::vector<std::uint8_t> argmax;  // one entry per pooled cell, in output order
};

template <typename T>
PoolTrace<T> maxpool2x2(const Tensor<T>& input) {
  if (input.rank() != 3) {
    throw ShapeError("maxpool2x2: input rank " + std::to_string(input.rank()) +
                     ", expected 3 (CxHxW)");
  }
  const std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
  if (h % 2 != 0) {
    throw ShapeError("maxpool2x2: height " + std::to_string(h) + " is odd");
  }
  if (w % 2 != 0) {
    throw ShapeError("maxpool2x2: width " + std::to_string(w) + " is odd");
  }
  const std::size_t oh = h / 2, ow = w / 2;

  PoolTrace<T> trace;
  trace.output = Tensor<T>({c, oh, ow});
  trace.argmax.resize(c * oh * ow);
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* in_ch = input.data() + ci * h * w;
    T* o = trace.output.data() + ci * oh * ow;
    std::uint8_t* am = trace.argmax.data() + ci * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        T best = in_ch[(2 * i) * w + 2 * j];
        std::uint8_t best_ix = 0;
        for (std::uint8_t ix = 1; ix < 4; ++ix) {
          const T v = in_ch[(2 * i + ix / 2) * w + 2 * j + ix % 2];
          if (v > best) {
            best = v;
            best_ix = ix;
          }
        }
        o[i * ow + j] = best;
        am[i * ow + j] = best_ix;
      }
    }
  }
  return trace;
}

// out[j] = sum_i input[i] * weights[i][j] (+ bias[j] when given).
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights,
                        const Tensor<T>* bias = nullptr) {
  if (weights.rank() != 2) {
    throw ShapeError("dense_forward: weights rank " + std::to_string(weights.rank()) +
                     ", expected 2 (n x m)");
  }
  const std::size_t n = weights.extent(0), m = weights.extent(1);
  if (input.size() != n) {
    throw ShapeError("dense_forward: input length " + std::to_string(input.size()) +
                     " != weight rows " + std::to_string(n));
  }
  if (bias && bias->size() != m) {
    throw ShapeError("dense_forward: bias length " + std::to_string(bias->size()) +
                     " != weight cols " + std::to_string(m));
  }
  Tensor<T> out({m});
  for (std::size_t j = 0; j < m; ++j) out[j] = bias ? (*bias)[j] : T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = input[i];
    const T* wrow = weights.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) out[j] += x * wrow[j];
  }
  return out;
}

template <typename T>
struct XentResult {
  T loss;
  Tensor<T> dlogits;  // softmax(logits) - onehot(label)
};

// Cross-entropy of softmax(logits) against `label`, with max-subtraction for
// stability. Also returns the gradient w.r.t. the logits.
template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, int label) {
  const std::size_t n = logits.size();
  if (label < 0 || static_cast<std::size_t>(label) >= n) {
    throw ShapeError("softmax_xent: label " + std::to_string(label) +
                     " outside 0.." + std::to_string(n - 1));
  }
  T max_logit = logits[0];
  for (std::size_t i = 1; i < n; ++i) max_logit = std::max(max_logit, logits[i]);

  XentResult<T> r;
  r.dlogits = Tensor<T>({n});
  T denom = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T e = std::exp(logits[i] - max_logit);
    r.dlogits[i] = e;
    denom += e;
  }
  for (std::size_t i = 0; i < n; ++i) r.dlogits[i] /= denom;
  r.loss = -std::log(r.dlogits[static_cast<std::size_t>(label)]);
  r.dlogits[static_cast<std::size_t>(label)] -= T(1);
  return r;
}

}  // namespace treebp
