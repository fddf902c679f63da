#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "treebp/lenet5.hpp"
#include "treebp/ops.hpp"
#include "treebp/routes.hpp"
#include "treebp/tensor.hpp"
#include "treebp/tree3.hpp"

namespace treebp {

// Per-layer gradient sparsity, counted at route granularity: the conv layer is
// counted per (tap, channel, filter, conv position, branch) instance, tree and
// FC layers per weight (each has a single route).
struct ZeroCount {
  std::uint64_t zeros = 0;
  std::uint64_t total = 0;

  double fraction() const { return total == 0 ? 0.0 : double(zeros) / double(total); }
};

template <typename T>
struct Tree3Grads {
  Tree3Params<T> g;
  std::array<ZeroCount, 3> zero_counts;  // conv, tree, fc
  double loss = 0.0;
};

template <typename T>
struct LeNet5Grads {
  LeNet5Params<T> g;
  std::array<ZeroCount, 5> zero_counts;  // conv1, conv2, fc1, fc2, fc3
  double loss = 0.0;
};

template <typename T>
struct TenTreeGrads {
  TenTreeParams<T> g;
  std::array<ZeroCount, 3> zero_counts;  // aggregated over the 10 architectures
  double loss = 0.0;
};

inline const std::array<const char*, 3>& tree3_layer_names() {
  static const std::array<const char*, 3> names = {"conv", "tree", "fc"};
  return names;
}

inline const std::array<const char*, 5>& lenet5_layer_names() {
  static const std::array<const char*, 5> names = {"conv1", "conv2", "fc1", "fc2", "fc3"};
  return names;
}

namespace detail {

// Gates and derivatives are evaluated in double regardless of T so that the
// reference and pruned passes follow bit-identical arithmetic.
inline double deriv_from_output(Activation a, double y) {
  if (a == Activation::ReLU) return y > 0.0 ? 1.0 : 0.0;
  return y * (1.0 - y);
}

template <typename T>
void validate_tree3_trace(const Tree3Config& cfg, const Tree3Trace<T>& trace) {
  const std::size_t c = cfg.channels(), hw = cfg.input_hw();
  const std::size_t maps = c * cfg.k, chw = cfg.conv_hw(), p = cfg.pool_hw();
  const std::size_t units = cfg.m * c * cfg.rects();
  auto fail = [](const std::string& what) {
    throw ShapeError("tree3 backward: trace does not match config (" + what + ")");
  };
  if (trace.input.rank() != 3 || trace.input.extent(0) != c ||
      trace.input.extent(1) != hw || trace.input.extent(2) != hw)
    fail("input " + shape_string(trace.input.shape()));
  if (trace.conv_pre.rank() != 3 || trace.conv_pre.extent(0) != maps ||
      trace.conv_pre.extent(1) != chw || trace.conv_pre.extent(2) != chw)
    fail("conv_pre " + shape_string(trace.conv_pre.shape()));
  if (trace.pool.output.rank() != 3 || trace.pool.output.extent(0) != maps ||
      trace.pool.output.extent(1) != p || trace.pool.output.extent(2) != p)
    fail("pool output " + shape_string(trace.pool.output.shape()));
  if (trace.pool.argmax.size() != trace.pool.output.size()) fail("pool argmax length");
  if (trace.tree_out.size() != units) fail("tree_out size");
  if (trace.logits.size() != cfg.outputs) fail("logits length");
}

// Number of nonzero input pixels under each 5x5 window, indexed by conv
// position; used for route-instance accounting of the conv layer.
template <typename T>
std::vector<std::uint16_t> nonzero_tap_counts(const Tensor<T>& input, std::size_t chw) {
  const std::size_t c = input.extent(0), hw = input.extent(1);
  std::vector<std::uint16_t> nz(c * chw * chw);
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* in_ch = input.data() + ci * hw * hw;
    for (std::size_t x = 0; x < chw; ++x) {
      for (std::size_t y = 0; y < chw; ++y) {
        std::uint16_t n = 0;
        for (std::size_t u = 0; u < kFilterSize; ++u) {
          const T* row = in_ch + (x + u) * hw + y;
          for (std::size_t v = 0; v < kFilterSize; ++v) n += (row[v] != T(0));
        }
        nz[(ci * chw + x) * chw + y] = n;
      }
    }
  }
  return nz;
}

// Route-level zero/total counts for one example. The gradient value of a conv
// route instance is input_tap * sigma'_conv * w_tree * d_tree_pre; it is zero
// iff any factor is zero (pool losers count as zero instances). Tree and FC
// instances are the per-weight products d_tree_pre * pool and tree_out *
// dlogit. All tests are exact comparisons against 0.
template <typename T>
std::array<ZeroCount, 3> count_zero_routes(const Tree3Params<T>& params,
                                           const Tree3Config& cfg,
                                           const Tree3Trace<T>& trace,
                                           const Tensor<double>& d_tree_pre,
                                           const std::vector<double>& dlogits) {
  const std::size_t C = cfg.channels(), K = cfg.k, M = cfg.m, R = cfg.rects();
  const std::size_t P = cfg.pool_hw(), RR = cfg.rect_rows(), CHW = cfg.conv_hw();

  std::array<ZeroCount, 3> counts;
  counts[0].total = count_gradient_instances_tree3(cfg);
  counts[1].total = std::uint64_t(M) * C * K * P * P;
  counts[2].total = std::uint64_t(cfg.fc_rows()) * cfg.outputs;

  const auto nz_taps = nonzero_tap_counts(trace.input, CHW);

  // Zero pooled cells per (map, rectangle), shared by the tree-layer count.
  std::vector<std::uint32_t> zero_cells(C * K * R, 0);
  for (std::size_t map = 0; map < C * K; ++map) {
    const T* po = trace.pool.output.data() + map * P * P;
    for (std::size_t i = 0; i < P; ++i) {
      const std::size_t r = i / RR;
      for (std::size_t j = 0; j < P; ++j) {
        if (po[i * P + j] == T(0)) ++zero_cells[map * R + r];
      }
    }
  }

  std::uint64_t conv_nonzero = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t map = c * K + k;
      const T* po = trace.pool.output.data() + map * P * P;
      const std::uint8_t* am = trace.pool.argmax.data() + map * P * P;
      for (std::size_t i = 0; i < P; ++i) {
        const std::size_t r = i / RR;
        for (std::size_t j = 0; j < P; ++j) {
          const double y = double(po[i * P + j]);
          if (deriv_from_output(cfg.activation, y) == 0.0) continue;
          const std::uint8_t w = am[i * P + j];
          const std::size_t x = 2 * i + w / 2, yy = 2 * j + w % 2;
          const std::uint64_t taps = nz_taps[(c * CHW + x) * CHW + yy];
          if (taps == 0) continue;
          for (std::size_t b = 0; b < M; ++b) {
            if (d_tree_pre[(b * C + c) * R + r] == 0.0) continue;
            if (params.w_tree[(((b * C + c) * K + k) * P + i) * P + j] == T(0)) continue;
            conv_nonzero += taps;
          }
        }
      }
    }
  }
  counts[0].zeros = counts[0].total - conv_nonzero;

  const std::uint64_t cells_per_rect = std::uint64_t(RR) * P;
  for (std::size_t b = 0; b < M; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t r = 0; r < R; ++r) {
        if (d_tree_pre[(b * C + c) * R + r] == 0.0) {
          counts[1].zeros += K * cells_per_rect;
        } else {
          for (std::size_t k = 0; k < K; ++k) {
            counts[1].zeros += zero_cells[(c * K + k) * R + r];
          }
        }
      }
    }
  }

  std::uint64_t zero_dlogits = 0;
  for (double d : dlogits) zero_dlogits += (d == 0.0);
  for (std::size_t u = 0; u < cfg.fc_rows(); ++u) {
    counts[2].zeros +=
        (trace.tree_out[u] == T(0)) ? cfg.outputs : zero_dlogits;
  }
  return counts;
}

}  // namespace detail

// Reference backward: the plain chain rule through FC, tree sampling, pooling
// (argmax routing) and the grouped conv, with sigma' factors for every layer.
// Accumulators are double; per-(filter, pooled position) contributions are
// added in row-major pooled order with the branch sum innermost — the same
// canonical order the pruned pass uses, which is what makes the two passes
// comparable at full precision. Stored values are x + 0.0 to normalize -0.
template <typename T>
Tree3Grads<T> backward_reference(const Tree3Params<T>& params, const Tree3Config& cfg,
                                 const Tree3Trace<T>& trace, int label) {
  cfg.validate();
  check_tree3_shapes(params, cfg);
  detail::validate_tree3_trace(cfg, trace);

  const std::size_t C = cfg.channels(), K = cfg.k, M = cfg.m, R = cfg.rects();
  const std::size_t P = cfg.pool_hw(), RR = cfg.rect_rows(), HW = cfg.input_hw();
  const std::size_t OUT = cfg.outputs;

  Tree3Grads<T> out;
  out.g = zero_tree3_params<T>(cfg);

  const auto xent = softmax_xent(trace.logits, label);
  out.loss = double(xent.loss);
  std::vector<double> dl(OUT);
  for (std::size_t o = 0; o < OUT; ++o) dl[o] = double(xent.dlogits[o]);

  // FC gradients and tree-unit deltas.
  Tensor<double> dpre({M, C, R});
  for (std::size_t u = 0; u < M * C * R; ++u) {
    const double y = double(trace.tree_out[u]);
    const T* wrow = params.w_fc.data() + u * OUT;
    T* grow = out.g.w_fc.data() + u * OUT;
    double dout = 0.0;
    for (std::size_t o = 0; o < OUT; ++o) {
      dout += double(wrow[o]) * dl[o];
      grow[o] = T(y * dl[o] + 0.0);
    }
    dpre[u] = detail::deriv_from_output(cfg.activation, y) * dout;
  }

  // Tree gradients: single product per weight.
  for (std::size_t b = 0; b < M; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < K; ++k) {
        const T* po = trace.pool.output.data() + (c * K + k) * P * P;
        T* gt = out.g.w_tree.data() + ((b * C + c) * K + k) * P * P;
        for (std::size_t i = 0; i < P; ++i) {
          const double d = dpre[(b * C + c) * R + i / RR];
          for (std::size_t j = 0; j < P; ++j) {
            gt[i * P + j] = T(d * double(po[i * P + j]) + 0.0);
          }
        }
      }
    }
  }

  // Conv gradients: route through the pool argmax and conv sigma', summing the
  // branch contributions at every pooled position.
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t map = c * K + k;
      const T* po = trace.pool.output.data() + map * P * P;
      const std::uint8_t* am = trace.pool.argmax.data() + map * P * P;
      const T* in_ch = trace.input.data() + c * HW * HW;
      std::array<double, kFilterSize * kFilterSize> acc{};
      for (std::size_t i = 0; i < P; ++i) {
        const std::size_t r = i / RR;
        for (std::size_t j = 0; j < P; ++j) {
          double s = 0.0;
          for (std::size_t b = 0; b < M; ++b) {
            s += dpre[(b * C + c) * R + r] *
                 double(params.w_tree[(((b * C + c) * K + k) * P + i) * P + j]);
          }
          const double sg =
              s * detail::deriv_from_output(cfg.activation, double(po[i * P + j]));
          const std::uint8_t w = am[i * P + j];
          const std::size_t x = 2 * i + w / 2, y = 2 * j + w % 2;
          for (std::size_t u = 0; u < kFilterSize; ++u) {
            const T* row = in_ch + (x + u) * HW + y;
            for (std::size_t v = 0; v < kFilterSize; ++v) {
              acc[u * kFilterSize + v] += sg * double(row[v]);
            }
          }
        }
      }
      T* gf = out.g.w_conv.data() + map * kFilterSize * kFilterSize;
      for (std::size_t t = 0; t < kFilterSize * kFilterSize; ++t) gf[t] = T(acc[t] + 0.0);
    }
  }

  out.zero_counts = detail::count_zero_routes(params, cfg, trace, dpre, dl);
  return out;
}

// Pruned backward for ReLU Tree-3: enumerates active routes only. A conv route
// is active iff its conv pre-activation is positive, it won its pool window,
// and its downstream tree unit is active; the contribution is then the plain
// product input * w_tree * w_fc * (softmax - onehot) because every sigma' on
// the route equals 1. Inactive routes are never materialized. Work per example
// scales with the number of active tree units and active pool winners, not
// with the total route count.
template <typename T>
Tree3Grads<T> backward_pruned_tree3(const Tree3Params<T>& params, const Tree3Config& cfg,
                                    const Tree3Trace<T>& trace, int label) {
  if (cfg.activation != Activation::ReLU) {
    throw ConfigError(
        "backward_pruned_tree3: the single-route product formula holds only for ReLU "
        "(sigmoid nets must use backward_reference)");
  }
  cfg.validate();
  check_tree3_shapes(params, cfg);
  detail::validate_tree3_trace(cfg, trace);

  const std::size_t C = cfg.channels(), K = cfg.k, M = cfg.m, R = cfg.rects();
  const std::size_t P = cfg.pool_hw(), RR = cfg.rect_rows(), HW = cfg.input_hw();
  const std::size_t OUT = cfg.outputs;

  Tree3Grads<T> out;
  out.g = zero_tree3_params<T>(cfg);

  const auto xent = softmax_xent(trace.logits, label);
  out.loss = double(xent.loss);
  std::vector<double> dl(OUT);
  for (std::size_t o = 0; o < OUT; ++o) dl[o] = double(xent.dlogits[o]);

  // Active tree units (tree_pre > 0 iff tree_out > 0 under ReLU); their deltas
  // and FC gradient rows. Inactive rows stay zero without being touched.
  Tensor<double> dpre({M, C, R});
  std::vector<std::vector<std::uint32_t>> active(C * R);
  for (std::size_t b = 0; b < M; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t r = 0; r < R; ++r) {
        const std::size_t u = (b * C + c) * R + r;
        const double y = double(trace.tree_out[u]);
        if (y <= 0.0) continue;
        const T* wrow = params.w_fc.data() + u * OUT;
        T* grow = out.g.w_fc.data() + u * OUT;
        double dout = 0.0;
        for (std::size_t o = 0; o < OUT; ++o) {
          dout += double(wrow[o]) * dl[o];
          grow[o] = T(y * dl[o] + 0.0);
        }
        dpre[u] = dout;
        if (dout != 0.0) active[c * R + r].push_back(std::uint32_t(b));
      }
    }
  }

  // Tree gradients only where both ends of the route are live.
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < R; ++r) {
      for (std::uint32_t b : active[c * R + r]) {
        const double d = dpre[(b * C + c) * R + r];
        for (std::size_t k = 0; k < K; ++k) {
          const T* po = trace.pool.output.data() + (c * K + k) * P * P;
          T* gt = out.g.w_tree.data() + ((b * C + c) * K + k) * P * P;
          for (std::size_t i = r * RR; i < (r + 1) * RR; ++i) {
            for (std::size_t j = 0; j < P; ++j) {
              const double p = double(po[i * P + j]);
              if (p != 0.0) gt[i * P + j] = T(d * p + 0.0);
            }
          }
        }
      }
    }
  }

  // Conv gradients: visit pooled positions in the same row-major order as the
  // reference pass, but skip closed gates and inactive branches. Skipped terms
  // are exactly zero, so the double accumulators match the reference bit for
  // bit.
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t map = c * K + k;
      const T* po = trace.pool.output.data() + map * P * P;
      const std::uint8_t* am = trace.pool.argmax.data() + map * P * P;
      const T* in_ch = trace.input.data() + c * HW * HW;
      std::array<double, kFilterSize * kFilterSize> acc{};
      for (std::size_t i = 0; i < P; ++i) {
        const std::size_t r = i / RR;
        const auto& act_b = active[c * R + r];
        if (act_b.empty()) continue;
        for (std::size_t j = 0; j < P; ++j) {
          if (po[i * P + j] <= T(0)) continue;  // pool winner's conv pre <= 0
          double s = 0.0;
          for (std::uint32_t b : act_b) {
            s += dpre[(b * C + c) * R + r] *
                 double(params.w_tree[(((b * C + c) * K + k) * P + i) * P + j]);
          }
          if (s == 0.0) continue;
          const std::uint8_t w = am[i * P + j];
          const std::size_t x = 2 * i + w / 2, y = 2 * j + w % 2;
          for (std::size_t u = 0; u < kFilterSize; ++u) {
            const T* row = in_ch + (x + u) * HW + y;
            for (std::size_t v = 0; v < kFilterSize; ++v) {
              acc[u * kFilterSize + v] += s * double(row[v]);
            }
          }
        }
      }
      T* gf = out.g.w_conv.data() + map * kFilterSize * kFilterSize;
      for (std::size_t t = 0; t < kFilterSize * kFilterSize; ++t) gf[t] = T(acc[t] + 0.0);
    }
  }

  out.zero_counts = detail::count_zero_routes(params, cfg, trace, dpre, dl);
  return out;
}

namespace detail {
template <typename T>
void validate_lenet5_trace(const LeNet5Config& cfg, const LeNet5Trace<T>& trace) {
  auto fail = [](const std::string& what) {
    throw ShapeError("lenet5 backward: trace does not match config (" + what + ")");
  };
  if (trace.input.size() != 3 * 32 * 32) fail("input");
  if (trace.c1_pre.size() != cfg.c1 * 28 * 28) fail("c1_pre");
  if (trace.pool1.output.size() != cfg.c1 * 14 * 14) fail("pool1");
  if (trace.c2_pre.size() != cfg.c2 * 10 * 10) fail("c2_pre");
  if (trace.pool2.output.size() != cfg.c2 * 5 * 5) fail("pool2");
  if (trace.f1_out.size() != cfg.f1 || trace.f2_out.size() != cfg.f2) fail("dense traces");
  if (trace.logits.size() != LeNet5Config::kOutputs) fail("logits");
}
}  // namespace detail

template <typename T>
LeNet5Grads<T> backward_reference(const LeNet5Params<T>& params, const LeNet5Config& cfg,
                                  const LeNet5Trace<T>& trace, int label) {
  cfg.validate();
  detail::validate_lenet5_trace(cfg, trace);
  const std::size_t F1 = cfg.f1, F2 = cfg.f2, C1 = cfg.c1, C2 = cfg.c2;
  const std::size_t OUT = LeNet5Config::kOutputs, FLAT = cfg.flat();
  const Activation act = cfg.activation;

  LeNet5Grads<T> out;
  out.g = zero_lenet5_params<T>(cfg);

  const auto xent = softmax_xent(trace.logits, label);
  out.loss = double(xent.loss);
  std::vector<double> dl(OUT);
  for (std::size_t o = 0; o < OUT; ++o) dl[o] = double(xent.dlogits[o]);

  // fc3 and delta into f2.
  std::vector<double> d2(F2);
  for (std::size_t i = 0; i < F2; ++i) {
    const double y = double(trace.f2_out[i]);
    const T* wrow = params.fc3.data() + i * OUT;
    T* grow = out.g.fc3.data() + i * OUT;
    double dout = 0.0;
    for (std::size_t o = 0; o < OUT; ++o) {
      dout += double(wrow[o]) * dl[o];
      grow[o] = T(y * dl[o] + 0.0);
    }
    d2[i] = detail::deriv_from_output(act, y) * dout;
  }
  if (cfg.bias) {
    for (std::size_t o = 0; o < OUT; ++o) out.g.bias5[o] = T(dl[o] + 0.0);
  }

  // fc2 and delta into f1.
  std::vector<double> d1(F1);
  for (std::size_t i = 0; i < F1; ++i) {
    const double y = double(trace.f1_out[i]);
    const T* wrow = params.fc2.data() + i * F2;
    T* grow = out.g.fc2.data() + i * F2;
    double dout = 0.0;
    for (std::size_t j = 0; j < F2; ++j) {
      dout += double(wrow[j]) * d2[j];
      grow[j] = T(y * d2[j] + 0.0);
    }
    d1[i] = detail::deriv_from_output(act, y) * dout;
  }
  if (cfg.bias) {
    for (std::size_t j = 0; j < F2; ++j) out.g.bias4[j] = T(d2[j] + 0.0);
  }

  // fc1 and delta into the flattened pool2 output.
  std::vector<double> dflat(FLAT);
  for (std::size_t i = 0; i < FLAT; ++i) {
    const double y = double(trace.pool2.output[i]);
    const T* wrow = params.fc1.data() + i * F1;
    T* grow = out.g.fc1.data() + i * F1;
    double dout = 0.0;
    for (std::size_t j = 0; j < F1; ++j) {
      dout += double(wrow[j]) * d1[j];
      grow[j] = T(y * d1[j] + 0.0);
    }
    dflat[i] = dout;
  }
  if (cfg.bias) {
    for (std::size_t j = 0; j < F1; ++j) out.g.bias3[j] = T(d1[j] + 0.0);
  }

  // conv2: route pool2 deltas to window winners; accumulate filter gradients
  // and the delta into pool1's output.
  Tensor<double> dpool1({C1, 14, 14});
  for (std::size_t f = 0; f < C2; ++f) {
    std::vector<double> acc(C1 * 25, 0.0);
    double bacc = 0.0;
    const T* po = trace.pool2.output.data() + f * 25;
    const std::uint8_t* am = trace.pool2.argmax.data() + f * 25;
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        const double sg = dflat[f * 25 + i * 5 + j] *
                          detail::deriv_from_output(act, double(po[i * 5 + j]));
        bacc += sg;
        const std::uint8_t w = am[i * 5 + j];
        const std::size_t x = 2 * i + w / 2, y = 2 * j + w % 2;  // conv2 coords, 10x10
        for (std::size_t c = 0; c < C1; ++c) {
          const T* p1 = trace.pool1.output.data() + c * 14 * 14;
          const T* fk = params.conv2.data() + (f * C1 + c) * 25;
          double* dp = dpool1.data() + c * 14 * 14;
          for (std::size_t u = 0; u < kFilterSize; ++u) {
            for (std::size_t v = 0; v < kFilterSize; ++v) {
              acc[c * 25 + u * 5 + v] += sg * double(p1[(x + u) * 14 + y + v]);
              dp[(x + u) * 14 + y + v] += sg * double(fk[u * 5 + v]);
            }
          }
        }
      }
    }
    T* gf = out.g.conv2.data() + f * C1 * 25;
    for (std::size_t t = 0; t < C1 * 25; ++t) gf[t] = T(acc[t] + 0.0);
    if (cfg.bias) out.g.bias2[f] = T(bacc + 0.0);
  }

  // conv1: same routing one level down, against the raw input.
  for (std::size_t f = 0; f < C1; ++f) {
    std::vector<double> acc(3 * 25, 0.0);
    double bacc = 0.0;
    const T* po = trace.pool1.output.data() + f * 14 * 14;
    const std::uint8_t* am = trace.pool1.argmax.data() + f * 14 * 14;
    const double* dp = dpool1.data() + f * 14 * 14;
    for (std::size_t i = 0; i < 14; ++i) {
      for (std::size_t j = 0; j < 14; ++j) {
        const double sg =
            dp[i * 14 + j] * detail::deriv_from_output(act, double(po[i * 14 + j]));
        bacc += sg;
        const std::uint8_t w = am[i * 14 + j];
        const std::size_t x = 2 * i + w / 2, y = 2 * j + w % 2;  // conv1 coords, 28x28
        for (std::size_t c = 0; c < 3; ++c) {
          const T* in_ch = trace.input.data() + c * 32 * 32;
          for (std::size_t u = 0; u < kFilterSize; ++u) {
            for (std::size_t v = 0; v < kFilterSize; ++v) {
              acc[c * 25 + u * 5 + v] += sg * double(in_ch[(x + u) * 32 + y + v]);
            }
          }
        }
      }
    }
    T* gf = out.g.conv1.data() + f * 3 * 25;
    for (std::size_t t = 0; t < 3 * 25; ++t) gf[t] = T(acc[t] + 0.0);
    if (cfg.bias) out.g.bias1[f] = T(bacc + 0.0);
  }

  // Weight-granularity zero counts (each LeNet-5 weight aggregates its many
  // routes, so per-weight is the natural unit here).
  const std::array<const Tensor<T>*, 5> weight_layers = {
      &out.g.conv1, &out.g.conv2, &out.g.fc1, &out.g.fc2, &out.g.fc3};
  for (std::size_t l = 0; l < 5; ++l) {
    out.zero_counts[l].total = weight_layers[l]->size();
    std::uint64_t z = 0;
    for (std::size_t i = 0; i < weight_layers[l]->size(); ++i) {
      z += ((*weight_layers[l])[i] == T(0));
    }
    out.zero_counts[l].zeros = z;
  }
  return out;
}

// Backward for the ten single-output-architecture variant: joint softmax over
// the ten scalar outputs, independent tree/FC gradients per architecture, and
// conv gradients accumulated across architectures (architecture-major order).
template <typename T>
TenTreeGrads<T> backward_reference_tentree(const TenTreeParams<T>& params,
                                           const Tree3Config& cfg,
                                           const TenTreeTrace<T>& trace, int label) {
  Tree3Config head_cfg = cfg;
  head_cfg.outputs = 1;
  head_cfg.validate();
  const std::size_t C = head_cfg.channels(), K = head_cfg.k, M = head_cfg.m;
  const std::size_t R = head_cfg.rects(), P = head_cfg.pool_hw();
  const std::size_t RR = head_cfg.rect_rows(), HW = head_cfg.input_hw();

  TenTreeGrads<T> out;
  out.g.w_conv = Tensor<T>(params.w_conv.shape());
  for (std::size_t a = 0; a < 10; ++a) {
    out.g.heads[a].w_tree = Tensor<T>(params.heads[a].w_tree.shape());
    out.g.heads[a].w_fc = Tensor<T>(params.heads[a].w_fc.shape());
  }

  const auto xent = softmax_xent(trace.logits, label);
  out.loss = double(xent.loss);

  std::array<Tensor<double>, 10> dpre;
  for (std::size_t a = 0; a < 10; ++a) {
    const double dla = double(xent.dlogits[a]);
    const auto& head = params.heads[a];
    dpre[a] = Tensor<double>({M, C, R});
    for (std::size_t u = 0; u < M * C * R; ++u) {
      const double y = double(trace.tree_out[a][u]);
      out.g.heads[a].w_fc[u] = T(y * dla + 0.0);
      dpre[a][u] = detail::deriv_from_output(head_cfg.activation, y) *
                   (double(head.w_fc[u]) * dla);
    }
    for (std::size_t b = 0; b < M; ++b) {
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t k = 0; k < K; ++k) {
          const T* po = trace.pool.output.data() + (c * K + k) * P * P;
          T* gt = out.g.heads[a].w_tree.data() + ((b * C + c) * K + k) * P * P;
          for (std::size_t i = 0; i < P; ++i) {
            const double d = dpre[a][(b * C + c) * R + i / RR];
            for (std::size_t j = 0; j < P; ++j) {
              gt[i * P + j] = T(d * double(po[i * P + j]) + 0.0);
            }
          }
        }
      }
    }
  }

  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t map = c * K + k;
      const T* po = trace.pool.output.data() + map * P * P;
      const std::uint8_t* am = trace.pool.argmax.data() + map * P * P;
      const T* in_ch = trace.input.data() + c * HW * HW;
      std::array<double, kFilterSize * kFilterSize> acc{};
      for (std::size_t a = 0; a < 10; ++a) {
        const auto& head = params.heads[a];
        for (std::size_t i = 0; i < P; ++i) {
          const std::size_t r = i / RR;
          for (std::size_t j = 0; j < P; ++j) {
            double s = 0.0;
            for (std::size_t b = 0; b < M; ++b) {
              s += dpre[a][(b * C + c) * R + r] *
                   double(head.w_tree[(((b * C + c) * K + k) * P + i) * P + j]);
            }
            const double sg = s * detail::deriv_from_output(head_cfg.activation,
                                                            double(po[i * P + j]));
            const std::uint8_t w = am[i * P + j];
            const std::size_t x = 2 * i + w / 2, y = 2 * j + w % 2;
            for (std::size_t u = 0; u < kFilterSize; ++u) {
              const T* row = in_ch + (x + u) * HW + y;
              for (std::size_t v = 0; v < kFilterSize; ++v) {
                acc[u * kFilterSize + v] += sg * double(row[v]);
              }
            }
          }
        }
      }
      T* gf = out.g.w_conv.data() + map * kFilterSize * kFilterSize;
      for (std::size_t t = 0; t < kFilterSize * kFilterSize; ++t) gf[t] = T(acc[t] + 0.0);
    }
  }

  // Aggregate weight-level zero counts across architectures; conv instances
  // count per architecture since each maintains its own routes.
  out.zero_counts[0].total = count_gradient_instances_tree3(head_cfg) * 10;
  out.zero_counts[1].total = std::uint64_t(M) * C * K * P * P * 10;
  out.zero_counts[2].total = std::uint64_t(head_cfg.fc_rows()) * 10;
  for (std::size_t a = 0; a < 10; ++a) {
    std::vector<double> dla = {double(xent.dlogits[a])};
    Tree3Trace<T> view;  // counting needs only pool/input/tree_out shapes
    view.input = trace.input;
    view.conv_pre = trace.conv_pre;
    view.pool = trace.pool;
    view.tree_out = trace.tree_out[a];
    view.logits = Tensor<T>({1});
    Tree3Params<T> head_params;
    head_params.w_conv = params.w_conv;
    head_params.w_tree = params.heads[a].w_tree;
    head_params.w_fc = params.heads[a].w_fc;
    const auto counts =
        detail::count_zero_routes(head_params, head_cfg, view, dpre[a], dla);
    for (std::size_t l = 0; l < 3; ++l) out.zero_counts[l].zeros += counts[l].zeros;
  }
  return out;
}

}  // namespace treebp
