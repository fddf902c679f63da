#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "treebp/grad.hpp"
#include "treebp/lenet5.hpp"
#include "treebp/tree3.hpp"

namespace treebp {

struct FdReport {
  double max_rel = 0.0;
  double mean_rel = 0.0;
  std::size_t checked = 0;
  std::string worst;  // tensor/index of the worst component
};

namespace detail {

// Guarded relative error: near-zero pairs are compared against a floor so the
// O(eps^2) truncation noise of central differences cannot blow up the ratio.
inline double rel_error(double analytic, double numeric) {
  const double denom =
      std::max({1e-3, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

template <typename T>
Tensor<T> random_image(std::size_t channels, std::size_t hw, Rng& rng) {
  Tensor<T> img({channels, hw, hw});
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = T(2.0 * rng.uniform_real() - 1.0);
  }
  return img;
}

// Central differences over every index of every tensor (or an evenly strided
// subset of max_per_tensor indices), comparing against the provided analytic
// gradients. LossFn: double(const Params&).
template <class Params, class LossFn>
FdReport fd_compare(Params& params, const Params& analytic, double eps,
                    std::size_t max_per_tensor, LossFn&& loss) {
  FdReport report;
  auto wt = params.tensors();
  const auto gt = analytic.tensors();
  double sum_rel = 0.0;
  for (std::size_t t = 0; t < wt.size(); ++t) {
    auto& w = *wt[t];
    const auto& g = *gt[t];
    const std::size_t n = w.size();
    std::size_t stride = 1;
    if (max_per_tensor > 0 && n > max_per_tensor) {
      stride = (n + max_per_tensor - 1) / max_per_tensor;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = double(w[i]);
      w[i] = saved + eps;
      const double up = loss(params);
      w[i] = saved - eps;
      const double down = loss(params);
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double rel = rel_error(double(g[i]), numeric);
      sum_rel += rel;
      ++report.checked;
      if (rel > report.max_rel) {
        report.max_rel = rel;
        report.worst = "tensor " + std::to_string(t) + " index " + std::to_string(i) +
                       " (analytic " + std::to_string(double(g[i])) + ", numeric " +
                       std::to_string(numeric) + ")";
      }
    }
  }
  if (report.checked > 0) report.mean_rel = sum_rel / double(report.checked);
  return report;
}

template <class Params>
void flip_first_nonzero(Params& grads) {
  for (auto* t : grads.tensors()) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      if ((*t)[i] != 0) {
        (*t)[i] = -(*t)[i];
        return;
      }
    }
  }
}

}  // namespace detail

// Checks backward_reference (or the pruned pass) for a Tree-3 model against
// central differences on a random image, all in double precision. inject_flip
// negates one analytic component first, to prove the check can fail.
inline FdReport fd_check_tree3(const Tree3Config& cfg, std::uint64_t seed, double eps,
                               std::size_t max_per_tensor = 0, bool pruned = false,
                               bool inject_flip = false) {
  cfg.validate();
  auto params = init_tree3<double>(cfg, seed);
  Rng rng(derive_seed(seed, "gradcheck"));
  const auto image = detail::random_image<double>(cfg.channels(), cfg.input_hw(), rng);
  const int label = int(rng.uniform_int(0, 9));

  const auto trace = tree3_forward(params, cfg, image);
  auto grads = pruned ? backward_pruned_tree3(params, cfg, trace, label)
                      : backward_reference(params, cfg, trace, label);
  if (inject_flip) detail::flip_first_nonzero(grads.g);

  auto loss = [&](const Tree3Params<double>& p) {
    const auto t = tree3_forward(p, cfg, image);
    return double(softmax_xent(t.logits, label).loss);
  };
  return detail::fd_compare(params, grads.g, eps, max_per_tensor, loss);
}

inline FdReport fd_check_lenet5(const LeNet5Config& cfg, std::uint64_t seed, double eps,
                                std::size_t max_per_tensor = 0,
                                bool inject_flip = false) {
  cfg.validate();
  auto params = init_lenet5<double>(cfg, seed);
  Rng rng(derive_seed(seed, "gradcheck"));
  const auto image =
      detail::random_image<double>(LeNet5Config::kChannels, LeNet5Config::kInputHW, rng);
  const int label = int(rng.uniform_int(0, 9));

  const auto trace = lenet5_forward(params, cfg, image);
  auto grads = backward_reference(params, cfg, trace, label);
  if (inject_flip) detail::flip_first_nonzero(grads.g);

  auto loss = [&](const LeNet5Params<double>& p) {
    const auto t = lenet5_forward(p, cfg, image);
    return double(softmax_xent(t.logits, label).loss);
  };
  return detail::fd_compare(params, grads.g, eps, max_per_tensor, loss);
}

}  // namespace treebp
