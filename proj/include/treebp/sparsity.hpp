#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "treebp/grad.hpp"

namespace treebp {

namespace detail {
template <typename P>
double threshold_tensors(P& container, double theta) {
  auto ts = container.tensors();
  std::uint64_t total = 0, alive = 0;
  for (auto* t : ts) {
    total += t->size();
    for (std::size_t i = 0; i < t->size(); ++i) {
      if (std::abs(double((*t)[i])) < theta) (*t)[i] = 0;
      alive += ((*t)[i] != 0);
    }
  }
  return total == 0 ? 0.0 : double(alive) / double(total);
}

template <typename P>
void collect_magnitudes_from(const P& container, std::vector<double>& out) {
  for (const auto* t : container.tensors()) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double m = std::abs(double((*t)[i]));
      if (m != 0.0) out.push_back(m);
    }
  }
}
}  // namespace detail

// Zeroes every gradient entry with |g| < theta, in place. Returns the fraction
// of parameters whose gradient survives as nonzero. Idempotent for fixed
// theta.
template <typename T>
double threshold_gradients(Tree3Grads<T>& bundle, double theta) {
  if (theta < 0.0) throw ConfigError("threshold_gradients: theta must be >= 0");
  return detail::threshold_tensors(bundle.g, theta);
}

template <typename T>
double threshold_gradients(LeNet5Grads<T>& bundle, double theta) {
  if (theta < 0.0) throw ConfigError("threshold_gradients: theta must be >= 0");
  return detail::threshold_tensors(bundle.g, theta);
}

template <typename T>
double threshold_gradients(Tree3Params<T>& grads, double theta) {
  if (theta < 0.0) throw ConfigError("threshold_gradients: theta must be >= 0");
  return detail::threshold_tensors(grads, theta);
}

// Picks theta so that about `target` of all parameters keep a nonzero gradient
// when |g| < theta is dropped, estimated over a sample of bundles. If even
// theta = 0 cannot reach the target (target >= the nonzero fraction), returns
// 0.
template <typename T>
double find_threshold_for_fraction(const std::vector<Tree3Grads<T>>& sample,
                                   double target) {
  if (sample.empty()) throw ConfigError("find_threshold_for_fraction: empty sample");
  if (!(target > 0.0 && target <= 1.0)) {
    throw ConfigError("find_threshold_for_fraction: target must be in (0, 1]");
  }
  std::vector<double> mags;
  std::uint64_t total = 0;
  for (const auto& b : sample) {
    for (const auto* t : b.g.tensors()) total += t->size();
    detail::collect_magnitudes_from(b.g, mags);
  }
  const std::uint64_t keep = std::uint64_t(std::llround(target * double(total)));
  if (keep == 0) {
    const double maxmag = mags.empty() ? 0.0 : *std::max_element(mags.begin(), mags.end());
    return std::nextafter(maxmag, std::numeric_limits<double>::infinity());
  }
  if (keep >= mags.size()) return 0.0;
  std::sort(mags.begin(), mags.end(), std::greater<double>());
  const double hi = mags[keep - 1], lo = mags[keep];
  return lo < hi ? 0.5 * (lo + hi) : hi;
}

// Running mean/std of per-example zero fractions per layer (Welford).
struct SparsityStats {
  std::array<double, 3> mean{};
  std::array<double, 3> m2{};
  std::uint64_t samples = 0;

  void add(const std::array<ZeroCount, 3>& counts) {
    ++samples;
    for (std::size_t l = 0; l < 3; ++l) {
      const double x = counts[l].fraction();
      const double delta = x - mean[l];
      mean[l] += delta / double(samples);
      m2[l] += delta * (x - mean[l]);
    }
  }

  double fraction(std::size_t layer) const { return mean.at(layer); }
  double stddev(std::size_t layer) const {
    return samples < 2 ? 0.0 : std::sqrt(m2.at(layer) / double(samples - 1));
  }
};

template <typename T>
SparsityStats& accumulate_sparsity(SparsityStats& stats, const Tree3Grads<T>& bundle) {
  stats.add(bundle.zero_counts);
  return stats;
}

inline SparsityStats& accumulate_sparsity(SparsityStats& stats,
                                          const std::array<ZeroCount, 3>& counts) {
  stats.add(counts);
  return stats;
}

// 1000-bin histogram over nonzero gradient magnitudes (optionally |g/w|).
enum class HistMode { Abs, Relative };
enum class HistSpacing { Log, Linear };

struct GradHistogram {
  static constexpr std::size_t kBins = 1000;
  std::vector<double> edges;          // kBins + 1, ascending
  std::vector<std::uint64_t> counts;  // kBins
  std::uint64_t total = 0;
};

// Builds the histogram from already-collected magnitudes.
GradHistogram build_histogram(const std::vector<double>& magnitudes,
                              HistSpacing spacing = HistSpacing::Log);

// Smallest bin upper edge below which at least `q` of the recorded mass lies.
double histogram_quantile(const GradHistogram& hist, double q);

template <typename T>
void collect_magnitudes(const Tree3Grads<T>& bundle, const Tree3Params<T>* weights,
                        HistMode mode, std::vector<double>& out) {
  if (mode == HistMode::Abs) {
    detail::collect_magnitudes_from(bundle.g, out);
    return;
  }
  if (!weights) throw ConfigError("collect_magnitudes: relative mode needs weights");
  auto gs = bundle.g.tensors();
  auto ws = weights->tensors();
  for (std::size_t t = 0; t < gs.size(); ++t) {
    if (!gs[t]->same_shape(*ws[t])) {
      throw ShapeError("collect_magnitudes: gradient/weight shape mismatch");
    }
    for (std::size_t i = 0; i < gs[t]->size(); ++i) {
      const double w = double((*ws[t])[i]);
      if (w == 0.0) continue;
      const double m = std::abs(double((*gs[t])[i]) / w);
      if (m != 0.0) out.push_back(m);
    }
  }
}

template <typename T>
GradHistogram histogram_gradients(const std::vector<Tree3Grads<T>>& bundles,
                                  HistMode mode, const Tree3Params<T>* weights = nullptr,
                                  HistSpacing spacing = HistSpacing::Log) {
  std::vector<double> mags;
  for (const auto& b : bundles) collect_magnitudes(b, weights, mode, mags);
  return build_histogram(mags, spacing);
}

}  // namespace treebp
