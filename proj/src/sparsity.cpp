#include "treebp/sparsity.hpp"

#include <algorithm>
#include <cmath>

namespace treebp {

GradHistogram build_histogram(const std::vector<double>& magnitudes,
                              HistSpacing spacing) {
  if (magnitudes.empty()) {
    throw ConfigError("build_histogram: no nonzero gradients observed");
  }
  double lo = magnitudes[0], hi = magnitudes[0];
  for (double m : magnitudes) {
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  if (hi <= lo) hi = lo * (1.0 + 1e-9);  // single distinct value

  GradHistogram h;
  h.edges.resize(GradHistogram::kBins + 1);
  h.counts.assign(GradHistogram::kBins, 0);
  if (spacing == HistSpacing::Log) {
    const double llo = std::log(lo), lhi = std::log(hi);
    for (std::size_t i = 0; i <= GradHistogram::kBins; ++i) {
      h.edges[i] = std::exp(llo + (lhi - llo) * double(i) / GradHistogram::kBins);
    }
    h.edges.front() = lo;
    h.edges.back() = hi;
    for (double m : magnitudes) {
      double idx = (std::log(m) - llo) / (lhi - llo) * GradHistogram::kBins;
      std::size_t bin = idx <= 0.0 ? 0 : std::size_t(idx);
      bin = std::min(bin, GradHistogram::kBins - 1);
      ++h.counts[bin];
    }
  } else {
    for (std::size_t i = 0; i <= GradHistogram::kBins; ++i) {
      h.edges[i] = lo + (hi - lo) * double(i) / GradHistogram::kBins;
    }
    for (double m : magnitudes) {
      double idx = (m - lo) / (hi - lo) * GradHistogram::kBins;
      std::size_t bin = idx <= 0.0 ? 0 : std::size_t(idx);
      bin = std::min(bin, GradHistogram::kBins - 1);
      ++h.counts[bin];
    }
  }
  h.total = magnitudes.size();
  return h;
}

double histogram_quantile(const GradHistogram& hist, double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("histogram_quantile: q outside [0,1]");
  if (hist.total == 0) throw ConfigError("histogram_quantile: empty histogram");
  const double want = q * double(hist.total);
  double cum = 0.0;
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    cum += double(hist.counts[i]);
    if (cum >= want) return hist.edges[i + 1];
  }
  return hist.edges.back();
}

}  // namespace treebp
