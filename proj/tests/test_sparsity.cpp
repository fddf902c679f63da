#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "treebp/grad.hpp"
#include "treebp/rng.hpp"
#include "treebp/sparsity.hpp"
#include "treebp/tree3.hpp"

using namespace treebp;

namespace {

// a grads bundle over a tiny config with every entry set explicitly
Tree3Grads<float> make_bundle(const Tree3Config& cfg, const std::vector<float>& varied) {
  Tree3Grads<float> b;
  b.g = zero_tree3_params<float>(cfg);
  auto ts = b.g.tensors();
  std::size_t n = 0;
  for (auto* t : ts)
    for (std::size_t i = 0; i < t->size(); ++i, ++n)
      (*t)[i] = varied[n % varied.size()];
  return b;
}

std::size_t param_count(const Tree3Config& cfg) {
  auto p = zero_tree3_params<float>(cfg);
  std::size_t n = 0;
  for (auto* t : p.tensors()) n += t->size();
  return n;
}

}  // namespace

TEST_CASE("threshold zeroes small entries and reports the survivor fraction") {
  Tree3Config cfg{1, 1, Activation::ReLU, Geometry::MNIST};
  auto b = make_bundle(cfg, {0.5f, -0.002f, 0.0f, -1.5f});
  const std::size_t n = param_count(cfg);

  const double frac = threshold_gradients(b, 0.01);
  // pattern repeats every 4 entries: two survivors (0.5, -1.5) per quad
  std::size_t alive = 0;
  for (auto* t : b.g.tensors())
    for (std::size_t i = 0; i < t->size(); ++i) {
      const float v = (*t)[i];
      CHECK((v == 0.0f || std::abs(v) >= 0.01f));
      alive += v != 0.0f;
    }
  CHECK(frac == doctest::Approx(double(alive) / double(n)));
  CHECK(std::abs(frac - 0.5) < 0.05);

  // idempotent
  auto again = threshold_gradients(b, 0.01);
  CHECK(again == doctest::Approx(frac));

  CHECK_THROWS_AS(threshold_gradients(b, -1.0), ConfigError);
}

TEST_CASE("threshold boundary: |g| exactly theta survives") {
  // 0.25 is exact in both float and double, so the comparison is unambiguous
  Tree3Config cfg{1, 1, Activation::ReLU, Geometry::MNIST};
  auto b = make_bundle(cfg, {0.25f});
  threshold_gradients(b, 0.25);
  CHECK(b.g.w_conv[0] == 0.25f);  // strict < is dropped, == survives
  threshold_gradients(b, std::nextafter(0.25, 1.0));
  CHECK(b.g.w_conv[0] == 0.0f);
}

TEST_CASE("find_threshold_for_fraction hits the requested survivor count") {
  Tree3Config cfg{2, 2, Activation::ReLU, Geometry::MNIST};
  Rng rng(5);
  std::vector<Tree3Grads<float>> sample;
  for (int s = 0; s < 4; ++s) {
    Tree3Grads<float> b;
    b.g = zero_tree3_params<float>(cfg);
    for (auto* t : b.g.tensors())
      for (std::size_t i = 0; i < t->size(); ++i)
        (*t)[i] = rng.uniform_real() < 0.5 ? 0.0f : float(rng.gaussian());
    sample.push_back(std::move(b));
  }

  for (double target : {0.01, 0.1, 0.3}) {
    const double theta = find_threshold_for_fraction(sample, target);
    std::uint64_t total = 0, alive = 0;
    for (const auto& b : sample)
      for (const auto* t : b.g.tensors()) {
        total += t->size();
        for (std::size_t i = 0; i < t->size(); ++i)
          alive += std::abs(double((*t)[i])) >= theta && (*t)[i] != 0.0f;
      }
    CHECK(double(alive) / double(total) == doctest::Approx(target).epsilon(0.03));
  }

  // a target above the nonzero fraction cannot be reached: theta collapses to 0
  CHECK(find_threshold_for_fraction(sample, 1.0) == 0.0);

  CHECK_THROWS_AS(find_threshold_for_fraction(sample, 0.0), ConfigError);
  CHECK_THROWS_AS(find_threshold_for_fraction(sample, 1.5), ConfigError);
  std::vector<Tree3Grads<float>> empty;
  CHECK_THROWS_AS(find_threshold_for_fraction(empty, 0.1), ConfigError);
}

TEST_CASE("sparsity stats follow the two-pass mean and sample std") {
  SparsityStats stats;
  // three fabricated per-example fraction triples
  const double fr[3][3] = {{0.9, 0.5, 0.1}, {0.8, 0.6, 0.3}, {0.7, 0.4, 0.2}};
  for (const auto& row : fr) {
    std::array<ZeroCount, 3> counts;
    for (std::size_t l = 0; l < 3; ++l) {
      counts[l].total = 1000;
      counts[l].zeros = std::uint64_t(row[l] * 1000 + 0.5);
    }
    accumulate_sparsity(stats, counts);
  }
  CHECK(stats.samples == 3);
  for (std::size_t l = 0; l < 3; ++l) {
    double mean = (fr[0][l] + fr[1][l] + fr[2][l]) / 3.0;
    double var = 0.0;
    for (int s = 0; s < 3; ++s) var += (fr[s][l] - mean) * (fr[s][l] - mean);
    var /= 2.0;  // sample variance
    CHECK(stats.fraction(l) == doctest::Approx(mean).epsilon(1e-9));
    CHECK(stats.stddev(l) == doctest::Approx(std::sqrt(var)).epsilon(1e-9));
  }
}

TEST_CASE("histogram covers the range and quantiles bracket the mass") {
  std::vector<double> mags;
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) mags.push_back(std::exp(rng.gaussian() * 2.0 - 4.0));

  auto hist = build_histogram(mags, HistSpacing::Log);
  CHECK(hist.counts.size() == GradHistogram::kBins);
  CHECK(hist.edges.size() == GradHistogram::kBins + 1);
  CHECK(hist.total == mags.size());
  std::uint64_t sum = 0;
  for (auto c : hist.counts) sum += c;
  CHECK(sum == mags.size());
  for (std::size_t i = 0; i + 1 < hist.edges.size(); ++i)
    CHECK(hist.edges[i] < hist.edges[i + 1]);

  const double q50 = histogram_quantile(hist, 0.5);
  const double q90 = histogram_quantile(hist, 0.9);
  CHECK(q50 <= q90);
  std::uint64_t below = 0;
  for (double m : mags) below += m <= q50;
  CHECK(double(below) / double(mags.size()) >= 0.5);
  CHECK(double(below) / double(mags.size()) <= 0.52);

  auto lin = build_histogram(mags, HistSpacing::Linear);
  CHECK(lin.total == mags.size());
  const double width0 = lin.edges[1] - lin.edges[0];
  const double width500 = lin.edges[501] - lin.edges[500];
  CHECK(width0 == doctest::Approx(width500).epsilon(1e-9));

  CHECK_THROWS_AS(build_histogram({}, HistSpacing::Log), ConfigError);
}

TEST_CASE("relative-mode magnitude collection divides by the weight") {
  Tree3Config cfg{1, 1, Activation::ReLU, Geometry::MNIST};
  Tree3Grads<float> b;
  b.g = zero_tree3_params<float>(cfg);
  auto weights = zero_tree3_params<float>(cfg);
  b.g.w_conv[0] = 0.5f;
  weights.w_conv[0] = 2.0f;
  b.g.w_conv[1] = 1.0f;
  weights.w_conv[1] = 0.0f;  // zero weight: skipped in relative mode

  const Tree3Params<float>* no_weights = nullptr;
  std::vector<double> abs_mags, rel_mags;
  collect_magnitudes(b, no_weights, HistMode::Abs, abs_mags);
  collect_magnitudes(b, &weights, HistMode::Relative, rel_mags);
  CHECK(abs_mags.size() == 2);
  REQUIRE(rel_mags.size() == 1);
  CHECK(rel_mags[0] == doctest::Approx(0.25));

  CHECK_THROWS_AS(collect_magnitudes(b, no_weights, HistMode::Relative, rel_mags),
                  ConfigError);
}

TEST_CASE("histogram_gradients composes collection and binning") {
  Tree3Config cfg{2, 1, Activation::ReLU, Geometry::MNIST};
  Rng rng(10);
  std::vector<Tree3Grads<float>> bundles(3);
  for (auto& b : bundles) {
    b.g = zero_tree3_params<float>(cfg);
    for (auto* t : b.g.tensors())
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = float(rng.gaussian());
  }
  auto hist = histogram_gradients(bundles, HistMode::Abs);
  std::size_t n = 0;
  for (const auto* t : bundles[0].g.tensors()) n += t->size();
  CHECK(hist.total <= 3 * n);
  CHECK(hist.total > 3 * n / 2);  // gaussians are almost never exactly zero
}
