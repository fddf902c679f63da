#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstddef>

#include "oracle.hpp"
#include "treebp/lenet5.hpp"
#include "treebp/rng.hpp"
#include "treebp/tree3.hpp"

using namespace treebp;

namespace {

template <typename T>
Tensor<T> random_image(const Tree3Config& cfg, Rng& rng) {
  Tensor<T> img({cfg.channels(), cfg.input_hw(), cfg.input_hw()});
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = T(2.0 * rng.uniform_real() - 1.0);
  return img;
}

// relative mismatch with an absolute floor, for comparing accumulated sums
double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("tree3 config geometry arithmetic") {
  Tree3Config cifar{6, 16, Activation::ReLU, Geometry::CIFAR};
  CHECK(cifar.channels() == 3);
  CHECK(cifar.input_hw() == 32);
  CHECK(cifar.conv_hw() == 28);
  CHECK(cifar.pool_hw() == 14);
  CHECK(cifar.rect_rows() == 2);
  CHECK(cifar.rects() == 7);
  CHECK(cifar.tree_fan_in() == 2 * 14 * 6);
  CHECK(cifar.fc_rows() == 7 * 3 * 16);

  Tree3Config mnist{15, 16, Activation::ReLU, Geometry::MNIST};
  CHECK(mnist.channels() == 1);
  CHECK(mnist.input_hw() == 28);
  CHECK(mnist.conv_hw() == 24);
  CHECK(mnist.pool_hw() == 12);
  CHECK(mnist.rect_rows() == 4);
  CHECK(mnist.rects() == 3);
  CHECK(mnist.tree_fan_in() == 4 * 12 * 15);
  CHECK(mnist.fc_rows() == 3 * 1 * 16);

  CHECK(cifar.unit_index(0, 0, 0) == 0);
  CHECK(cifar.unit_index(0, 0, 6) == 6);
  CHECK(cifar.unit_index(0, 1, 0) == 7);
  CHECK(cifar.unit_index(1, 0, 0) == 21);

  Tree3Config bad;
  bad.k = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = Tree3Config{};
  bad.outputs = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("tree3 init determinism and stddev statistics") {
  Tree3Config cfg{6, 16, Activation::ReLU, Geometry::CIFAR};
  auto a = init_tree3<float>(cfg, 7);
  auto b = init_tree3<float>(cfg, 7);
  auto c = init_tree3<float>(cfg, 8);
  for (std::size_t i = 0; i < a.w_tree.size(); ++i) CHECK(a.w_tree[i] == b.w_tree[i]);
  bool differs = false;
  for (std::size_t i = 0; i < a.w_conv.size(); ++i)
    differs = differs || a.w_conv[i] != c.w_conv[i];
  CHECK(differs);

  // w_conv holds 3*6*25 = 450 draws at stddev sqrt(2/25)
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < a.w_conv.size(); ++i) {
    sum += a.w_conv[i];
    sq += double(a.w_conv[i]) * a.w_conv[i];
  }
  const double n = double(a.w_conv.size());
  const double mean = sum / n;
  const double std = std::sqrt(sq / n - mean * mean);
  const double expect = std::sqrt(2.0 / 25.0);
  CHECK(std == doctest::Approx(expect).epsilon(0.15));
  CHECK(std::abs(mean) < 4.0 * expect / std::sqrt(n));

  // w_tree stddev sqrt(2 / (2*14*6)); w_fc stddev sqrt(2 / 336)
  sq = 0.0;
  for (std::size_t i = 0; i < a.w_tree.size(); ++i) sq += double(a.w_tree[i]) * a.w_tree[i];
  CHECK(std::sqrt(sq / double(a.w_tree.size())) ==
        doctest::Approx(std::sqrt(2.0 / cfg.tree_fan_in())).epsilon(0.05));
  sq = 0.0;
  for (std::size_t i = 0; i < a.w_fc.size(); ++i) sq += double(a.w_fc[i]) * a.w_fc[i];
  CHECK(std::sqrt(sq / double(a.w_fc.size())) ==
        doctest::Approx(std::sqrt(2.0 / cfg.fc_rows())).epsilon(0.05));
}

TEST_CASE("glorot scheme changes the scale") {
  Tree3Config cfg{6, 16, Activation::ReLU, Geometry::CIFAR};
  auto g = init_tree3<float>(cfg, 7, InitScheme::GlorotNormal);
  double sq = 0.0;
  for (std::size_t i = 0; i < g.w_fc.size(); ++i) sq += double(g.w_fc[i]) * g.w_fc[i];
  const double expect = std::sqrt(2.0 / (cfg.fc_rows() + cfg.outputs));
  CHECK(std::sqrt(sq / double(g.w_fc.size())) == doctest::Approx(expect).epsilon(0.05));
}

TEST_CASE("tree3 forward matches the naive oracle") {
  Rng rng(11);
  for (const auto geometry : {Geometry::CIFAR, Geometry::MNIST}) {
    for (const auto act : {Activation::ReLU, Activation::Sigmoid}) {
      Tree3Config cfg{3, 4, act, geometry};
      auto params = init_tree3<double>(cfg, 5);
      auto img = random_image<double>(cfg, rng);

      auto trace = tree3_forward(params, cfg, img);
      auto want = oracle::tree3_forward(params, cfg, img);

      REQUIRE(trace.tree_out.size() == want.tree_out.size());
      for (std::size_t i = 0; i < want.tree_pre.size(); ++i) {
        CHECK(rel_diff(trace.tree_pre[i], want.tree_pre[i]) < 1e-12);
        CHECK(rel_diff(trace.tree_out[i], want.tree_out[i]) < 1e-12);
      }
      REQUIRE(trace.logits.size() == 10);
      for (std::size_t o = 0; o < 10; ++o)
        CHECK(rel_diff(trace.logits[o], want.logits[o]) < 1e-12);
    }
  }
}

TEST_CASE("tree3 forward in float stays close to the double oracle") {
  Rng rng(13);
  Tree3Config cfg{6, 16, Activation::ReLU, Geometry::CIFAR};
  auto params = init_tree3<float>(cfg, 3);
  auto img = random_image<float>(cfg, rng);
  auto trace = tree3_forward(params, cfg, img);
  auto want = oracle::tree3_forward(params, cfg, img);
  for (std::size_t o = 0; o < 10; ++o)
    CHECK(rel_diff(trace.logits[o], want.logits[o]) < 1e-4);
}

TEST_CASE("all-ones tree weights sum the pooled rectangle directly") {
  Tree3Config cfg{1, 1, Activation::ReLU, Geometry::CIFAR};
  auto params = zero_tree3_params<double>(cfg);
  params.w_tree.fill(1.0);
  Rng rng(2);
  Tensor<double> img({3, 32, 32});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform_real();  // nonneg

  auto trace = tree3_forward(params, cfg, img);
  const std::size_t p = cfg.pool_hw();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t r = 0; r < cfg.rects(); ++r) {
      double want = 0.0;
      for (std::size_t i = 2 * r; i < 2 * r + 2; ++i)
        for (std::size_t j = 0; j < p; ++j) want += trace.pool.output[(c * p + i) * p + j];
      CHECK(trace.tree_pre[cfg.unit_index(0, c, r)] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("tree3 forward validates image and parameter shapes") {
  Tree3Config cfg{2, 2, Activation::ReLU, Geometry::CIFAR};
  auto params = init_tree3<float>(cfg, 1);
  Tensor<float> wrong({1, 28, 28});
  CHECK_THROWS_AS(tree3_forward(params, cfg, wrong), ShapeError);

  Tree3Config other{3, 2, Activation::ReLU, Geometry::CIFAR};
  Tensor<float> img({3, 32, 32});
  CHECK_THROWS_AS(tree3_forward(params, other, img), ShapeError);
}

TEST_CASE("tree3 layer table rows") {
  Tree3Config cfg{6, 16, Activation::ReLU, Geometry::CIFAR};
  auto rows = tree3_layer_table(cfg);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].name == "conv2d");
  CHECK(rows[0].weight == std::vector<std::size_t>{3, 6, 5, 5});
  CHECK(rows[0].input == std::vector<std::size_t>{3, 32, 32});
  CHECK(rows[0].output == std::vector<std::size_t>{18, 28, 28});
  CHECK(rows[1].output == std::vector<std::size_t>{18, 14, 14});
  CHECK(rows[2].output == std::vector<std::size_t>{48, 7});
  CHECK(rows[3].weight == std::vector<std::size_t>{336, 10});
  CHECK(rows[3].output == std::vector<std::size_t>{10});
}

TEST_CASE("lenet5 forward matches the naive oracle") {
  LeNet5Config cfg;
  cfg.c1 = 4;
  cfg.c2 = 5;
  cfg.f1 = 30;
  cfg.f2 = 20;
  for (const auto act : {Activation::ReLU, Activation::Sigmoid}) {
    cfg.activation = act;
    auto params = init_lenet5<double>(cfg, 17);
    // give the biases nonzero values so the bias path is exercised
    Rng brng(23);
    for (Tensor<double>* t : params.tensors())
      if (t->rank() == 1)
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = 0.1 * brng.gaussian();

    Rng rng(19);
    Tensor<double> img({3, 32, 32});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = 2.0 * rng.uniform_real() - 1.0;

    auto trace = lenet5_forward(params, cfg, img);
    auto want = oracle::lenet5_forward(params, cfg, img);
    REQUIRE(trace.logits.size() == 10);
    for (std::size_t o = 0; o < 10; ++o)
      CHECK(rel_diff(trace.logits[o], want.logits[o]) < 1e-12);
  }
}

TEST_CASE("lenet5 bias=false ignores bias tensors") {
  LeNet5Config cfg;
  cfg.c1 = 2; cfg.c2 = 2; cfg.f1 = 8; cfg.f2 = 6;
  cfg.bias = false;
  auto params = init_lenet5<double>(cfg, 3);
  for (Tensor<double>* t : params.tensors())
    if (t->rank() == 1) t->fill(1e9);  // must have no effect

  Rng rng(4);
  Tensor<double> img({3, 32, 32});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = 2.0 * rng.uniform_real() - 1.0;
  auto trace = lenet5_forward(params, cfg, img);
  auto want = oracle::lenet5_forward(params, cfg, img);
  for (std::size_t o = 0; o < 10; ++o)
    CHECK(rel_diff(trace.logits[o], want.logits[o]) < 1e-12);
  for (std::size_t o = 0; o < 10; ++o) CHECK(std::abs(trace.logits[o]) < 1e6);
}

TEST_CASE("lenet5 trace shapes at default widths") {
  LeNet5Config cfg;
  auto params = init_lenet5<float>(cfg, 1);
  Tensor<float> img({3, 32, 32});
  auto trace = lenet5_forward(params, cfg, img);
  CHECK(trace.c1_pre.extent(0) == 6);
  CHECK(trace.c1_pre.extent(1) == 28);
  CHECK(trace.pool1.output.extent(1) == 14);
  CHECK(trace.c2_pre.extent(0) == 16);
  CHECK(trace.c2_pre.extent(1) == 10);
  CHECK(trace.pool2.output.extent(1) == 5);
  CHECK(trace.f1_out.size() == 120);
  CHECK(trace.f2_out.size() == 84);
  CHECK(trace.logits.size() == 10);
}

TEST_CASE("ten-tree forward equals ten independent single-output trees") {
  Tree3Config cfg{3, 4, Activation::ReLU, Geometry::CIFAR};
  auto params = init_ten_tree<double>(cfg, 21);
  Rng rng(22);
  auto img = random_image<double>(cfg, rng);
  auto trace = ten_tree_forward(params, cfg, img);
  REQUIRE(trace.logits.size() == 10);

  Tree3Config head_cfg = cfg;
  head_cfg.outputs = 1;
  for (std::size_t arch = 0; arch < 10; ++arch) {
    Tree3Params<double> single;
    single.w_conv = params.w_conv;
    single.w_tree = params.heads[arch].w_tree;
    single.w_fc = params.heads[arch].w_fc;
    auto one = tree3_forward(single, head_cfg, img);
    CHECK(rel_diff(trace.logits[arch], one.logits[0]) < 1e-12);
    for (std::size_t i = 0; i < one.tree_out.size(); ++i)
      CHECK(trace.tree_out[arch][i] == one.tree_out[i]);
  }
}
