#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "treebp/checkpoint.hpp"
#include "treebp/rng.hpp"
#include "treebp/trainer.hpp"
#include "treebp/tree3.hpp"

using namespace treebp;
namespace fs = std::filesystem;

namespace {

// Synthetic dataset with a learnable signal: class c lights a distinct block
// of pixels (plus noise), so a few steps of training visibly reduce the loss.
Dataset synthetic_cifar(std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  Dataset data;
  Rng rng(seed);
  auto make = [&](std::size_t n, std::vector<LabeledImage>& out) {
    for (std::size_t i = 0; i < n; ++i) {
      LabeledImage img;
      img.label = int(i % 10);
      img.pixels = TensorF({3, 32, 32});
      for (std::size_t p = 0; p < img.pixels.size(); ++p)
        img.pixels[p] = float(0.1 * rng.gaussian());
      const std::size_t row = 3 * std::size_t(img.label % 10);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t j = 0; j < 32; ++j) {
          img.pixels[c * 1024 + row * 32 + j] = 0.9f;
          img.pixels[c * 1024 + (row + 1) * 32 + j] = 0.9f;
        }
      out.push_back(std::move(img));
    }
  };
  make(n_train, data.train);
  make(n_test, data.test);
  return data;
}

TrainPlan small_plan() {
  TrainPlan p;
  p.name = "unit-smoke";
  p.arch = Arch::Tree3;
  p.tree = Tree3Config{2, 4, Activation::ReLU, Geometry::CIFAR};
  p.hp = HyperParams{0.01, 0.9, 0.0, 10};
  p.schedule.segments = {{0, 100, 0.01}};
  p.epochs = 2;
  p.mode = Mode::Offline;
  p.seed = 3;
  return p;
}

bool same_floats(const Tensor<float>& a, const Tensor<float>& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("training on a synthetic signal reduces loss and lifts accuracy") {
  const auto data = synthetic_cifar(200, 60, 1);
  auto plan = small_plan();
  plan.epochs = 4;

  auto out = train(plan, data);
  REQUIRE(out.result.series.size() == 4);
  CHECK(out.result.series.front().train_loss > out.result.series.back().train_loss);
  CHECK(out.result.final_test_accuracy > 0.5);  // block patterns are easy
  CHECK(out.result.final_test_accuracy == out.result.series.back().test_accuracy);
  CHECK(out.result.wall_seconds > 0.0);
  for (const auto& m : out.result.series) {
    CHECK(m.lr == 0.01);
    CHECK(std::isfinite(m.train_loss));
    for (double z : m.zero_frac) {
      CHECK(z >= 0.0);
      CHECK(z <= 1.0);
    }
  }
}

TEST_CASE("identical plans give bitwise-identical runs") {
  const auto data = synthetic_cifar(80, 20, 2);
  const auto plan = small_plan();
  auto a = train(plan, data);
  auto b = train(plan, data);
  REQUIRE(a.result.series.size() == b.result.series.size());
  for (std::size_t e = 0; e < a.result.series.size(); ++e) {
    CHECK(a.result.series[e].train_loss == b.result.series[e].train_loss);
    CHECK(a.result.series[e].test_accuracy == b.result.series[e].test_accuracy);
  }
  const auto& pa = std::get<Tree3Params<float>>(a.params);
  const auto& pb = std::get<Tree3Params<float>>(b.params);
  CHECK(same_floats(pa.w_conv, pb.w_conv));
  CHECK(same_floats(pa.w_tree, pb.w_tree));
  CHECK(same_floats(pa.w_fc, pb.w_fc));

  auto changed = plan;
  changed.seed = 4;
  auto c = train(changed, data);
  const auto& pc = std::get<Tree3Params<float>>(c.params);
  CHECK_FALSE(same_floats(pa.w_conv, pc.w_conv));
}

TEST_CASE("pruned and reference branches produce identical training runs") {
  const auto data = synthetic_cifar(100, 30, 3);
  auto plan = small_plan();
  plan.pruned_bp = false;
  auto ref = train(plan, data);
  plan.pruned_bp = true;
  auto pruned = train(plan, data);
  const auto& pr = std::get<Tree3Params<float>>(ref.params);
  const auto& pp = std::get<Tree3Params<float>>(pruned.params);
  CHECK(same_floats(pr.w_conv, pp.w_conv));
  CHECK(same_floats(pr.w_tree, pp.w_tree));
  CHECK(same_floats(pr.w_fc, pp.w_fc));
  for (std::size_t e = 0; e < ref.result.series.size(); ++e)
    CHECK(ref.result.series[e].train_loss == pruned.result.series[e].train_loss);
}

TEST_CASE("online mode makes exactly one pass over the requested prefix") {
  const auto data = synthetic_cifar(120, 20, 4);
  auto plan = small_plan();
  plan.mode = Mode::Online;
  plan.dataset_size = 60;
  plan.epochs = 1;

  auto bad = plan;
  bad.epochs = 5;
  CHECK_THROWS_AS(train(bad, data), ConfigError);  // online means one epoch

  auto out = train(plan, data);
  CHECK(out.result.series.size() == 1);

  // a run on a dataset truncated to the same prefix is identical: examples
  // beyond dataset_size are never touched
  Dataset trimmed;
  trimmed.train.assign(data.train.begin(), data.train.begin() + 60);
  trimmed.test = data.test;
  auto out2 = train(plan, trimmed);
  const auto& p1 = std::get<Tree3Params<float>>(out.params);
  const auto& p2 = std::get<Tree3Params<float>>(out2.params);
  CHECK(same_floats(p1.w_conv, p2.w_conv));
  CHECK(same_floats(p1.w_tree, p2.w_tree));
  CHECK(same_floats(p1.w_fc, p2.w_fc));
}

TEST_CASE("multi-threaded batches reproduce at a fixed thread count") {
  const auto data = synthetic_cifar(60, 10, 5);
  auto plan = small_plan();
  plan.epochs = 1;
  TrainOptions two;
  two.threads = 2;
  auto a = train(plan, data, two);
  auto b = train(plan, data, two);
  const auto& pa = std::get<Tree3Params<float>>(a.params);
  const auto& pb = std::get<Tree3Params<float>>(b.params);
  CHECK(same_floats(pa.w_conv, pb.w_conv));
  CHECK(same_floats(pa.w_tree, pb.w_tree));
  CHECK(same_floats(pa.w_fc, pb.w_fc));
}

TEST_CASE("runaway learning rate aborts with a named step") {
  const auto data = synthetic_cifar(80, 10, 6);
  auto plan = small_plan();
  plan.hp.eta = 1e18;
  plan.schedule.segments = {{0, 100, 1e18}};
  plan.epochs = 3;
  try {
    train(plan, data);
    FAIL("expected TrainAbort");
  } catch (const TrainAbort& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("step") != std::string::npos);
    CHECK(msg.find(plan.name) != std::string::npos);
  }
}

TEST_CASE("train validates plan against dataset") {
  auto plan = small_plan();
  Dataset empty;
  CHECK_THROWS_AS(train(plan, empty), ConfigError);

  // MNIST-geometry plan on CIFAR-shaped data
  const auto data = synthetic_cifar(30, 10, 7);
  plan.tree.geometry = Geometry::MNIST;
  CHECK_THROWS(train(plan, data));
}

TEST_CASE("trainer logs one line per epoch when given a stream") {
  const auto data = synthetic_cifar(40, 10, 8);
  auto plan = small_plan();
  plan.epochs = 2;
  std::ostringstream log;
  TrainOptions opts;
  opts.log = &log;
  train(plan, data, opts);
  const std::string text = log.str();
  CHECK(text.find("epoch 1/2") != std::string::npos);
  CHECK(text.find("epoch 2/2") != std::string::npos);
  CHECK(text.find(plan.name) != std::string::npos);
}

TEST_CASE("evaluate breaks argmax ties toward the lowest class") {
  Tree3Config cfg{1, 1, Activation::ReLU, Geometry::CIFAR};
  auto params = zero_tree3_params<float>(cfg);  // all logits identically zero
  std::vector<LabeledImage> examples;
  for (int c = 0; c < 10; ++c) {
    LabeledImage img;
    img.label = c;
    img.pixels = TensorF({3, 32, 32});
    examples.push_back(std::move(img));
  }
  CHECK(predict(params, cfg, examples[0].pixels) == 0);
  CHECK(evaluate(params, cfg, examples) == doctest::Approx(0.1));
}

TEST_CASE("mean_loss on zero params is ln 10") {
  Tree3Config cfg{1, 2, Activation::ReLU, Geometry::CIFAR};
  auto params = zero_tree3_params<float>(cfg);
  const auto data = synthetic_cifar(0, 12, 9);
  CHECK(mean_loss(params, cfg, data.test) == doctest::Approx(std::log(10.0)).epsilon(1e-6));
  CHECK(mean_loss(params, cfg, data.test, 5) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-6));
}

TEST_CASE("split_validation draws a disjoint seeded sample") {
  const auto data = synthetic_cifar(100, 0, 10);
  auto s1 = split_validation(data.train, 30, 7);
  CHECK(s1.train.size() == 70);
  CHECK(s1.val.size() == 30);

  // label multiset is preserved across the split
  std::array<int, 10> full_counts{}, split_counts{};
  for (const auto& e : data.train) ++full_counts[e.label];
  for (const auto& e : s1.train) ++split_counts[e.label];
  for (const auto& e : s1.val) ++split_counts[e.label];
  CHECK(full_counts == split_counts);

  auto s2 = split_validation(data.train, 30, 7);
  bool same = s1.val.size() == s2.val.size();
  for (std::size_t i = 0; same && i < s1.val.size(); ++i)
    same = s1.val[i].label == s2.val[i].label &&
           s1.val[i].pixels[0] == s2.val[i].pixels[0];
  CHECK(same);

  auto s3 = split_validation(data.train, 30, 8);
  bool differs = false;
  for (std::size_t i = 0; i < s1.val.size() && !differs; ++i)
    differs = s1.val[i].pixels[0] != s3.val[i].pixels[0];
  CHECK(differs);

  auto s0 = split_validation(data.train, 0, 1);
  CHECK(s0.train.size() == 100);
  CHECK(s0.val.empty());

  CHECK_THROWS_AS(split_validation(data.train, 101, 1), ConfigError);
}

TEST_CASE("replicates summarize successes and failures") {
  const auto data = synthetic_cifar(60, 20, 11);
  auto plan = small_plan();
  plan.epochs = 1;
  auto summary = run_replicates(plan, data, 3);
  CHECK(summary.replicates == 3);
  CHECK(summary.successes == 3);
  CHECK(summary.runs.size() == 3);
  double mean = 0.0;
  for (const auto& r : summary.runs) {
    CHECK(r.ok);
    mean += r.accuracy;
  }
  CHECK(summary.mean_accuracy == doctest::Approx(mean / 3.0).epsilon(1e-12));
  CHECK(summary.runs[0].seed == plan.seed);
  CHECK(summary.runs[2].seed == plan.seed + 2);

  // json output parses and carries the runs
  const auto text = summary.to_json_string();
  CHECK(text.find("\"replicates\": 3") != std::string::npos);
  CHECK(text.find("\"ok\": true") != std::string::npos);

  // a diverging plan is recorded as a failure without sinking the others
  plan.hp.eta = 1e18;
  plan.schedule.segments = {{0, 100, 1e18}};
  auto bad = run_replicates(plan, data, 2);
  CHECK(bad.successes == 0);
  CHECK(bad.runs[0].error.find("diverged") != std::string::npos);
}

TEST_CASE("metrics csv round-trips exactly") {
  std::vector<EpochMetrics> series(3);
  Rng rng(12);
  for (int e = 0; e < 3; ++e) {
    series[e].epoch = e + 1;
    series[e].train_loss = rng.uniform_real() * 3.0;
    series[e].test_accuracy = rng.uniform_real();
    series[e].lr = 0.075 * std::pow(0.6, e);
    for (auto& z : series[e].zero_frac) z = rng.uniform_real();
  }
  const auto path = fs::temp_directory_path() / "treebp-metrics-test.csv";
  write_metrics_csv(path, series);
  auto back = read_metrics_csv(path);
  REQUIRE(back.size() == 3);
  for (int e = 0; e < 3; ++e) {
    CHECK(back[e].epoch == series[e].epoch);
    CHECK(back[e].train_loss == series[e].train_loss);
    CHECK(back[e].test_accuracy == series[e].test_accuracy);
    CHECK(back[e].lr == series[e].lr);
    for (int l = 0; l < 3; ++l) CHECK(back[e].zero_frac[l] == series[e].zero_frac[l]);
  }

  std::ofstream bad(path);
  bad << "epoch,quux\n1,2\n";
  bad.close();
  CHECK_THROWS_AS(read_metrics_csv(path), FormatError);
  fs::remove(path);
}

TEST_CASE("checkpoint round-trip is bitwise for all architectures") {
  const auto dir = fs::temp_directory_path() / "treebp-ckpt-test";
  fs::create_directories(dir);

  SUBCASE("tree3") {
    Tree3Config cfg{3, 5, Activation::Sigmoid, Geometry::MNIST};
    auto params = init_tree3<float>(cfg, 21);
    save_checkpoint(dir / "t.ckpt", params, cfg);
    auto [back, cfg2] = load_tree3_checkpoint(dir / "t.ckpt");
    CHECK(cfg2.k == 3);
    CHECK(cfg2.m == 5);
    CHECK(cfg2.activation == Activation::Sigmoid);
    CHECK(cfg2.geometry == Geometry::MNIST);
    CHECK(same_floats(params.w_conv, back.w_conv));
    CHECK(same_floats(params.w_tree, back.w_tree));
    CHECK(same_floats(params.w_fc, back.w_fc));
  }
  SUBCASE("lenet5") {
    LeNet5Config cfg;
    cfg.c1 = 4;
    auto params = init_lenet5<float>(cfg, 22);
    save_checkpoint(dir / "l.ckpt", params, cfg);
    auto data = load_checkpoint(dir / "l.ckpt");
    CHECK(data.arch == Arch::LeNet5);
    const auto& back = std::get<LeNet5Params<float>>(data.params);
    auto ts = params.tensors();
    auto bs = back.tensors();
    for (std::size_t t = 0; t < ts.size(); ++t) CHECK(same_floats(*ts[t], *bs[t]));
    CHECK(data.lenet_cfg.c1 == 4);
  }
  SUBCASE("tentree") {
    Tree3Config cfg{2, 3, Activation::ReLU, Geometry::CIFAR};
    auto params = init_ten_tree<float>(cfg, 23);
    save_checkpoint(dir / "tt.ckpt", params, cfg);
    auto data = load_checkpoint(dir / "tt.ckpt");
    CHECK(data.arch == Arch::TenTree);
    const auto& back = std::get<TenTreeParams<float>>(data.params);
    CHECK(same_floats(params.w_conv, back.w_conv));
    for (int h = 0; h < 10; ++h) {
      CHECK(same_floats(params.heads[h].w_tree, back.heads[h].w_tree));
      CHECK(same_floats(params.heads[h].w_fc, back.heads[h].w_fc));
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint rejects corruption and config mismatch") {
  const auto dir = fs::temp_directory_path() / "treebp-ckpt-bad";
  fs::create_directories(dir);
  Tree3Config cfg{2, 2, Activation::ReLU, Geometry::CIFAR};
  auto params = init_tree3<float>(cfg, 1);
  save_checkpoint(dir / "ok.ckpt", params, cfg);

  // truncation
  {
    std::ifstream in(dir / "ok.ckpt", std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    std::ofstream out(dir / "short.ckpt", std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), FormatError);

  // wrong magic
  {
    std::ofstream out(dir / "junk.ckpt", std::ios::binary);
    out << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), FormatError);

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), FormatError);

  // config mismatch surfaces the differing fields
  Tree3Config other{6, 16, Activation::ReLU, Geometry::CIFAR};
  try {
    require_same_config(other, cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("K") != std::string::npos);
    CHECK(msg.find("M") != std::string::npos);
  }
  CHECK_NOTHROW(require_same_config(cfg, cfg));
  fs::remove_all(dir);
}

TEST_CASE("evaluate on checkpoint data dispatches by architecture") {
  Tree3Config cfg{1, 1, Activation::ReLU, Geometry::CIFAR};
  const auto dir = fs::temp_directory_path() / "treebp-ckpt-eval";
  fs::create_directories(dir);
  auto params = init_tree3<float>(cfg, 2);
  save_checkpoint(dir / "m.ckpt", params, cfg);
  auto data = load_checkpoint(dir / "m.ckpt");
  const auto ds = synthetic_cifar(0, 20, 13);
  const double direct = evaluate(params, cfg, ds.test);
  CHECK(evaluate(data, ds.test) == direct);
  fs::remove_all(dir);
}

TEST_CASE("measure_sparsity aggregates chunked zero fractions") {
  Tree3Config cfg{2, 3, Activation::ReLU, Geometry::CIFAR};
  auto params = init_tree3<float>(cfg, 31);
  const auto ds = synthetic_cifar(0, 80, 14);
  auto report = measure_sparsity(params, cfg, ds.test, 50, 5, 1);
  CHECK(report.examples == 50);
  CHECK(report.chunks == 5);
  for (int l = 0; l < 3; ++l) {
    CHECK(report.mean[l] >= 0.0);
    CHECK(report.mean[l] <= 1.0);
    CHECK(report.stddev[l] >= 0.0);
  }
  // ReLU nets at init keep a majority of conv routes dark
  CHECK(report.mean[0] > 0.5);

  // deterministic for a fixed seed
  auto again = measure_sparsity(params, cfg, ds.test, 50, 5, 1);
  for (int l = 0; l < 3; ++l) CHECK(report.mean[l] == again.mean[l]);
}
