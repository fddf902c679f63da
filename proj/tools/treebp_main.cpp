// treebp: train and inspect tree-wired and feedforward image classifiers.
//
// Subcommands: fetch, plans, train, eval, gradcheck, sparsity, gradhist,
// routes. Exit codes: 0 success, 1 runtime failure or failed check, 2 usage
// error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "treebp/checkpoint.hpp"
#include "treebp/dataset.hpp"
#include "treebp/fetch.hpp"
#include "treebp/grad.hpp"
#include "treebp/gradcheck.hpp"
#include "treebp/plan.hpp"
#include "treebp/routes.hpp"
#include "treebp/sparsity.hpp"
#include "treebp/trainer.hpp"

namespace fs = std::filesystem;
using namespace treebp;

namespace {

fs::path resolve_data_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("TREEBP_DATA_DIR")) return env;
  return "data";
}

fs::path cifar_root(const fs::path& data_dir) {
  return fs::exists(data_dir / "cifar10") ? data_dir / "cifar10" : data_dir;
}

fs::path mnist_root(const fs::path& data_dir) {
  return fs::exists(data_dir / "mnist") ? data_dir / "mnist" : data_dir;
}

Dataset load_for_plan(const TrainPlan& plan, const fs::path& data_dir) {
  return plan.uses_mnist() ? load_mnist(mnist_root(data_dir))
                           : load_cifar10(cifar_root(data_dir));
}

Dataset load_for_checkpoint(const CheckpointData& ckpt, const fs::path& data_dir) {
  const bool mnist =
      ckpt.arch != Arch::LeNet5 && ckpt.tree_cfg.geometry == Geometry::MNIST;
  return mnist ? load_mnist(mnist_root(data_dir)) : load_cifar10(cifar_root(data_dir));
}

// ---------------------------------------------------------------------------

struct FetchOpts {
  std::string data_dir;
  std::string dataset = "all";
};

int cmd_fetch(const FetchOpts& o) {
  const fs::path dir = resolve_data_dir(o.data_dir);
  if (o.dataset == "cifar10" || o.dataset == "all") fetch_cifar10(dir, &std::cout);
  if (o.dataset == "mnist" || o.dataset == "all") fetch_mnist(dir, &std::cout);
  std::cout << "datasets ready under " << dir.string() << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_plans(const std::string& json_name) {
  if (!json_name.empty()) {
    std::cout << find_plan(json_name).to_json_string() << std::endl;
    return 0;
  }
  for (const auto& plan : builtin_plans()) {
    std::cout << describe_plan(plan) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string plan_name;
  std::string plan_file;
  std::string data_dir;
  std::string out_dir;
  std::string arch;
  std::string pruned;  // "", "on", "off"
  std::uint64_t seed = 0;
  bool seed_set = false;
  int epochs = 0;
  int k = 0;
  int m = 0;
  std::size_t dataset_size = 0;
  bool dataset_size_set = false;
  std::size_t batch = 0;
  double threshold = -1.0;
  int replicates = 1;
  int threads = 1;
  bool full = false;
};

TrainPlan resolve_plan(const TrainOpts& o) {
  if (o.plan_name.empty() == o.plan_file.empty()) {
    throw ConfigError("train: give exactly one of --plan or --plan-file");
  }
  TrainPlan plan =
      o.plan_file.empty() ? find_plan(o.plan_name) : TrainPlan::load_file(o.plan_file);

  if (!o.arch.empty()) {
    if (o.arch == "tree3") plan.arch = Arch::Tree3;
    else if (o.arch == "lenet5") plan.arch = Arch::LeNet5;
    else if (o.arch == "tentree") plan.arch = Arch::TenTree;
    else throw ConfigError("train: unknown --arch " + o.arch);
  }
  if (o.seed_set) plan.seed = o.seed;
  if (o.epochs > 0) plan.epochs = o.epochs;
  if (o.k > 0) plan.tree.k = std::size_t(o.k);
  if (o.m > 0) plan.tree.m = std::size_t(o.m);
  if (o.dataset_size_set) plan.dataset_size = o.dataset_size;
  if (o.batch > 0) plan.hp.batch = o.batch;
  if (o.threshold >= 0.0) plan.threshold = o.threshold;
  if (o.pruned == "on") plan.pruned_bp = true;
  else if (o.pruned == "off") plan.pruned_bp = false;
  else if (!o.pruned.empty()) throw ConfigError("train: --pruned-bp takes on|off");
  plan.validate();
  return plan;
}

int cmd_train(const TrainOpts& o) {
  TrainPlan plan = resolve_plan(o);
  const fs::path data_dir = resolve_data_dir(o.data_dir);
  const Dataset data = load_for_plan(plan, data_dir);

  const std::size_t n_train =
      plan.dataset_size > 0 ? std::min(plan.dataset_size, data.train.size())
                            : data.train.size();
  const int epochs = plan.mode == Mode::Online ? 1 : plan.epochs;
  const std::uint64_t presentations = std::uint64_t(epochs) * n_train;
  constexpr std::uint64_t kFullGate = 1000000;
  if (presentations > kFullGate && !o.full) {
    std::cerr << "train: plan " << plan.name << " makes " << presentations
              << " example presentations (" << epochs << " epochs x " << n_train
              << " examples); pass --full to start a run of this size, or cut it"
                 " down with --epochs / --dataset-size."
              << std::endl;
    return 2;
  }

  const fs::path out =
      o.out_dir.empty() ? fs::path("runs") / plan.name : fs::path(o.out_dir);
  fs::create_directories(out);

  TrainOptions topts;
  topts.threads = o.threads;
  topts.log = &std::cout;

  if (o.replicates > 1) {
    const auto summary = run_replicates(plan, data, o.replicates, topts);
    std::ofstream(out / "replicates.json") << summary.to_json_string() << "\n";
    plan.save_file(out / "plan.json");
    std::cout << summary.plan_name << ": " << summary.successes << "/"
              << summary.replicates << " runs, accuracy " << std::fixed
              << std::setprecision(4) << summary.mean_accuracy << " +/- "
              << summary.std_accuracy << "\n"
              << "wrote " << (out / "replicates.json").string() << std::endl;
    return summary.successes == summary.replicates ? 0 : 1;
  }

  const auto result = train(plan, data, topts);
  write_metrics_csv(out / "metrics.csv", result.result.series);
  plan.save_file(out / "plan.json");
  const fs::path ckpt = out / "model.ckpt";
  std::visit(
      [&](const auto& params) {
        using P = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<P, LeNet5Params<float>>) {
          save_checkpoint(ckpt, params, plan.lenet);
        } else {
          save_checkpoint(ckpt, params, plan.tree);
        }
      },
      result.params);

  std::cout << plan.name << ": final test accuracy " << std::fixed
            << std::setprecision(4) << result.result.final_test_accuracy << " in "
            << std::setprecision(1) << result.result.wall_seconds << "s\n"
            << "wrote " << (out / "metrics.csv").string() << ", "
            << ckpt.string() << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalOpts {
  std::string ckpt;
  std::string data_dir;
  std::size_t limit = 0;
};

int cmd_eval(const EvalOpts& o) {
  const auto ckpt = load_checkpoint(o.ckpt);
  Dataset data = load_for_checkpoint(ckpt, resolve_data_dir(o.data_dir));
  if (o.limit > 0 && data.test.size() > o.limit) data.test.resize(o.limit);

  const double acc = evaluate(ckpt, data.test);
  std::cout << "checkpoint: " << o.ckpt << " (" << arch_name(ckpt.arch) << ")\n"
            << "test examples: " << data.test.size() << "\n"
            << "accuracy: " << std::fixed << std::setprecision(4) << acc << std::endl;
  if (ckpt.arch == Arch::Tree3) {
    const auto& p = std::get<Tree3Params<float>>(ckpt.params);
    std::cout << "mean loss: " << std::setprecision(4)
              << mean_loss(p, ckpt.tree_cfg, data.test) << std::endl;
  } else if (ckpt.arch == Arch::LeNet5) {
    const auto& p = std::get<LeNet5Params<float>>(ckpt.params);
    std::cout << "mean loss: " << std::setprecision(4)
              << mean_loss(p, ckpt.lenet_cfg, data.test) << std::endl;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct GradcheckOpts {
  std::string arch = "tree3";
  int k = 2;
  int m = 2;
  std::string geometry = "cifar";
  std::string activation = "relu";
  bool pruned = false;
  int c1 = 3, c2 = 3, f1 = 12, f2 = 8;
  double eps = 1e-5;
  double tolerance = 1e-6;
  std::size_t samples = 0;
  std::uint64_t seed = 1;
  bool inject_flip = false;
};

int cmd_gradcheck(const GradcheckOpts& o) {
  FdReport report;
  if (o.arch == "tree3") {
    Tree3Config cfg;
    cfg.k = std::size_t(o.k);
    cfg.m = std::size_t(o.m);
    cfg.geometry = o.geometry == "mnist" ? Geometry::MNIST : Geometry::CIFAR;
    cfg.activation = o.activation == "sigmoid" ? Activation::Sigmoid : Activation::ReLU;
    report = fd_check_tree3(cfg, o.seed, o.eps, o.samples, o.pruned, o.inject_flip);
  } else if (o.arch == "lenet5") {
    LeNet5Config cfg;
    cfg.c1 = std::size_t(o.c1);
    cfg.c2 = std::size_t(o.c2);
    cfg.f1 = std::size_t(o.f1);
    cfg.f2 = std::size_t(o.f2);
    cfg.activation = o.activation == "sigmoid" ? Activation::Sigmoid : Activation::ReLU;
    report = fd_check_lenet5(cfg, o.seed, o.eps, o.samples, o.inject_flip);
  } else {
    throw ConfigError("gradcheck: unknown --arch " + o.arch);
  }

  const bool pass = report.max_rel < o.tolerance;
  std::cout << "checked " << report.checked << " components, eps " << o.eps << "\n"
            << std::scientific << std::setprecision(3) << "max rel error  "
            << report.max_rel << "\nmean rel error " << report.mean_rel << "\n";
  if (!report.worst.empty()) std::cout << "worst: " << report.worst << "\n";
  std::cout << (pass ? "PASS" : "FAIL") << " (tolerance " << o.tolerance << ")"
            << std::endl;
  return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct SparsityOpts {
  std::string ckpt;
  std::string data_dir;
  std::size_t examples = 1000;
  int resamples = 10;
  std::uint64_t seed = 1;
};

int cmd_sparsity(const SparsityOpts& o) {
  const auto [params, cfg] = load_tree3_checkpoint(o.ckpt);
  const Dataset data = load_for_checkpoint(
      CheckpointData{Arch::Tree3, cfg, {}, params}, resolve_data_dir(o.data_dir));

  const auto report =
      measure_sparsity(params, cfg, data.test, o.examples, o.resamples, o.seed);
  const auto& names = tree3_layer_names();
  std::cout << "gradient zero fractions over " << report.examples << " test examples ("
            << report.chunks << " chunks):\n";
  for (std::size_t l = 0; l < 3; ++l) {
    std::cout << "  " << std::left << std::setw(5) << names[l] << std::right
              << std::fixed << std::setprecision(6) << report.mean[l] << " +/- "
              << report.stddev[l] << "\n";
  }
  const bool ordered =
      report.mean[0] > report.mean[1] && report.mean[1] > report.mean[2];
  std::cout << "ordering conv > tree > fc: " << (ordered ? "yes" : "no") << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------

struct GradhistOpts {
  std::string ckpt;
  std::string data_dir;
  std::string out_csv;
  std::string mode = "abs";
  std::string spacing = "log";
  std::size_t examples = 100;
  double target = 0.006;
  std::uint64_t seed = 1;
};

int cmd_gradhist(const GradhistOpts& o) {
  const auto [params, cfg] = load_tree3_checkpoint(o.ckpt);
  const Dataset data = load_for_checkpoint(
      CheckpointData{Arch::Tree3, cfg, {}, params}, resolve_data_dir(o.data_dir));

  const HistMode mode = o.mode == "rel" ? HistMode::Relative : HistMode::Abs;
  const HistSpacing spacing =
      o.spacing == "linear" ? HistSpacing::Linear : HistSpacing::Log;

  const std::size_t n = std::min(o.examples, data.test.size());
  std::vector<Tree3Grads<float>> bundles;
  std::vector<double> mags;
  Rng rng(derive_seed(o.seed, "gradhist"));
  std::vector<std::uint32_t> idx(data.test.size());
  std::iota(idx.begin(), idx.end(), 0u);
  rng.shuffle(idx);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = data.test[idx[i]];
    const auto trace = tree3_forward(params, cfg, ex.pixels);
    auto grads = backward_reference(params, cfg, trace, ex.label);
    collect_magnitudes(grads, &params, mode, mags);
    if (bundles.size() < 50) bundles.push_back(std::move(grads));
  }

  const auto hist = build_histogram(mags, spacing);
  std::cout << "examples " << n << ", nonzero magnitudes " << hist.total << "\n"
            << std::scientific << std::setprecision(3) << "range [" << hist.edges.front()
            << ", " << hist.edges.back() << "]\n";
  for (double q : {0.5, 0.9, 0.99}) {
    std::cout << "q" << std::fixed << std::setprecision(0) << 100 * q << " <= "
              << std::scientific << std::setprecision(3) << histogram_quantile(hist, q)
              << "\n";
  }
  if (mode == HistMode::Abs) {
    const double theta = find_threshold_for_fraction(bundles, o.target);
    std::cout << "theta for " << std::setprecision(3) << o.target
              << " surviving fraction: " << theta << std::endl;
  }

  if (!o.out_csv.empty()) {
    std::ofstream out(o.out_csv);
    if (!out) throw FormatError("cannot write " + o.out_csv);
    out << "bin_lo,bin_hi,count\n";
    out << std::setprecision(17);
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
      out << hist.edges[b] << ',' << hist.edges[b + 1] << ',' << hist.counts[b] << "\n";
    }
    std::cout << "wrote " << o.out_csv << std::endl;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct RoutesOpts {
  int k = 6;
  int m = 16;
  std::string geometry = "cifar";
  int c1 = 6, c2 = 16, f1 = 120, f2 = 84;
};

int cmd_routes(const RoutesOpts& o) {
  Tree3Config tree;
  tree.k = std::size_t(o.k);
  tree.m = std::size_t(o.m);
  tree.geometry = o.geometry == "mnist" ? Geometry::MNIST : Geometry::CIFAR;
  LeNet5Config lenet;
  lenet.c1 = std::size_t(o.c1);
  lenet.c2 = std::size_t(o.c2);
  lenet.f1 = std::size_t(o.f1);
  lenet.f2 = std::size_t(o.f2);

  std::cout << "routes from one first-layer weight to one output unit:\n"
            << "  tree3            " << count_routes_tree3() << "\n"
            << "  lenet5           " << count_routes_lenet5(lenet) << "  ("
            << kLeNetPostPoolPositions << " post-pool positions x " << lenet.f1
            << " x " << lenet.f2 << ")\n"
            << "per-example conv gradient route instances:\n"
            << "  tree3 K" << o.k << " M" << o.m << " " << o.geometry << "  "
            << count_gradient_instances_tree3(tree) << "\n"
            << "  lenet5 pre-pool  " << count_gradient_instances_lenet5_prepool(lenet)
            << "\n"
            << "  lenet5 post-pool " << count_gradient_instances_lenet5_postpool(lenet)
            << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tree-wired and feedforward image classifiers"};
  app.require_subcommand(1);
  int rc = 0;

  FetchOpts fetch_opts;
  auto* fetch_cmd = app.add_subcommand("fetch", "download and verify the datasets");
  fetch_cmd->add_option("--data-dir", fetch_opts.data_dir,
                        "target directory (default $TREEBP_DATA_DIR or ./data)");
  fetch_cmd->add_option("--dataset", fetch_opts.dataset, "cifar10, mnist or all")
      ->check(CLI::IsMember({"cifar10", "mnist", "all"}));
  fetch_cmd->callback([&] { rc = cmd_fetch(fetch_opts); });

  std::string plans_json;
  auto* plans_cmd = app.add_subcommand("plans", "list the built-in training plans");
  plans_cmd->add_option("--json", plans_json, "print one plan as JSON");
  plans_cmd->callback([&] { rc = cmd_plans(plans_json); });

  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "run a training plan");
  train_cmd->add_option("--plan", train_opts.plan_name, "built-in plan name");
  train_cmd->add_option("--plan-file", train_opts.plan_file, "plan JSON file");
  train_cmd->add_option("--data-dir", train_opts.data_dir, "dataset directory");
  train_cmd->add_option("--out", train_opts.out_dir,
                        "output directory (default runs/<plan>)");
  train_cmd->add_option("--seed", train_opts.seed, "override the plan seed")
      ->each([&](const std::string&) { train_opts.seed_set = true; });
  train_cmd->add_option("--epochs", train_opts.epochs, "override the epoch count");
  train_cmd->add_option("--k", train_opts.k, "override filters per channel");
  train_cmd->add_option("--m", train_opts.m, "override branch count");
  train_cmd->add_option("--arch", train_opts.arch, "override architecture")
      ->check(CLI::IsMember({"tree3", "lenet5", "tentree"}));
  train_cmd->add_option("--dataset-size", train_opts.dataset_size,
                        "train on the first N examples")
      ->each([&](const std::string&) { train_opts.dataset_size_set = true; });
  train_cmd->add_option("--batch", train_opts.batch, "override the batch size");
  train_cmd->add_option("--threshold", train_opts.threshold,
                        "zero gradient entries below this magnitude");
  train_cmd->add_option("--pruned-bp", train_opts.pruned,
                        "on|off: single-route backward pass")
      ->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--replicates", train_opts.replicates,
                        "repeat with consecutive seeds");
  train_cmd->add_option("--threads", train_opts.threads, "batch gradient workers");
  train_cmd->add_flag("--full", train_opts.full, "allow full-scale runs");
  train_cmd->footer(
      "Built-in plans (see `treebp plans` for hyperparameters):\n"
      "  offline CIFAR-10: lenet5-offline, tree3-k6m16-offline,\n"
      "    tree3-k15m16-offline, tree3-k15m80-offline, tentree-k15m80-offline\n"
      "  online CIFAR-10:  lenet5-online-{50k,25k,12k}, tree3-online-{50k,25k,12k}\n"
      "  MNIST:            tree3-mnist\n"
      "  desk-scale:       tree3-cifar-desk\n"
      "Full-scale runs (over 1M presentations) need --full.");
  train_cmd->callback([&] { rc = cmd_train(train_opts); });

  EvalOpts eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test set");
  eval_cmd->add_option("--ckpt", eval_opts.ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data-dir", eval_opts.data_dir, "dataset directory");
  eval_cmd->add_option("--limit", eval_opts.limit, "cap the number of test examples");
  eval_cmd->callback([&] { rc = cmd_eval(eval_opts); });

  GradcheckOpts gc_opts;
  auto* gc_cmd = app.add_subcommand(
      "gradcheck", "compare analytic gradients against central differences");
  gc_cmd->add_option("--arch", gc_opts.arch, "tree3 or lenet5")
      ->check(CLI::IsMember({"tree3", "lenet5"}));
  gc_cmd->add_option("--k", gc_opts.k, "tree3 filters per channel");
  gc_cmd->add_option("--m", gc_opts.m, "tree3 branches");
  gc_cmd->add_option("--geometry", gc_opts.geometry, "cifar or mnist")
      ->check(CLI::IsMember({"cifar", "mnist"}));
  gc_cmd->add_option("--activation", gc_opts.activation, "relu or sigmoid")
      ->check(CLI::IsMember({"relu", "sigmoid"}));
  gc_cmd->add_flag("--pruned", gc_opts.pruned, "check the single-route backward pass");
  gc_cmd->add_option("--c1", gc_opts.c1, "lenet5 conv1 maps");
  gc_cmd->add_option("--c2", gc_opts.c2, "lenet5 conv2 maps");
  gc_cmd->add_option("--f1", gc_opts.f1, "lenet5 first dense width");
  gc_cmd->add_option("--f2", gc_opts.f2, "lenet5 second dense width");
  gc_cmd->add_option("--eps", gc_opts.eps, "finite-difference step");
  gc_cmd->add_option("--tolerance", gc_opts.tolerance, "max relative error to pass");
  gc_cmd->add_option("--samples", gc_opts.samples,
                     "cap checked components per tensor (0 = all)");
  gc_cmd->add_option("--seed", gc_opts.seed, "rng seed");
  gc_cmd->add_flag("--inject-sign-flip", gc_opts.inject_flip,
                   "corrupt one gradient to prove the check can fail")
      ->group("");  // hidden
  gc_cmd->callback([&] { rc = cmd_gradcheck(gc_opts); });

  SparsityOpts sp_opts;
  auto* sp_cmd = app.add_subcommand(
      "sparsity", "measure per-layer gradient zero fractions of a tree3 checkpoint");
  sp_cmd->add_option("--ckpt", sp_opts.ckpt, "tree3 checkpoint")->required();
  sp_cmd->add_option("--data-dir", sp_opts.data_dir, "dataset directory");
  sp_cmd->add_option("--examples", sp_opts.examples, "test examples to use");
  sp_cmd->add_option("--resamples", sp_opts.resamples, "chunks for the error bar");
  sp_cmd->add_option("--seed", sp_opts.seed, "rng seed for the draw");
  sp_cmd->callback([&] { rc = cmd_sparsity(sp_opts); });

  GradhistOpts gh_opts;
  auto* gh_cmd = app.add_subcommand(
      "gradhist", "histogram gradient magnitudes of a tree3 checkpoint");
  gh_cmd->add_option("--ckpt", gh_opts.ckpt, "tree3 checkpoint")->required();
  gh_cmd->add_option("--data-dir", gh_opts.data_dir, "dataset directory");
  gh_cmd->add_option("--out", gh_opts.out_csv, "write bins as CSV");
  gh_cmd->add_option("--mode", gh_opts.mode, "abs (|g|) or rel (|g/w|)")
      ->check(CLI::IsMember({"abs", "rel"}));
  gh_cmd->add_option("--spacing", gh_opts.spacing, "log or linear bins")
      ->check(CLI::IsMember({"log", "linear"}));
  gh_cmd->add_option("--examples", gh_opts.examples, "test examples to use");
  gh_cmd->add_option("--target", gh_opts.target,
                     "surviving fraction for the suggested threshold");
  gh_cmd->add_option("--seed", gh_opts.seed, "rng seed for the draw");
  gh_cmd->callback([&] { rc = cmd_gradhist(gh_opts); });

  RoutesOpts rt_opts;
  auto* rt_cmd = app.add_subcommand(
      "routes", "print route and gradient-instance counts");
  rt_cmd->add_option("--k", rt_opts.k, "tree3 filters per channel");
  rt_cmd->add_option("--m", rt_opts.m, "tree3 branches");
  rt_cmd->add_option("--geometry", rt_opts.geometry, "cifar or mnist")
      ->check(CLI::IsMember({"cifar", "mnist"}));
  rt_cmd->add_option("--c1", rt_opts.c1, "lenet5 conv1 maps");
  rt_cmd->add_option("--c2", rt_opts.c2, "lenet5 conv2 maps");
  rt_cmd->add_option("--f1", rt_opts.f1, "lenet5 first dense width");
  rt_cmd->add_option("--f2", rt_opts.f2, "lenet5 second dense width");
  rt_cmd->callback([&] { rc = cmd_routes(rt_opts); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return rc;
}
