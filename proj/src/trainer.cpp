#include "treebp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "treebp/optim.hpp"
#include "treebp/sparsity.hpp"

namespace treebp {

namespace {

template <class PD, class PF>
void add_grads(PD& sums, const PF& delta) {
  auto st = sums.tensors();
  const auto dt = delta.tensors();
  for (std::size_t t = 0; t < st.size(); ++t) {
    auto& s = *st[t];
    const auto& d = *dt[t];
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += double(d[i]);
  }
}

template <class P>
void zero_all(P& params) {
  for (auto* t : params.tensors()) t->fill(0);
}

template <class PF, class PD>
void batch_mean(PF& out, const PD& sums, std::size_t n) {
  auto ot = out.tensors();
  const auto st = sums.tensors();
  const double dn = double(n);
  for (std::size_t t = 0; t < ot.size(); ++t) {
    auto& o = *ot[t];
    const auto& s = *st[t];
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = float(s[i] / dn);
  }
}

void merge_counts(std::array<ZeroCount, 3>& into, const std::array<ZeroCount, 3>& from) {
  for (std::size_t l = 0; l < 3; ++l) {
    into[l].zeros += from[l].zeros;
    into[l].total += from[l].total;
  }
}

template <typename T>
int argmax_lowest(const Tensor<T>& logits) {
  std::size_t best = 0;
  for (std::size_t o = 1; o < logits.size(); ++o) {
    if (logits[o] > logits[best]) best = o;
  }
  return int(best);
}

struct Tree3Driver {
  using ParamsF = Tree3Params<float>;
  using ParamsD = Tree3Params<double>;
  Tree3Config cfg;
  bool pruned = false;

  ParamsF init(std::uint64_t seed) const { return init_tree3<float>(cfg, seed); }
  ParamsF zeros() const { return zero_tree3_params<float>(cfg); }
  ParamsD zerosd() const { return zero_tree3_params<double>(cfg); }

  double backprop(const ParamsF& p, const LabeledImage& ex, ParamsD& sums,
                  std::array<ZeroCount, 3>& counts) const {
    const auto trace = tree3_forward(p, cfg, ex.pixels);
    const auto grads = pruned ? backward_pruned_tree3(p, cfg, trace, ex.label)
                              : backward_reference(p, cfg, trace, ex.label);
    add_grads(sums, grads.g);
    merge_counts(counts, grads.zero_counts);
    return grads.loss;
  }

  int predict(const ParamsF& p, const TensorF& img) const {
    return argmax_lowest(tree3_forward(p, cfg, img).logits);
  }

  void threshold(ParamsF& grads, double theta) const {
    threshold_gradients(grads, theta);
  }
};

struct LeNet5Driver {
  using ParamsF = LeNet5Params<float>;
  using ParamsD = LeNet5Params<double>;
  LeNet5Config cfg;

  ParamsF init(std::uint64_t seed) const { return init_lenet5<float>(cfg, seed); }
  ParamsF zeros() const { return zero_lenet5_params<float>(cfg); }
  ParamsD zerosd() const { return zero_lenet5_params<double>(cfg); }

  double backprop(const ParamsF& p, const LabeledImage& ex, ParamsD& sums,
                  std::array<ZeroCount, 3>& counts) const {
    const auto trace = lenet5_forward(p, cfg, ex.pixels);
    const auto grads = backward_reference(p, cfg, trace, ex.label);
    add_grads(sums, grads.g);
    // Report as conv1 / conv2 / all-FC to fit the three-column metrics row.
    for (std::size_t l = 0; l < 5; ++l) {
      const std::size_t slot = l < 2 ? l : 2;
      counts[slot].zeros += grads.zero_counts[l].zeros;
      counts[slot].total += grads.zero_counts[l].total;
    }
    return grads.loss;
  }

  int predict(const ParamsF& p, const TensorF& img) const {
    return argmax_lowest(lenet5_forward(p, cfg, img).logits);
  }

  void threshold(ParamsF& grads, double theta) const {
    if (theta < 0.0) throw ConfigError("threshold_gradients: theta must be >= 0");
    detail::threshold_tensors(grads, theta);
  }
};

struct TenTreeDriver {
  using ParamsF = TenTreeParams<float>;
  using ParamsD = TenTreeParams<double>;
  Tree3Config cfg;

  ParamsF init(std::uint64_t seed) const { return init_ten_tree<float>(cfg, seed); }
  ParamsF zeros() const { return zero_ten_tree_params<float>(cfg); }
  ParamsD zerosd() const { return zero_ten_tree_params<double>(cfg); }

  double backprop(const ParamsF& p, const LabeledImage& ex, ParamsD& sums,
                  std::array<ZeroCount, 3>& counts) const {
    const auto trace = ten_tree_forward(p, cfg, ex.pixels);
    const auto grads = backward_reference_tentree(p, cfg, trace, ex.label);
    add_grads(sums, grads.g);
    merge_counts(counts, grads.zero_counts);
    return grads.loss;
  }

  int predict(const ParamsF& p, const TensorF& img) const {
    return argmax_lowest(ten_tree_forward(p, cfg, img).logits);
  }

  void threshold(ParamsF& grads, double theta) const {
    if (theta < 0.0) throw ConfigError("threshold_gradients: theta must be >= 0");
    detail::threshold_tensors(grads, theta);
  }
};

std::string fmt_seconds(double s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << s << "s";
  return os.str();
}

template <class Driver>
TrainOutput train_impl(const Driver& drv, const TrainPlan& plan, const Dataset& data,
                       const TrainOptions& opts) {
  using ParamsF = typename Driver::ParamsF;
  using ParamsD = typename Driver::ParamsD;

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  std::size_t n_train = data.train.size();
  if (plan.dataset_size > 0) n_train = std::min(plan.dataset_size, n_train);
  if (n_train == 0) throw ConfigError("train: empty training set");
  const int epochs = plan.mode == Mode::Online ? 1 : plan.epochs;
  const bool augmenting = !plan.augment.is_identity();
  const std::size_t threads =
      std::min<std::size_t>(std::max(1, opts.threads), n_train);

  ParamsF params = drv.init(plan.seed);
  ParamsF velocity = drv.zeros();
  ParamsF mean_grads = drv.zeros();

  struct Slot {
    ParamsD sums;
    std::array<ZeroCount, 3> counts{};
    double loss = 0.0;
    std::exception_ptr err;
  };
  std::vector<Slot> slots;
  slots.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    slots.push_back(Slot{drv.zerosd(), {}, 0.0, nullptr});
  }

  std::vector<std::uint32_t> order(n_train);
  RunResult result;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    HyperParams hp = plan.hp;
    hp.eta = schedule_eta(plan.schedule, epoch);
    hp.alpha = schedule_alpha(plan.schedule, epoch, plan.hp.alpha);

    std::iota(order.begin(), order.end(), 0u);
    Rng shuffle_rng(derive_seed(plan.seed, "shuffle", std::uint64_t(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::array<ZeroCount, 3> epoch_counts{};

    std::size_t step = 0;
    for (std::size_t start = 0; start < n_train; start += plan.hp.batch, ++step) {
      const std::size_t bsz = std::min(plan.hp.batch, n_train - start);
      const std::size_t used = std::min(threads, bsz);

      auto work = [&](std::size_t lo, std::size_t hi, Slot& slot) {
        try {
          for (std::size_t pos = lo; pos < hi; ++pos) {
            const LabeledImage* ex = &data.train[order[pos]];
            LabeledImage shifted;
            if (augmenting) {
              Rng arng = augment_rng(plan.seed, std::uint64_t(epoch), pos);
              shifted = augment(*ex, plan.augment, arng);
              ex = &shifted;
            }
            slot.loss += drv.backprop(params, *ex, slot.sums, slot.counts);
          }
        } catch (...) {
          slot.err = std::current_exception();
        }
      };

      for (std::size_t u = 0; u < used; ++u) {
        zero_all(slots[u].sums);
        slots[u].counts = {};
        slots[u].loss = 0.0;
        slots[u].err = nullptr;
      }
      if (used == 1) {
        work(start, start + bsz, slots[0]);
      } else {
        std::vector<std::thread> pool;
        pool.reserve(used);
        for (std::size_t u = 0; u < used; ++u) {
          const std::size_t lo = start + u * bsz / used;
          const std::size_t hi = start + (u + 1) * bsz / used;
          pool.emplace_back(work, lo, hi, std::ref(slots[u]));
        }
        for (auto& th : pool) th.join();
      }
      for (std::size_t u = 0; u < used; ++u) {
        if (slots[u].err) std::rethrow_exception(slots[u].err);
      }

      // Merge worker partials in slot order so a fixed thread count gives a
      // fixed result.
      double batch_loss = slots[0].loss;
      merge_counts(epoch_counts, slots[0].counts);
      for (std::size_t u = 1; u < used; ++u) {
        add_grads(slots[0].sums, slots[u].sums);
        batch_loss += slots[u].loss;
        merge_counts(epoch_counts, slots[u].counts);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainAbort("training diverged: non-finite batch loss at epoch " +
                         std::to_string(epoch) + ", step " + std::to_string(step) +
                         " (plan " + plan.name + ")");
      }
      epoch_loss += batch_loss;

      batch_mean(mean_grads, slots[0].sums, bsz);
      if (plan.threshold > 0.0) drv.threshold(mean_grads, plan.threshold);
      sgd_nesterov_step(params, mean_grads, velocity, hp);
    }

    std::size_t n_eval = data.test.size();
    if (opts.eval_limit > 0) n_eval = std::min(n_eval, opts.eval_limit);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n_eval; ++i) {
      correct += (drv.predict(params, data.test[i].pixels) == data.test[i].label);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = epoch_loss / double(n_train);
    m.test_accuracy = n_eval == 0 ? 0.0 : double(correct) / double(n_eval);
    m.lr = hp.eta;
    for (std::size_t l = 0; l < 3; ++l) m.zero_frac[l] = epoch_counts[l].fraction();
    result.series.push_back(m);

    if (opts.log) {
      std::ostringstream os;
      os << plan.name << " epoch " << (epoch + 1) << "/" << epochs << "  loss "
         << std::fixed << std::setprecision(4) << m.train_loss << "  acc "
         << std::setprecision(4) << m.test_accuracy << "  lr "
         << std::defaultfloat << m.lr << "  zero " << std::fixed
         << std::setprecision(3) << m.zero_frac[0] << "/" << m.zero_frac[1] << "/"
         << m.zero_frac[2] << "  " << fmt_seconds(elapsed());
      *opts.log << os.str() << std::endl;
    }
  }

  if (!result.series.empty()) {
    result.final_test_accuracy = result.series.back().test_accuracy;
    result.sparsity = result.series.back().zero_frac;
  }
  result.wall_seconds = elapsed();
  return TrainOutput{std::move(result), std::move(params)};
}

}  // namespace

TrainOutput train(const TrainPlan& plan, const Dataset& data, const TrainOptions& opts) {
  plan.validate();
  switch (plan.arch) {
    case Arch::Tree3:
      return train_impl(Tree3Driver{plan.tree, plan.pruned_bp}, plan, data, opts);
    case Arch::LeNet5:
      return train_impl(LeNet5Driver{plan.lenet}, plan, data, opts);
    case Arch::TenTree:
      return train_impl(TenTreeDriver{plan.tree}, plan, data, opts);
  }
  throw ConfigError("train: unknown architecture");
}

int predict(const Tree3Params<float>& params, const Tree3Config& cfg,
            const TensorF& image) {
  return argmax_lowest(tree3_forward(params, cfg, image).logits);
}

int predict(const LeNet5Params<float>& params, const LeNet5Config& cfg,
            const TensorF& image) {
  return argmax_lowest(lenet5_forward(params, cfg, image).logits);
}

int predict(const TenTreeParams<float>& params, const Tree3Config& cfg,
            const TensorF& image) {
  return argmax_lowest(ten_tree_forward(params, cfg, image).logits);
}

namespace {
template <class P, class C>
double evaluate_impl(const P& params, const C& cfg,
                     const std::vector<LabeledImage>& examples) {
  if (examples.empty()) throw ConfigError("evaluate: no examples");
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    correct += (predict(params, cfg, ex.pixels) == ex.label);
  }
  return double(correct) / double(examples.size());
}
}  // namespace

double evaluate(const Tree3Params<float>& params, const Tree3Config& cfg,
                const std::vector<LabeledImage>& examples) {
  return evaluate_impl(params, cfg, examples);
}

double evaluate(const LeNet5Params<float>& params, const LeNet5Config& cfg,
                const std::vector<LabeledImage>& examples) {
  return evaluate_impl(params, cfg, examples);
}

double evaluate(const TenTreeParams<float>& params, const Tree3Config& cfg,
                const std::vector<LabeledImage>& examples) {
  return evaluate_impl(params, cfg, examples);
}

double evaluate(const CheckpointData& ckpt, const std::vector<LabeledImage>& examples) {
  switch (ckpt.arch) {
    case Arch::Tree3:
      return evaluate(std::get<Tree3Params<float>>(ckpt.params), ckpt.tree_cfg, examples);
    case Arch::LeNet5:
      return evaluate(std::get<LeNet5Params<float>>(ckpt.params), ckpt.lenet_cfg,
                      examples);
    case Arch::TenTree:
      return evaluate(std::get<TenTreeParams<float>>(ckpt.params), ckpt.tree_cfg,
                      examples);
  }
  throw ConfigError("evaluate: unknown architecture");
}

double mean_loss(const Tree3Params<float>& params, const Tree3Config& cfg,
                 const std::vector<LabeledImage>& examples, std::size_t limit) {
  if (examples.empty()) throw ConfigError("mean_loss: no examples");
  std::size_t n = examples.size();
  if (limit > 0) n = std::min(n, limit);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto trace = tree3_forward(params, cfg, examples[i].pixels);
    total += double(softmax_xent(trace.logits, examples[i].label).loss);
  }
  return total / double(n);
}

double mean_loss(const LeNet5Params<float>& params, const LeNet5Config& cfg,
                 const std::vector<LabeledImage>& examples, std::size_t limit) {
  if (examples.empty()) throw ConfigError("mean_loss: no examples");
  std::size_t n = examples.size();
  if (limit > 0) n = std::min(n, limit);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto trace = lenet5_forward(params, cfg, examples[i].pixels);
    total += double(softmax_xent(trace.logits, examples[i].label).loss);
  }
  return total / double(n);
}

ValidationSplit split_validation(const std::vector<LabeledImage>& full,
                                 std::size_t val_size, std::uint64_t seed) {
  if (val_size > full.size()) {
    throw ConfigError("split_validation: val size " + std::to_string(val_size) +
                      " exceeds dataset size " + std::to_string(full.size()));
  }
  std::vector<std::uint32_t> idx(full.size());
  std::iota(idx.begin(), idx.end(), 0u);
  Rng rng(derive_seed(seed, "valsplit"));
  rng.shuffle(idx);

  ValidationSplit out;
  out.val.reserve(val_size);
  out.train.reserve(full.size() - val_size);
  std::vector<char> in_val(full.size(), 0);
  for (std::size_t i = 0; i < val_size; ++i) {
    out.val.push_back(full[idx[i]]);
    in_val[idx[i]] = 1;
  }
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (!in_val[i]) out.train.push_back(full[i]);
  }
  return out;
}

ReplicateSummary run_replicates(const TrainPlan& plan, const Dataset& data,
                                int replicates, const TrainOptions& opts) {
  if (replicates < 1) throw ConfigError("run_replicates: need >= 1 replicate");
  ReplicateSummary summary;
  summary.plan_name = plan.name;
  summary.replicates = replicates;

  for (int r = 0; r < replicates; ++r) {
    TrainPlan variant = plan;
    variant.seed = plan.seed + std::uint64_t(r);
    ReplicateRun run;
    run.seed = variant.seed;
    try {
      const auto out = train(variant, data, opts);
      run.ok = true;
      run.accuracy = out.result.final_test_accuracy;
      run.wall_seconds = out.result.wall_seconds;
    } catch (const std::exception& e) {
      run.ok = false;
      run.error = e.what();
    }
    summary.runs.push_back(std::move(run));
  }

  double sum = 0.0;
  for (const auto& run : summary.runs) {
    if (run.ok) {
      ++summary.successes;
      sum += run.accuracy;
    }
  }
  if (summary.successes > 0) {
    summary.mean_accuracy = sum / double(summary.successes);
    if (summary.successes > 1) {
      double ss = 0.0;
      for (const auto& run : summary.runs) {
        if (run.ok) {
          const double d = run.accuracy - summary.mean_accuracy;
          ss += d * d;
        }
      }
      summary.std_accuracy = std::sqrt(ss / double(summary.successes - 1));
    }
  }
  return summary;
}

std::string ReplicateSummary::to_json_string(int indent) const {
  nlohmann::json j;
  j["plan_name"] = plan_name;
  j["replicates"] = replicates;
  j["successes"] = successes;
  j["mean_accuracy"] = mean_accuracy;
  j["std_accuracy"] = std_accuracy;
  j["runs"] = nlohmann::json::array();
  for (const auto& run : runs) {
    nlohmann::json r;
    r["seed"] = run.seed;
    r["ok"] = run.ok;
    if (run.ok) {
      r["accuracy"] = run.accuracy;
      r["wall_seconds"] = run.wall_seconds;
    } else {
      r["error"] = run.error;
    }
    j["runs"].push_back(std::move(r));
  }
  return j.dump(indent);
}

namespace {
std::string csv_num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}
constexpr const char* kMetricsHeader =
    "epoch,train_loss,test_accuracy,lr,zero_frac_conv,zero_frac_tree,zero_frac_fc";
}  // namespace

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<EpochMetrics>& series) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write metrics csv: " + path.string());
  out << kMetricsHeader << "\n";
  for (const auto& m : series) {
    out << m.epoch << ',' << csv_num(m.train_loss) << ',' << csv_num(m.test_accuracy)
        << ',' << csv_num(m.lr) << ',' << csv_num(m.zero_frac[0]) << ','
        << csv_num(m.zero_frac[1]) << ',' << csv_num(m.zero_frac[2]) << "\n";
  }
  if (!out) throw FormatError("metrics csv write failed: " + path.string());
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read metrics csv: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw FormatError("metrics csv: bad header in " + path.string());
  }
  std::vector<EpochMetrics> series;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t begin = 0;
    while (true) {
      const std::size_t comma = line.find(',', begin);
      fields.push_back(line.substr(begin, comma - begin));
      if (comma == std::string::npos) break;
      begin = comma + 1;
    }
    if (fields.size() != 7) {
      throw FormatError("metrics csv: expected 7 fields, got " +
                        std::to_string(fields.size()) + " in " + path.string());
    }
    try {
      EpochMetrics m;
      m.epoch = std::stoi(fields[0]);
      m.train_loss = std::stod(fields[1]);
      m.test_accuracy = std::stod(fields[2]);
      m.lr = std::stod(fields[3]);
      for (std::size_t l = 0; l < 3; ++l) m.zero_frac[l] = std::stod(fields[4 + l]);
      series.push_back(m);
    } catch (const std::invalid_argument&) {
      throw FormatError("metrics csv: non-numeric field in " + path.string());
    }
  }
  return series;
}

SparsityReport measure_sparsity(const Tree3Params<float>& params, const Tree3Config& cfg,
                                const std::vector<LabeledImage>& examples,
                                std::size_t max_examples, int resamples,
                                std::uint64_t seed) {
  if (examples.empty()) throw ConfigError("measure_sparsity: no examples");
  if (resamples < 1) throw ConfigError("measure_sparsity: need >= 1 resample");
  const std::size_t n = std::min(max_examples, examples.size());

  std::vector<std::uint32_t> idx(examples.size());
  std::iota(idx.begin(), idx.end(), 0u);
  Rng rng(derive_seed(seed, "sparsity"));
  rng.shuffle(idx);

  std::vector<std::array<double, 3>> chunk_fracs;
  for (int c = 0; c < resamples; ++c) {
    const std::size_t lo = std::size_t(c) * n / std::size_t(resamples);
    const std::size_t hi = std::size_t(c + 1) * n / std::size_t(resamples);
    if (lo == hi) continue;
    std::array<ZeroCount, 3> counts{};
    for (std::size_t pos = lo; pos < hi; ++pos) {
      const auto& ex = examples[idx[pos]];
      const auto trace = tree3_forward(params, cfg, ex.pixels);
      const auto grads = backward_reference(params, cfg, trace, ex.label);
      merge_counts(counts, grads.zero_counts);
    }
    chunk_fracs.push_back(
        {counts[0].fraction(), counts[1].fraction(), counts[2].fraction()});
  }

  SparsityReport report;
  report.examples = n;
  report.chunks = int(chunk_fracs.size());
  if (chunk_fracs.empty()) return report;
  for (std::size_t l = 0; l < 3; ++l) {
    double sum = 0.0;
    for (const auto& f : chunk_fracs) sum += f[l];
    report.mean[l] = sum / double(chunk_fracs.size());
  }
  if (chunk_fracs.size() > 1) {
    for (std::size_t l = 0; l < 3; ++l) {
      double ss = 0.0;
      for (const auto& f : chunk_fracs) {
        const double d = f[l] - report.mean[l];
        ss += d * d;
      }
      report.stddev[l] = std::sqrt(ss / double(chunk_fracs.size() - 1));
    }
  }
  return report;
}

}  // namespace treebp
