#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "treebp/checkpoint.hpp"
#include "treebp/dataset.hpp"
#include "treebp/grad.hpp"
#include "treebp/plan.hpp"

namespace treebp {

// Thrown when a batch loss goes non-finite; the message names epoch and step.
struct TrainAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;     // mean per-presentation loss over the epoch
  double test_accuracy = 0.0;  // top-1 on the held-out test set
  double lr = 0.0;
  // Route-level gradient zero fractions, aggregated over the epoch. Tree3 and
  // tentree report conv/tree/fc; lenet5 reports conv1/conv2/all-fc.
  std::array<double, 3> zero_frac{};
};

struct RunResult {
  double final_test_accuracy = 0.0;
  std::vector<EpochMetrics> series;  // one entry per epoch
  std::array<double, 3> sparsity{};  // last epoch's zero fractions
  double wall_seconds = 0.0;
};

using AnyParams =
    std::variant<Tree3Params<float>, LeNet5Params<float>, TenTreeParams<float>>;

struct TrainOutput {
  RunResult result;
  AnyParams params;
};

struct TrainOptions {
  int threads = 1;             // batch gradient workers; results are
                               // deterministic for a fixed thread count
  std::ostream* log = nullptr; // per-epoch progress lines; null = silent
  std::size_t eval_limit = 0;  // cap test examples per epoch eval; 0 = all
};

// Runs a plan start to finish: init from plan.seed, per-epoch shuffle and
// (offline) augmentation, mini-batch mean gradients, optional magnitude
// threshold, Nesterov steps under the plan schedule, per-epoch test
// evaluation. Online mode trains one pass over the first dataset_size
// examples. Throws TrainAbort if a batch loss is non-finite.
TrainOutput train(const TrainPlan& plan, const Dataset& data,
                  const TrainOptions& opts = {});

// Top-1 accuracy; argmax ties resolve to the lowest class index.
double evaluate(const Tree3Params<float>& params, const Tree3Config& cfg,
                const std::vector<LabeledImage>& examples);
double evaluate(const LeNet5Params<float>& params, const LeNet5Config& cfg,
                const std::vector<LabeledImage>& examples);
double evaluate(const TenTreeParams<float>& params, const Tree3Config& cfg,
                const std::vector<LabeledImage>& examples);
double evaluate(const CheckpointData& ckpt, const std::vector<LabeledImage>& examples);

int predict(const Tree3Params<float>& params, const Tree3Config& cfg,
            const TensorF& image);
int predict(const LeNet5Params<float>& params, const LeNet5Config& cfg,
            const TensorF& image);
int predict(const TenTreeParams<float>& params, const Tree3Config& cfg,
            const TensorF& image);

// Mean softmax cross-entropy over (up to limit) examples; limit 0 = all.
double mean_loss(const Tree3Params<float>& params, const Tree3Config& cfg,
                 const std::vector<LabeledImage>& examples, std::size_t limit = 0);
double mean_loss(const LeNet5Params<float>& params, const LeNet5Config& cfg,
                 const std::vector<LabeledImage>& examples, std::size_t limit = 0);

struct ValidationSplit {
  std::vector<LabeledImage> train;  // remaining examples, original order
  std::vector<LabeledImage> val;    // drawn examples, draw order
};

// Draws val_size examples (without replacement, seeded) for validation.
ValidationSplit split_validation(const std::vector<LabeledImage>& full,
                                 std::size_t val_size, std::uint64_t seed);

struct ReplicateRun {
  std::uint64_t seed = 0;
  bool ok = false;
  double accuracy = 0.0;
  double wall_seconds = 0.0;
  std::string error;  // set when ok is false
};

struct ReplicateSummary {
  std::string plan_name;
  int replicates = 0;
  int successes = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample std over successful runs
  std::vector<ReplicateRun> runs;

  std::string to_json_string(int indent = 2) const;
};

// Repeats the plan with seeds plan.seed + 0 .. + (replicates-1). A run that
// throws is recorded as failed; the summary covers the successes.
ReplicateSummary run_replicates(const TrainPlan& plan, const Dataset& data,
                                int replicates, const TrainOptions& opts = {});

// Columns: epoch,train_loss,test_accuracy,lr,zero_frac_conv,zero_frac_tree,
// zero_frac_fc. Values round-trip through read_metrics_csv exactly.
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<EpochMetrics>& series);
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

struct SparsityReport {
  std::array<double, 3> mean{};    // conv/tree/fc zero fractions
  std::array<double, 3> stddev{};  // sample std across resample chunks
  std::uint64_t examples = 0;
  int chunks = 0;
};

// Per-layer gradient zero fractions over up to max_examples drawn test
// images, split into `resamples` chunks for an error bar.
SparsityReport measure_sparsity(const Tree3Params<float>& params, const Tree3Config& cfg,
                                const std::vector<LabeledImage>& examples,
                                std::size_t max_examples = 1000, int resamples = 10,
                                std::uint64_t seed = 1);

}  // namespace treebp
