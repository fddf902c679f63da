#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "treebp/dataset.hpp"
#include "treebp/lenet5.hpp"
#include "treebp/optim.hpp"
#include "treebp/tree3.hpp"

namespace treebp {

enum class Arch { Tree3, LeNet5, TenTree };
enum class Mode { Offline, Online };

const char* arch_name(Arch a);
const char* mode_name(Mode m);

// Everything needed to reproduce one training run. Serializes to a flat JSON
// object whose field names follow the usual symbols (eta, mu, alpha, batch,
// epochs, schedule, augment_shift, activation).
struct TrainPlan {
  std::string name;
  std::string note;  // free-text provenance of the preset's numbers
  Arch arch = Arch::Tree3;
  Tree3Config tree;     // K/M/geometry/activation for tree3 and tentree
  LeNet5Config lenet;   // widths for the feedforward baseline
  HyperParams hp;
  Schedule schedule;
  int epochs = 1;
  Mode mode = Mode::Offline;
  std::size_t dataset_size = 0;  // 0 = entire training set
  AugmentPolicy augment;
  std::uint64_t seed = 1;
  bool pruned_bp = false;
  double threshold = 0.0;  // 0 = off

  Activation activation() const {
    return arch == Arch::LeNet5 ? lenet.activation : tree.activation;
  }
  bool uses_mnist() const {
    return arch != Arch::LeNet5 && tree.geometry == Geometry::MNIST;
  }

  void validate() const;

  std::string to_json_string(int indent = 2) const;
  static TrainPlan from_json_string(const std::string& text);
  static TrainPlan load_file(const std::filesystem::path& path);
  void save_file(const std::filesystem::path& path) const;
};

// Every named preset, full-scale and desk-scale. Names are stable CLI
// identifiers.
const std::vector<TrainPlan>& builtin_plans();

// Looks a preset up by name; the error message lists all valid names.
const TrainPlan& find_plan(const std::string& name);

// One-line catalog entry (name, eta/mu/alpha/batch, schedule summary) used by
// --help and the `plans` listing.
std::string describe_plan(const TrainPlan& plan);

}  // namespace treebp
