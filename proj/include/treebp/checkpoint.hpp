#pragma once

#include <filesystem>
#include <utility>
#include <variant>

#include "treebp/lenet5.hpp"
#include "treebp/plan.hpp"
#include "treebp/tree3.hpp"

namespace treebp {

// Versioned binary checkpoint: magic + version, architecture tag, config
// record, then each tensor as (rank, extents, raw little-endian float32).
// load(save(x)) is bitwise x.

void save_checkpoint(const std::filesystem::path& path, const Tree3Params<float>& params,
                     const Tree3Config& cfg);
void save_checkpoint(const std::filesystem::path& path, const LeNet5Params<float>& params,
                     const LeNet5Config& cfg);
void save_checkpoint(const std::filesystem::path& path, const TenTreeParams<float>& params,
                     const Tree3Config& cfg);

struct CheckpointData {
  Arch arch = Arch::Tree3;
  Tree3Config tree_cfg;    // valid when arch != LeNet5
  LeNet5Config lenet_cfg;  // valid when arch == LeNet5
  std::variant<Tree3Params<float>, LeNet5Params<float>, TenTreeParams<float>> params;
};

CheckpointData load_checkpoint(const std::filesystem::path& path);

// Typed load; throws ConfigError if the file holds a different architecture.
std::pair<Tree3Params<float>, Tree3Config> load_tree3_checkpoint(
    const std::filesystem::path& path);

// Throws ConfigError naming each differing field (K/M/geometry/activation).
void require_same_config(const Tree3Config& expected, const Tree3Config& actual);

}  // namespace treebp
