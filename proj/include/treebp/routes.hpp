#pragma once

#include <cstdint>

#include "treebp/tree3.hpp"

namespace treebp {

// Routes: number of distinct forward paths from one first-layer conv weight to
// a given output unit. In the tree architecture every weight reaches the output
// through exactly one path; in LeNet-5 a conv1 weight fans out across later
// layers.

// A conv1 5x5 filter weight in LeNet-5 touches a 28x28 map whose pooled units
// feed every unit of both hidden dense layers. Counted after pooling (one
// surviving path per 2x2 window), the paths per weight into one output unit:
// (16 * 25 / 4) * 120 * 84.
constexpr std::uint64_t kLeNetPostPoolPositions = 16ull * 25 / 4;  // 100

inline std::uint64_t count_routes_lenet5(const LeNet5Config& cfg = LeNet5Config{}) {
  return kLeNetPostPoolPositions * cfg.f1 * cfg.f2;
}

inline constexpr std::uint64_t count_routes_tree3() { return 1; }

// Gradient instances: route-resolved first-layer gradient contributions summed
// during one backward pass, before any pooling/gating collapses them.
// Tree-3: 25 taps x C channels x K filters x conv-map positions x M branches.
inline std::uint64_t count_gradient_instances_tree3(const Tree3Config& cfg) {
  const std::uint64_t taps = kFilterSize * kFilterSize;
  const std::uint64_t chw = cfg.conv_hw();
  return taps * cfg.channels() * cfg.k * chw * chw * cfg.m;
}

inline std::uint64_t count_gradient_instances_tree3(std::size_t k, std::size_t m,
                                                    Geometry geometry = Geometry::CIFAR) {
  Tree3Config cfg;
  cfg.k = k;
  cfg.m = m;
  cfg.geometry = geometry;
  return count_gradient_instances_tree3(cfg);
}

// LeNet-5 conv1 instances over the full 28x28 pre-pool map, and the count
// after max-pooling keeps one position per 2x2 window.
inline std::uint64_t count_gradient_instances_lenet5_prepool(const LeNet5Config& cfg = LeNet5Config{}) {
  const std::uint64_t taps = kFilterSize * kFilterSize;
  return taps * LeNet5Config::kChannels * cfg.c1 * 28ull * 28ull;
}

inline std::uint64_t count_gradient_instances_lenet5_postpool(const LeNet5Config& cfg = LeNet5Config{}) {
  return count_gradient_instances_lenet5_prepool(cfg) / 4;
}

}  // namespace treebp
