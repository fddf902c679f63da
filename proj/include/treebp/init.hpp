#pragma once

#include <cmath>
#include <cstddef>

#include "treebp/rng.hpp"
#include "treebp/tensor.hpp"

namespace treebp {

enum class InitScheme { HeNormal, GlorotNormal };

namespace detail {

template <typename T>
void fill_gaussian(Tensor<T>& t, Rng& rng, double stddev) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<T>(rng.gaussian(0.0, stddev));
  }
}

inline double init_stddev(InitScheme scheme, std::size_t fan_in, std::size_t fan_out) {
  if (scheme == InitScheme::HeNormal) return std::sqrt(2.0 / double(fan_in));
  return std::sqrt(2.0 / double(fan_in + fan_out));
}

}  // namespace detail
}  // namespace treebp
