#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "treebp/tensor.hpp"

namespace treebp {

struct HyperParams {
  double eta = 0.01;   // learning rate
  double mu = 0.0;     // momentum constant
  double alpha = 0.0;  // L2 coefficient
  std::size_t batch = 100;

  void validate() const {
    if (!(eta > 0.0)) throw ConfigError("hyperparams: eta must be > 0");
    if (mu < 0.0 || mu >= 1.0) throw ConfigError("hyperparams: mu must be in [0,1)");
    if (alpha < 0.0) throw ConfigError("hyperparams: alpha must be >= 0");
    if (batch == 0) throw ConfigError("hyperparams: batch must be >= 1");
  }
};

// Learning-rate schedule: either piecewise-constant segments over epoch ranges
// or eta0 * factor^(epoch/period). An optional switch changes the L2
// coefficient from a given epoch onward.
struct Schedule {
  enum class Kind { Piecewise, Geometric };

  struct Segment {
    int begin = 0;  // inclusive
    int end = 0;    // exclusive
    double eta = 0.0;
  };
  struct DecaySwitch {
    int epoch = 0;
    double alpha = 0.0;
  };

  Kind kind = Kind::Piecewise;
  std::vector<Segment> segments;  // piecewise: ascending, contiguous from 0
  double eta0 = 0.0;              // geometric
  double factor = 1.0;
  int period = 1;
  std::optional<DecaySwitch> decay_switch;

  void validate() const {
    if (kind == Kind::Piecewise) {
      if (segments.empty()) throw ConfigError("schedule: piecewise needs >= 1 segment");
      int expect = 0;
      for (const auto& s : segments) {
        if (s.begin != expect || s.end <= s.begin) {
          throw ConfigError("schedule: segments must partition [0, epochs) contiguously");
        }
        if (!(s.eta > 0.0)) throw ConfigError("schedule: eta must be > 0");
        expect = s.end;
      }
    } else {
      if (!(eta0 > 0.0)) throw ConfigError("schedule: eta0 must be > 0");
      if (!(factor > 0.0 && factor <= 1.0)) {
        throw ConfigError("schedule: geometric factor must be in (0,1]");
      }
      if (period <= 0) throw ConfigError("schedule: period must be >= 1");
    }
  }

  int covered_epochs() const {
    if (kind == Kind::Geometric) return std::numeric_limits<int>::max();
    return segments.empty() ? 0 : segments.back().end;
  }
};

inline double schedule_eta(const Schedule& s, int epoch) {
  if (epoch < 0) throw ConfigError("schedule_eta: negative epoch");
  if (s.kind == Schedule::Kind::Geometric) {
    return s.eta0 * std::pow(s.factor, epoch / s.period);
  }
  for (const auto& seg : s.segments) {
    if (epoch >= seg.begin && epoch < seg.end) return seg.eta;
  }
  throw ConfigError("schedule_eta: epoch " + std::to_string(epoch) +
                    " outside scheduled range [0, " +
                    std::to_string(s.covered_epochs()) + ")");
}

inline double schedule_alpha(const Schedule& s, int epoch, double base_alpha) {
  if (s.decay_switch && epoch >= s.decay_switch->epoch) return s.decay_switch->alpha;
  return base_alpha;
}

// SGD with Nesterov momentum and L2 weight decay, in the form standard in
// deep-learning frameworks:
//   g~ = g + alpha * w
//   v  = mu * v + g~
//   w  = w - eta * (g~ + mu * v)
// Gradients are expected to be mini-batch means.
template <typename P>
void sgd_nesterov_step(P& params, const P& grads, P& velocity, const HyperParams& hp) {
  hp.validate();
  auto wt = params.tensors();
  auto gt = grads.tensors();
  auto vt = velocity.tensors();
  if (gt.size() != wt.size() || vt.size() != wt.size()) {
    throw ShapeError("sgd step: tensor-list lengths differ");
  }
  for (std::size_t t = 0; t < wt.size(); ++t) {
    auto& w = *wt[t];
    const auto& g = *gt[t];
    auto& v = *vt[t];
    if (!w.same_shape(g) || !w.same_shape(v)) {
      throw ShapeError("sgd step: tensor " + std::to_string(t) + " shapes differ: w " +
                       shape_string(w.shape()) + ", g " + shape_string(g.shape()) +
                       ", v " + shape_string(v.shape()));
    }
    using T = std::remove_reference_t<decltype(w[0])>;
    const T eta = T(hp.eta), mu = T(hp.mu), alpha = T(hp.alpha);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T gtilde = g[i] + alpha * w[i];
      v[i] = mu * v[i] + gtilde;
      w[i] -= eta * (gtilde + mu * v[i]);
    }
  }
}

}  // namespace treebp
