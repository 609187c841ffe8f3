#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "advlab/circles.hpp"
#include "advlab/net.hpp"

namespace advlab::testing {

inline Mlp random_model(std::uint64_t seed, std::vector<std::size_t> sizes) {
  Mlp m = init_mlp(sizes, seed);
  // Glorot init leaves biases at zero; give them some spread so rectifier
  // kinks do not all pass through the origin.
  std::vector<DenseLayer> layers = m.layers();
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> b(-0.5, 0.5);
  for (auto& l : layers) {
    for (auto& v : l.bias) v = b(rng);
  }
  return Mlp(std::move(layers), m.num_classes());
}

inline Sample random_point(std::mt19937_64& rng, std::size_t dim, double lo = -1.0,
                           double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Sample s;
  s.lower_bound = lo;
  s.upper_bound = hi;
  s.coords.resize(dim);
  for (auto& v : s.coords) v = u(rng);
  return s;
}

/// Smallest |pre-activation| over rectifier units. Central differences are only
/// meaningful when no kink lies within the probe step.
inline double kink_distance(const Mlp& model, const ForwardTrace& t) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < model.layers().size(); ++k) {
    if (model.layers()[k].activation != Activation::kRelu) continue;
    for (double z : t.pre_activations[k]) m = std::min(m, std::abs(z));
  }
  return m;
}

inline double rel_err(std::span<const double> got, std::span<const double> want,
                      double floor = 1e-300) {
  std::vector<double> d(got.size());
  for (std::size_t i = 0; i < got.size(); ++i) d[i] = got[i] - want[i];
  return norm_l2(d) / std::max(norm_l2(want), floor);
}

/// The default circles model, trained once per test binary.
inline const circles::TrainedCircles& trained_circles() {
  static const circles::TrainedCircles t = circles::train_default({}, 1, {});
  return t;
}

}  // namespace advlab::testing
