#include "advlab/circles.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <ostream>
#include <random>

#include "advlab/attack.hpp"
#include "advlab/error.hpp"
#include "advlab/parallel.hpp"

namespace advlab::circles {

void CirclesParams::validate() const {
  if (!(inner_radius > 0.0 && inner_radius < outer_radius && outer_radius <= 1.0)) {
    throw ConfigError("circles: radii must satisfy 0 < inner < outer <= 1");
  }
  if (!(noise_std >= 0.0)) throw ConfigError("circles: noise_std must be non-negative");
  if (n == 0 || n % 2 != 0) throw ConfigError("circles: n must be positive and even");
}

CirclesDataset make_circles(const CirclesParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);

  CirclesDataset ds;
  ds.params = params;
  ds.samples.reserve(params.n);
  const std::size_t half = params.n / 2;
  for (std::size_t i = 0; i < params.n; ++i) {
    const bool inner = i >= half;
    const double radius = inner ? params.inner_radius : params.outer_radius;
    const double t = angle(rng);
    double x = radius * std::cos(t);
    double y = radius * std::sin(t);
    if (params.noise_std > 0.0) {
      x += params.noise_std * noise(rng);
      y += params.noise_std * noise(rng);
    }
    Sample s;
    s.coords = {std::clamp(x, kBoxLow, kBoxHigh), std::clamp(y, kBoxLow, kBoxHigh)};
    s.lower_bound = kBoxLow;
    s.upper_bound = kBoxHigh;
    s.label = inner ? kInnerClass : kOuterClass;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Mlp make_model(std::uint64_t init_seed) {
  const std::size_t sizes[] = {2, kHiddenUnits, 2};
  return init_mlp(sizes, init_seed, Activation::kRelu);
}

TrainedCircles train_default(const CirclesParams& params, std::uint64_t init_seed,
                             const TrainConfig& config) {
  CirclesDataset data = make_circles(params);
  TrainResult result = train_sgd(make_model(init_seed), data.samples, config);
  return {std::move(data), std::move(result)};
}

Vector cell_center(std::size_t resolution, std::size_t row, std::size_t col) {
  const double step = (kBoxHigh - kBoxLow) / static_cast<double>(resolution);
  return {kBoxLow + (static_cast<double>(col) + 0.5) * step,
          kBoxHigh - (static_cast<double>(row) + 0.5) * step};
}

double heatmap_cell(const Mlp& model, SourceKind kind, ClassIndex target,
                    std::span<const double> point) {
  const ForwardTrace trace = forward(model, point);
  double mass = 0.0;
  switch (kind) {
    case SourceKind::kCe:
    case SourceKind::kCeSign:
      mass = norm_l1(grad_input_ce(model, trace, target));
      break;
    case SourceKind::kLogit: {
      Vector seed(model.num_classes(), 0.0);
      seed.at(target) = 1.0;
      mass = norm_l1(grad_input(model, trace, seed));
      break;
    }
    case SourceKind::kMLogit:
      throw ConfigError("heatmap: m-logit has no heatmap definition (use ce, ce-sign or logit)");
  }
  if (kind == SourceKind::kCeSign) return mass > 0.0 ? 1.0 : 0.0;
  return mass < kLogFloor ? kLogSentinel : std::log(mass);
}

HeatmapGrid heatmap(const Mlp& model, SourceKind kind, ClassIndex target, std::size_t resolution,
                    std::size_t workers) {
  if (resolution < 2) throw ConfigError("heatmap: resolution must be at least 2");
  if (kind == SourceKind::kMLogit) {
    throw ConfigError("heatmap: m-logit has no heatmap definition (use ce, ce-sign or logit)");
  }
  if (target >= model.num_classes()) throw ConfigError("heatmap: target class out of range");
  HeatmapGrid grid;
  grid.resolution = resolution;
  grid.loss_kind = kind;
  grid.target = target;
  grid.values.resize(resolution * resolution);
  parallel_for(resolution * resolution, workers, [&](std::size_t idx) {
    const Vector p = cell_center(resolution, idx / resolution, idx % resolution);
    grid.values[idx] = heatmap_cell(model, kind, target, p);
  });
  return grid;
}

void write_heatmap_csv(std::ostream& os, const HeatmapGrid& grid) {
  os << "resolution,bounds,loss_kind\n";
  os << grid.resolution << ',' << format_real(kBoxLow) << ':' << format_real(kBoxHigh) << ','
     << source_name(grid.loss_kind) << '\n';
  for (std::size_t r = 0; r < grid.resolution; ++r) {
    for (std::size_t c = 0; c < grid.resolution; ++c) {
      if (c) os << ',';
      const double v = grid.at(r, c);
      os << (std::isinf(v) && v < 0 ? std::string("-inf") : format_real(v));
    }
    os << '\n';
  }
}

void write_heatmap_pgm(std::ostream& os, const HeatmapGrid& grid) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : grid.values) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  os << "P5\n" << grid.resolution << ' ' << grid.resolution << "\n255\n";
  std::string row(grid.resolution, '\0');
  for (std::size_t r = 0; r < grid.resolution; ++r) {
    for (std::size_t c = 0; c < grid.resolution; ++c) {
      const double v = grid.at(r, c);
      unsigned char level = 0;
      if (std::isfinite(v) && hi > lo) {
        level = static_cast<unsigned char>(std::lround(255.0 * (v - lo) / (hi - lo)));
      } else if (std::isfinite(v)) {
        // Constant grid: render every finite cell at full intensity.
        level = 255;
      }
      row[c] = static_cast<char>(level);
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

std::vector<Vector> adversarial_trajectory_2d(const Mlp& model, const Sample& x0,
                                              const AttackConfig& config) {
  if (x0.label != kOuterClass) throw DomainError("trajectory start must be an outer-class point");
  return run_attack(model, x0, config).points;
}

std::vector<bool> region_from_origin(const Mlp& model, ClassIndex cls, std::size_t resolution) {
  if (resolution < 2) throw ConfigError("region: resolution must be at least 2");
  std::vector<char> is_cls(resolution * resolution);
  for (std::size_t idx = 0; idx < is_cls.size(); ++idx) {
    const Vector p = cell_center(resolution, idx / resolution, idx % resolution);
    is_cls[idx] = argmax(forward(model, p).logits) == cls;
  }
  std::vector<bool> filled(is_cls.size(), false);
  const std::size_t mid = resolution / 2;
  const std::size_t start = mid * resolution + mid;
  if (!is_cls[start]) return filled;
  std::deque<std::size_t> queue{start};
  filled[start] = true;
  while (!queue.empty()) {
    const std::size_t idx = queue.front();
    queue.pop_front();
    const std::size_t r = idx / resolution;
    const std::size_t c = idx % resolution;
    auto visit = [&](std::size_t rr, std::size_t cc) {
      const std::size_t j = rr * resolution + cc;
      if (is_cls[j] && !filled[j]) {
        filled[j] = true;
        queue.push_back(j);
      }
    };
    if (r > 0) visit(r - 1, c);
    if (r + 1 < resolution) visit(r + 1, c);
    if (c > 0) visit(r, c - 1);
    if (c + 1 < resolution) visit(r, c + 1);
  }
  return filled;
}

}  // namespace advlab::circles
