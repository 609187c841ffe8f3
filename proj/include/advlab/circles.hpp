#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "advlab/losses.hpp"
#include "advlab/net.hpp"

namespace advlab {

struct AttackConfig;

namespace circles {

/// Class of the outer ring (B) and of the inner ring (R, the attack target).
inline constexpr ClassIndex kOuterClass = 0;
inline constexpr ClassIndex kInnerClass = 1;
inline constexpr double kBoxLow = -1.0;
inline constexpr double kBoxHigh = 1.0;
inline constexpr std::size_t kHiddenUnits = 50;

struct CirclesParams {
  std::size_t n = 1000;
  double inner_radius = 0.5;
  double outer_radius = 1.0;
  double noise_std = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CirclesDataset {
  std::vector<Sample> samples;
  CirclesParams params;
};

/// n/2 points per ring (outer ring first): uniform angle, fixed radius, then
/// isotropic Gaussian noise and clamping to [-1, 1]^2.
[[nodiscard]] CirclesDataset make_circles(const CirclesParams& params);

/// 2 -> 50 (rectifier) -> 2 network with seeded Glorot initialization.
[[nodiscard]] Mlp make_model(std::uint64_t init_seed);

/// Data + init + train in one call with the default trainer settings.
struct TrainedCircles {
  CirclesDataset data;
  TrainResult result;
};
[[nodiscard]] TrainedCircles train_default(const CirclesParams& params, std::uint64_t init_seed,
                                           const TrainConfig& config = {});

/// Marker for cells whose gradient mass is below the log floor.
inline constexpr double kLogSentinel = -std::numeric_limits<double>::infinity();
/// Gradient masses below this are stored as kLogSentinel.
inline constexpr double kLogFloor = 1e-300;

struct HeatmapGrid {
  std::size_t resolution = 0;
  SourceKind loss_kind = SourceKind::kCe;
  ClassIndex target = kInnerClass;
  /// Row-major; row 0 is the top edge (y close to +1), column 0 the left edge.
  std::vector<double> values;

  [[nodiscard]] double at(std::size_t row, std::size_t col) const {
    return values[row * resolution + col];
  }
};

/// Center of a grid cell in input coordinates.
[[nodiscard]] Vector cell_center(std::size_t resolution, std::size_t row, std::size_t col);

/// Value of one heatmap cell:
///   ce      -> log(sum |grad_x J|)
///   logit   -> log(sum |grad_x g_target|)
///   ce-sign -> sign(sum |grad_x J|), i.e. 0 or 1
/// Log values below log(kLogFloor) become kLogSentinel. m-logit is not a
/// heatmap kind and raises ConfigError.
[[nodiscard]] double heatmap_cell(const Mlp& model, SourceKind kind, ClassIndex target,
                                  std::span<const double> point);

[[nodiscard]] HeatmapGrid heatmap(const Mlp& model, SourceKind kind, ClassIndex target,
                                  std::size_t resolution, std::size_t workers = 1);

/// CSV: header `resolution,bounds,loss_kind`, one metadata row, then
/// `resolution` rows of comma-separated cell values (sentinel written as -inf).
void write_heatmap_csv(std::ostream& os, const HeatmapGrid& grid);
/// Binary P5 graymap, min-max normalised over finite cells, sentinels at 0.
void write_heatmap_pgm(std::ostream& os, const HeatmapGrid& grid);

/// Coordinates visited by run_attack, X_0 first.
[[nodiscard]] std::vector<Vector> adversarial_trajectory_2d(const Mlp& model, const Sample& x0,
                                                            const AttackConfig& config);

/// Flood fill over the grid from the cell containing the origin through cells
/// predicted as `cls`; returns the filled mask (row-major, same layout as
/// HeatmapGrid).
[[nodiscard]] std::vector<bool> region_from_origin(const Mlp& model, ClassIndex cls,
                                                   std::size_t resolution);

}  // namespace circles
}  // namespace advlab
