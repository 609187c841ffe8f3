#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/net.hpp"

// Two-dimensional stand-in for adversarial retraining: a small binary
// classifier learns to tell genuine circles points from the end points of
// successful attacks. This is an analogue of image-domain retraining, not a
// reproduction of it; only relative detectability between attack sources is
// meaningful here.
namespace advlab::detector {

inline constexpr ClassIndex kGenuine = 0;
inline constexpr ClassIndex kAdversarial = 1;
inline constexpr std::size_t kHiddenUnits = 32;

struct AdversarialPoint {
  Sample sample;
  SourceKind source = SourceKind::kCe;
  /// Index of the genuine point the attack started from.
  std::size_t origin_id = 0;
};

struct CohortCount {
  SourceKind source = SourceKind::kCe;
  std::size_t attacked = 0;
  std::size_t flipped = 0;
  /// No successful attack: the cohort is left out of the dataset.
  bool omitted = false;
};

struct DetectorDataset {
  std::vector<Sample> genuine;
  std::vector<AdversarialPoint> adversarial;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.95;
  std::vector<CohortCount> cohorts;
};

/// Attacks every eligible genuine point with each config and keeps the final
/// samples of flipped trajectories.
[[nodiscard]] DetectorDataset build_detector_dataset(const Mlp& model,
                                                     std::span<const Sample> genuine,
                                                     std::span<const AttackConfig> configs,
                                                     std::uint64_t split_seed = 0,
                                                     double train_fraction = 0.95,
                                                     std::size_t workers = 1);

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> test;
  /// Source of each test sample; nullopt for genuine ones.
  std::vector<std::optional<SourceKind>> test_source;
};

/// Stratified by genuine/adversarial and source kind; labels are rewritten to
/// kGenuine / kAdversarial. `sources` selects which adversarial cohorts enter.
/// Throws ConfigError when either class is missing from train or test.
[[nodiscard]] Split split_dataset(const DetectorDataset& dataset,
                                  std::span<const SourceKind> sources);

struct DetectorAccuracy {
  /// Cohort source name, or "pooled" for the all-cohort row.
  std::string source;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double acc_genuine = 0.0;
  double acc_adversarial = 0.0;
  double acc_overall = 0.0;
  bool pooled = false;
};

struct DetectorReport {
  /// CSV rows: one per cohort (per-source mode) and/or the pooled row.
  std::vector<DetectorAccuracy> rows;
  /// Pooled detector evaluated on each cohort's held-out adversarial points
  /// together with all held-out genuine points.
  std::vector<DetectorAccuracy> pooled_by_source;
};

struct DetectorTraining {
  TrainConfig train;
  std::uint64_t init_seed = 0;
};

/// Per-source mode trains one detector per cohort; otherwise a single pooled
/// detector on all cohorts.
[[nodiscard]] DetectorReport train_detector(const DetectorDataset& dataset, bool per_source,
                                            const DetectorTraining& training = {});

/// Accuracy breakdown of `model` on a labelled test set.
[[nodiscard]] DetectorAccuracy evaluate(const Mlp& model, std::span<const Sample> test);

/// detector_report.csv: source,n_train,n_test,acc_genuine,acc_adversarial,acc_overall,pooled
void write_detector_report_csv(std::ostream& os, std::span<const DetectorAccuracy> rows);

}  // namespace advlab::detector
