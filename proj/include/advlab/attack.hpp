#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "advlab/losses.hpp"
#include "advlab/net.hpp"

namespace advlab {

/// Fixed perturbation multiplier alpha for every step.
struct EqualMultiplier {
  double alpha = 5e-4;
};

/// Dynamic multiplier alpha = beta / sum|P| so every step adds the same L1 mass.
struct EqualPerturbation {
  double beta = 5.0;
};

using Schedule = std::variant<EqualMultiplier, EqualPerturbation>;

/// `equal-multiplier` or `equal-perturbation`.
[[nodiscard]] std::string_view schedule_name(const Schedule& s);

struct FirstFlip {};
struct FixedIterations {};
struct TargetConfidence {
  double probability = 0.9;
};

using StopRule = std::variant<FirstFlip, FixedIterations, TargetConfidence>;

struct AttackConfig {
  PerturbationSource source;
  ClassIndex target_class = 0;
  Schedule schedule = EqualMultiplier{};
  std::size_t max_iterations = 250;
  /// L-infinity radius around X_0; off when empty.
  std::optional<double> epsilon_ball;
  StopRule stop_rule = FirstFlip{};

  void validate() const;
};

/// Metrics at X_n. `grad_l1` and `alpha_used` describe the step taken from
/// X_n (P_n and its multiplier); `clipped` is set when that step was altered by
/// the box or epsilon-ball projection.
struct IterationRecord {
  std::size_t iteration = 0;
  double softmax_initial = 0.0;
  double softmax_target = 0.0;
  double logit_initial = 0.0;
  double logit_target = 0.0;
  double grad_l1 = 0.0;
  double alpha_used = 0.0;
  double cum_l2 = 0.0;
  double cum_linf = 0.0;
  Subspace subspace = Subspace::kD2;
  bool clipped = false;
};

enum class AttackStatus {
  kStopRuleMet,
  kIterationLimit,
  /// Equal-perturbation step requested with sum|P| == 0.
  kVanishedGradient,
};

[[nodiscard]] std::string_view status_name(AttackStatus s);

struct AttackTrajectory {
  std::vector<IterationRecord> records;
  /// X_0, X_1, ... one entry per record.
  std::vector<Vector> points;
  std::optional<std::size_t> first_flip_iteration;
  std::optional<double> flip_l2;
  std::optional<double> flip_linf;
  Sample final_sample;
  /// Arg-max class of X_0; the `initial` columns of the records track it.
  ClassIndex initial_class = 0;
  AttackStatus status = AttackStatus::kIterationLimit;

  [[nodiscard]] bool flipped() const { return first_flip_iteration.has_value(); }
};

/// EqualMultiplier -> alpha; EqualPerturbation -> beta / sum|P|, or nullopt when
/// P is identically zero.
[[nodiscard]] std::optional<double> compute_alpha(const Schedule& schedule,
                                                  std::span<const double> perturbation);

/// Projects onto the sample box of x0 intersected with the optional
/// L-infinity ball of radius epsilon around x0. Keeps x0's bounds and label.
[[nodiscard]] Sample clip(std::span<const double> candidate, const Sample& x0,
                          std::optional<double> epsilon_ball);

/// X_{n+1} = clip(X_n + alpha_n P_n). Record 0 describes the unmodified input.
[[nodiscard]] AttackTrajectory run_attack(const Mlp& model, const Sample& x0,
                                          const AttackConfig& config);

// ---------------------------------------------------------------------------
// Aggregation

struct Band {
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
};

/// mean +/- 1.96 * std / sqrt(n) with the population standard deviation; the
/// band collapses to the mean for fewer than two values.
[[nodiscard]] Band confidence_band(std::span<const double> values);
/// Per-iteration bands of a samples x iterations matrix (rows equal length).
[[nodiscard]] std::vector<Band> confidence_band(const std::vector<Vector>& values);

inline constexpr std::array<double, 5> kQuantileLevels = {0.05, 0.25, 0.5, 0.75, 0.95};

struct MetricSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;
  std::array<double, 5> quantiles{};
};

[[nodiscard]] MetricSummary summarize(std::span<const double> values);

/// Mean curves over every eligible trajectory that reached iteration n.
struct CurveBands {
  std::vector<Band> softmax_initial;
  std::vector<Band> softmax_target;
  std::vector<Band> logit_initial;
  std::vector<Band> logit_target;
  std::vector<Band> grad_l1;
  std::vector<Band> cum_l2;
  std::vector<Band> cum_linf;
};

struct SampleTrajectory {
  std::size_t sample_id = 0;
  AttackTrajectory trajectory;
};

struct ConfigSummary {
  AttackConfig config;
  std::size_t n_eligible = 0;
  /// Samples already predicted as the target at X_0.
  std::size_t n_skipped = 0;
  std::size_t n_flipped = 0;
  double flip_rate = 0.0;
  /// Over flipped samples only.
  MetricSummary iterations;
  MetricSummary flip_l2;
  MetricSummary flip_linf;
  CurveBands curves;
};

struct SweepReport {
  std::vector<ConfigSummary> summaries;
  /// trajectories[k] holds the eligible samples of configs[k], in dataset order.
  std::vector<std::vector<SampleTrajectory>> trajectories;
};

/// Runs every config over every eligible sample. Results do not depend on
/// `workers`.
[[nodiscard]] SweepReport sweep(const Mlp& model, std::span<const Sample> dataset,
                                std::span<const AttackConfig> configs, std::size_t workers = 1);

/// trajectories.csv: sample_id,source,iteration,softmax_initial,softmax_target,
/// logit_initial,logit_target,grad_l1,alpha_used,cum_l2,cum_linf,subspace
void write_trajectories_csv(std::ostream& os, const SweepReport& report);
/// summary.csv: source,schedule,n_samples,flip_rate,iters_mean,iters_std,
/// l2_mean,l2_std,linf_mean,linf_std
void write_summary_csv(std::ostream& os, const SweepReport& report);

/// Pairwise (cascade) summation.
[[nodiscard]] double pairwise_sum(std::span<const double> values);

}  // namespace advlab
