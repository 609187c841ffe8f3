#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "advlab/losses.hpp"
#include "advlab/net.hpp"

// Finite-confidence checks of the softmax-weighted decomposition of the
// cross-entropy input gradient,
//
//   grad J = sum_{m != c} p_m (grad g_m - grad g_c),
//
// and of the two limits it implies: in D1 the gradient approaches
// grad g_r - grad g_c, in D3 it vanishes. The limits are checked through
// explicit bounds derived from the identity itself:
//
//   D1: |grad J - u_r| / |u_r| <= 2 (1 - p_r) max_m |u_m| / |u_r|
//   D3: |grad J|               <= (1 - p_c) max_m |u_m|
//
// with u_m = grad g_m - grad g_c.
namespace advlab::theory {

/// Floor for denominators of relative errors.
inline constexpr double kDenominatorFloor = 1e-300;
/// Tolerance of the exact identity in double precision.
inline constexpr double kIdentityTolerance = 1e-8;
/// Relative slack granted to the D1/D3 bounds, which are tight (equalities)
/// for binary models and so only hold up to rounding.
inline constexpr double kBoundSlack = 1e-9;

inline constexpr double kSinglePrecisionThreshold = 1e-8;
inline constexpr double kDoublePrecisionThreshold = 1e-16;

struct TheoremReport {
  Subspace subspace = Subspace::kD2;
  /// D1: relative distance to u_r. D2/D3: relative error of the identity.
  double residual = 0.0;
  /// Softmax mass the check is about: p_r (D1), max p (D2), p_c (D3).
  double confidence = 0.0;
  double grad_norm = 0.0;
  /// D1: bound on residual. D2: identity tolerance. D3: bound on grad_norm.
  double bound = 0.0;
  bool bound_satisfied = false;
};

/// |grad J - sum_m p_m u_m| / max(|grad J|, floor); grad J comes from
/// backpropagation, the sum from the per-logit Jacobian.
[[nodiscard]] double verify_d2_identity(const Mlp& model, const Sample& x, ClassIndex target);

/// Requires arg-max r != target; throws DomainError otherwise.
[[nodiscard]] TheoremReport verify_d1_limit(const Mlp& model, const Sample& x, ClassIndex target);

/// Requires arg-max == target; throws DomainError otherwise.
[[nodiscard]] TheoremReport verify_d3_limit(const Mlp& model, const Sample& x, ClassIndex target);

/// True iff every component of grad J is below `precision_threshold` in
/// magnitude (strict inequality).
[[nodiscard]] bool verify_sign_saturation(const Mlp& model, const Sample& x, ClassIndex target,
                                          double precision_threshold);

/// sum_{m != c} probs_m.
[[nodiscard]] double beta_mass(std::span<const double> probs, ClassIndex target);

struct PointCheck {
  std::size_t point_id = 0;
  TheoremReport report;
  /// The identity residual, computed at every point regardless of subspace.
  double identity_residual = 0.0;

  /// Subspace bound and identity both hold.
  [[nodiscard]] bool passed() const {
    return report.bound_satisfied && identity_residual <= kIdentityTolerance;
  }
};

/// Classifies each point with threshold tau and runs the matching check.
[[nodiscard]] std::vector<PointCheck> verify_points(const Mlp& model,
                                                    std::span<const Sample> points,
                                                    ClassIndex target, double tau = 0.9,
                                                    std::size_t workers = 1);

/// theorem_report.csv: point_id,subspace,confidence,residual,grad_norm,bound,bound_satisfied
void write_theorem_report_csv(std::ostream& os, std::span<const PointCheck> checks);

}  // namespace advlab::theory
