#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advlab/net.hpp"

namespace advlab {

enum class SourceKind { kCe, kCeSign, kLogit, kMLogit };

/// The four kinds in canonical order: ce, ce-sign, logit, m-logit.
inline constexpr SourceKind kAllSources[] = {SourceKind::kCe, SourceKind::kCeSign,
                                             SourceKind::kLogit, SourceKind::kMLogit};

/// CLI/config names: `ce`, `ce-sign`, `logit`, `m-logit`.
[[nodiscard]] std::string_view source_name(SourceKind kind);
/// Throws ConfigError listing the valid names when `name` is unknown.
[[nodiscard]] SourceKind parse_source(std::string_view name);

/// Generator of the per-iteration perturbation direction.
///
/// Every kind returns the direction whose addition raises the target-class
/// likelihood; the attack loop only ever adds alpha * P.
struct PerturbationSource {
  SourceKind kind = SourceKind::kCe;
  /// Logit margin at which the M-logit loss saturates.
  double kappa = 20.0;
  /// CE-sign components with magnitude below this are taken as zero.
  double sign_epsilon = 1e-16;

  void validate() const;
};

[[nodiscard]] Vector perturbation(const PerturbationSource& source, const Mlp& model,
                                  const ForwardTrace& trace, ClassIndex target);
[[nodiscard]] Vector perturbation(const PerturbationSource& source, const Mlp& model,
                                  const Sample& x, ClassIndex target);

/// Componentwise sign with |v_i| < epsilon mapped to 0.
[[nodiscard]] Vector thresholded_sign(std::span<const double> v, double epsilon);

/// Arg-max over classes other than `target`; ties go to the lowest index.
[[nodiscard]] ClassIndex runner_up(std::span<const double> logits, ClassIndex target);

enum class Subspace { kD1, kD2, kD3 };

[[nodiscard]] std::string_view subspace_name(Subspace s);

inline constexpr double kDefaultConfidence = 0.9;

/// D1: confidently some class other than `target`; D3: probs[target] >= tau;
/// D2 otherwise. Requires 0.5 < tau < 1.
[[nodiscard]] Subspace classify_subspace(std::span<const double> probs, ClassIndex target,
                                         double tau = kDefaultConfidence);

}  // namespace advlab
