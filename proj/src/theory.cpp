#include "advlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "advlab/error.hpp"
#include "advlab/parallel.hpp"

namespace advlab::theory {

namespace {

struct Decomposition {
  Vector probs;
  Vector grad_j;             // by backpropagation of the CE seed
  std::vector<Vector> diff;  // u_m = grad g_m - grad g_c (u_c = 0)
  Vector diff_norm;
};

Decomposition decompose(const Mlp& model, const Sample& x, ClassIndex target) {
  if (target >= model.num_classes()) throw ConfigError("target class out of range");
  const ForwardTrace trace = forward(model, x);
  Decomposition d;
  d.probs = softmax(trace.logits);
  d.grad_j = grad_input_ce(model, trace, target);
  const auto jac = logit_jacobian(model, trace);
  for (std::size_t m = 0; m < jac.size(); ++m) {
    Vector u(jac[m].size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = jac[m][i] - jac[target][i];
    d.diff_norm.push_back(norm_l2(u));
    d.diff.push_back(std::move(u));
  }
  return d;
}

double relative_distance(std::span<const double> a, std::span<const double> b, double denom) {
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return norm_l2(r) / std::max(denom, kDenominatorFloor);
}

double identity_residual(const Decomposition& d, ClassIndex target) {
  Vector sum(d.grad_j.size(), 0.0);
  for (std::size_t m = 0; m < d.diff.size(); ++m) {
    if (m == target) continue;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += d.probs[m] * d.diff[m][i];
  }
  return relative_distance(d.grad_j, sum, norm_l2(d.grad_j));
}

double max_diff_norm(const Decomposition& d) {
  return *std::max_element(d.diff_norm.begin(), d.diff_norm.end());
}

}  // namespace

double beta_mass(std::span<const double> probs, ClassIndex target) {
  if (target >= probs.size()) throw ConfigError("target class out of range");
  double s = 0.0;
  for (std::size_t m = 0; m < probs.size(); ++m) {
    if (m != target) s += probs[m];
  }
  return s;
}

double verify_d2_identity(const Mlp& model, const Sample& x, ClassIndex target) {
  return identity_residual(decompose(model, x, target), target);
}

TheoremReport verify_d1_limit(const Mlp& model, const Sample& x, ClassIndex target) {
  const Decomposition d = decompose(model, x, target);
  const ClassIndex r = argmax(d.probs);
  if (r == target) throw DomainError("d1 check requires a point predicted as a non-target class");

  TheoremReport rep;
  rep.subspace = classify_subspace(d.probs, target);
  rep.confidence = d.probs[r];
  rep.grad_norm = norm_l2(d.grad_j);
  const double ur = std::max(d.diff_norm[r], kDenominatorFloor);
  rep.residual = relative_distance(d.grad_j, d.diff[r], ur);
  // 1 - p_r summed from the small terms keeps its relative precision.
  const double rest = beta_mass(d.probs, r);
  rep.bound = 2.0 * rest * max_diff_norm(d) / ur;
  rep.bound_satisfied = rep.residual <= rep.bound * (1.0 + kBoundSlack);
  return rep;
}

TheoremReport verify_d3_limit(const Mlp& model, const Sample& x, ClassIndex target) {
  const Decomposition d = decompose(model, x, target);
  if (argmax(d.probs) != target) throw DomainError("d3 check requires a point predicted as the target");

  TheoremReport rep;
  rep.subspace = classify_subspace(d.probs, target);
  rep.confidence = d.probs[target];
  rep.grad_norm = norm_l2(d.grad_j);
  rep.residual = identity_residual(d, target);
  rep.bound = beta_mass(d.probs, target) * max_diff_norm(d);
  rep.bound_satisfied = rep.grad_norm <= rep.bound * (1.0 + kBoundSlack);
  return rep;
}

bool verify_sign_saturation(const Mlp& model, const Sample& x, ClassIndex target,
                            double precision_threshold) {
  const Vector g = grad_input_ce(model, x, target);
  return std::all_of(g.begin(), g.end(),
                     [&](double v) { return std::abs(v) < precision_threshold; });
}

std::vector<PointCheck> verify_points(const Mlp& model, std::span<const Sample> points,
                                      ClassIndex target, double tau, std::size_t workers) {
  std::vector<PointCheck> out(points.size());
  parallel_for(points.size(), workers, [&](std::size_t i) {
    PointCheck pc;
    pc.point_id = i;
    const Decomposition d = decompose(model, points[i], target);
    pc.identity_residual = identity_residual(d, target);
    const Subspace s = classify_subspace(d.probs, target, tau);
    if (s == Subspace::kD1) {
      pc.report = verify_d1_limit(model, points[i], target);
    } else if (s == Subspace::kD3) {
      pc.report = verify_d3_limit(model, points[i], target);
    } else {
      pc.report.residual = pc.identity_residual;
      pc.report.confidence = *std::max_element(d.probs.begin(), d.probs.end());
      pc.report.grad_norm = norm_l2(d.grad_j);
      pc.report.bound = kIdentityTolerance;
      pc.report.bound_satisfied = pc.identity_residual <= kIdentityTolerance;
    }
    // Subspace tag follows the caller's tau, not the default one.
    pc.report.subspace = s;
    out[i] = pc;
  });
  return out;
}

void write_theorem_report_csv(std::ostream& os, std::span<const PointCheck> checks) {
  os << "point_id,subspace,confidence,residual,grad_norm,bound,bound_satisfied\n";
  for (const auto& c : checks) {
    os << c.point_id << ',' << subspace_name(c.report.subspace) << ','
       << format_real(c.report.confidence) << ',' << format_real(c.report.residual) << ','
       << format_real(c.report.grad_norm) << ',' << format_real(c.report.bound) << ','
       << (c.passed() ? "true" : "false") << '\n';
  }
}

}  // namespace advlab::theory
