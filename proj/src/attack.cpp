#include "advlab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "advlab/error.hpp"
#include "advlab/parallel.hpp"

namespace advlab {

std::string_view schedule_name(const Schedule& s) {
  return std::holds_alternative<EqualMultiplier>(s) ? "equal-multiplier" : "equal-perturbation";
}

std::string_view status_name(AttackStatus s) {
  switch (s) {
    case AttackStatus::kStopRuleMet:
      return "stop-rule";
    case AttackStatus::kIterationLimit:
      return "iteration-limit";
    case AttackStatus::kVanishedGradient:
      return "vanished-gradient";
  }
  return "?";
}

void AttackConfig::validate() const {
  source.validate();
  if (const auto* m = std::get_if<EqualMultiplier>(&schedule)) {
    // alpha = 0 is accepted: it is the null-step baseline.
    if (!(m->alpha >= 0.0) || !std::isfinite(m->alpha)) {
      throw ConfigError("equal-multiplier alpha must be finite and non-negative");
    }
  } else {
    const auto& p = std::get<EqualPerturbation>(schedule);
    if (!(p.beta > 0.0) || !std::isfinite(p.beta)) {
      throw ConfigError("equal-perturbation beta must be finite and positive");
    }
  }
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  if (epsilon_ball && !(*epsilon_ball > 0.0)) throw ConfigError("epsilon ball must be positive");
  if (const auto* t = std::get_if<TargetConfidence>(&stop_rule)) {
    if (!(t->probability > 0.0 && t->probability < 1.0)) {
      throw ConfigError("target confidence must lie in (0, 1)");
    }
  }
}

std::optional<double> compute_alpha(const Schedule& schedule, std::span<const double> perturbation) {
  if (const auto* m = std::get_if<EqualMultiplier>(&schedule)) return m->alpha;
  const double mass = norm_l1(perturbation);
  if (mass == 0.0) return std::nullopt;
  return std::get<EqualPerturbation>(schedule).beta / mass;
}

Sample clip(std::span<const double> candidate, const Sample& x0, std::optional<double> epsilon_ball) {
  if (candidate.size() != x0.coords.size()) throw ShapeError("clip: dimension mismatch");
  Sample out = x0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    double lo = x0.lower_bound;
    double hi = x0.upper_bound;
    if (epsilon_ball) {
      lo = std::max(lo, x0.coords[i] - *epsilon_ball);
      hi = std::min(hi, x0.coords[i] + *epsilon_ball);
    }
    out.coords[i] = std::clamp(candidate[i], lo, hi);
  }
  return out;
}

namespace {

struct Displacement {
  double l2;
  double linf;
};

Displacement displacement(const Vector& x, const Vector& x0) {
  Vector d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - x0[i];
  return {norm_l2(d), norm_linf(d)};
}

}  // namespace

AttackTrajectory run_attack(const Mlp& model, const Sample& x0, const AttackConfig& config) {
  config.validate();
  x0.validate();
  if (model.num_classes() < 2) throw ConfigError("attack needs a model with at least two classes");
  if (x0.coords.size() != model.input_dim()) throw ShapeError("attack: input dimension mismatch");
  const ClassIndex target = config.target_class;
  if (target >= model.num_classes()) throw ConfigError("attack: target class out of range");

  AttackTrajectory traj;
  Vector x = x0.coords;
  ForwardTrace trace = forward(model, x);
  traj.initial_class = argmax(trace.logits);

  for (std::size_t n = 0;; ++n) {
    const Vector probs = softmax(trace.logits);
    const Displacement disp = displacement(x, x0.coords);
    const Vector p = perturbation(config.source, model, trace, target);
    const std::optional<double> alpha = compute_alpha(config.schedule, p);

    IterationRecord rec;
    rec.iteration = n;
    rec.softmax_initial = probs[traj.initial_class];
    rec.softmax_target = probs[target];
    rec.logit_initial = trace.logits[traj.initial_class];
    rec.logit_target = trace.logits[target];
    rec.grad_l1 = norm_l1(p);
    rec.alpha_used = alpha.value_or(0.0);
    rec.cum_l2 = disp.l2;
    rec.cum_linf = disp.linf;
    rec.subspace = classify_subspace(probs, target);

    if (!traj.first_flip_iteration && argmax(trace.logits) == target) {
      traj.first_flip_iteration = n;
      traj.flip_l2 = disp.l2;
      traj.flip_linf = disp.linf;
    }

    bool stop = false;
    if (std::holds_alternative<FirstFlip>(config.stop_rule)) {
      stop = traj.first_flip_iteration.has_value();
    } else if (const auto* t = std::get_if<TargetConfidence>(&config.stop_rule)) {
      stop = probs[target] >= t->probability;
    }

    traj.points.push_back(x);
    if (stop || n == config.max_iterations || !alpha) {
      traj.records.push_back(rec);
      traj.status = stop ? AttackStatus::kStopRuleMet
                  : !alpha && n < config.max_iterations ? AttackStatus::kVanishedGradient
                                                        : AttackStatus::kIterationLimit;
      break;
    }

    Vector candidate(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) candidate[i] = x[i] + *alpha * p[i];
    Sample next = clip(candidate, x0, config.epsilon_ball);
    rec.clipped = next.coords != candidate;
    traj.records.push_back(rec);

    x = std::move(next.coords);
    trace = forward(model, x);
  }

  traj.final_sample = x0;
  traj.final_sample.coords = x;
  return traj;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

double population_std(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  Vector sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size()));
}

// Linear interpolation between closest ranks on sorted data.
double quantile_sorted(const Vector& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

Band confidence_band(std::span<const double> values) {
  Band b;
  b.count = values.size();
  b.mean = mean_of(values);
  const double half =
      values.size() < 2 ? 0.0
                        : 1.96 * population_std(values, b.mean) /
                              std::sqrt(static_cast<double>(values.size()));
  b.low = b.mean - half;
  b.high = b.mean + half;
  return b;
}

std::vector<Band> confidence_band(const std::vector<Vector>& values) {
  if (values.empty()) return {};
  const std::size_t width = values.front().size();
  for (const auto& row : values) {
    if (row.size() != width) throw ShapeError("confidence_band: ragged matrix");
  }
  std::vector<Band> out;
  Vector column(values.size());
  for (std::size_t t = 0; t < width; ++t) {
    for (std::size_t s = 0; s < values.size(); ++s) column[s] = values[s][t];
    out.push_back(confidence_band(column));
  }
  return out;
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary m;
  m.count = values.size();
  if (values.empty()) return m;
  m.mean = mean_of(values);
  m.std = population_std(values, m.mean);
  Vector sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < kQuantileLevels.size(); ++i) {
    m.quantiles[i] = quantile_sorted(sorted, kQuantileLevels[i]);
  }
  return m;
}

namespace {

CurveBands build_curves(const std::vector<SampleTrajectory>& trajs) {
  CurveBands c;
  std::size_t longest = 0;
  for (const auto& t : trajs) longest = std::max(longest, t.trajectory.records.size());
  Vector si, st, li, lt, g, l2, li_;
  for (std::size_t n = 0; n < longest; ++n) {
    si.clear();
    st.clear();
    li.clear();
    lt.clear();
    g.clear();
    l2.clear();
    li_.clear();
    for (const auto& t : trajs) {
      const auto& recs = t.trajectory.records;
      if (n >= recs.size()) continue;
      const auto& r = recs[n];
      si.push_back(r.softmax_initial);
      st.push_back(r.softmax_target);
      li.push_back(r.logit_initial);
      lt.push_back(r.logit_target);
      g.push_back(r.grad_l1);
      l2.push_back(r.cum_l2);
      li_.push_back(r.cum_linf);
    }
    c.softmax_initial.push_back(confidence_band(si));
    c.softmax_target.push_back(confidence_band(st));
    c.logit_initial.push_back(confidence_band(li));
    c.logit_target.push_back(confidence_band(lt));
    c.grad_l1.push_back(confidence_band(g));
    c.cum_l2.push_back(confidence_band(l2));
    c.cum_linf.push_back(confidence_band(li_));
  }
  return c;
}

}  // namespace

SweepReport sweep(const Mlp& model, std::span<const Sample> dataset,
                  std::span<const AttackConfig> configs, std::size_t workers) {
  for (const auto& c : configs) c.validate();

  // Eligibility depends only on the model and the target class.
  std::vector<ClassIndex> predicted(dataset.size());
  parallel_for(dataset.size(), workers,
               [&](std::size_t i) { predicted[i] = argmax(forward(model, dataset[i]).logits); });

  SweepReport report;
  report.trajectories.resize(configs.size());
  std::vector<std::pair<std::size_t, std::size_t>> jobs;  // (config, sample)
  for (std::size_t k = 0; k < configs.size(); ++k) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (predicted[i] != configs[k].target_class) {
        report.trajectories[k].push_back({i, {}});
        jobs.emplace_back(k, report.trajectories[k].size() - 1);
      }
    }
  }
  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    auto& slot = report.trajectories[jobs[j].first][jobs[j].second];
    slot.trajectory = run_attack(model, dataset[slot.sample_id], configs[jobs[j].first]);
  });

  for (std::size_t k = 0; k < configs.size(); ++k) {
    const auto& trajs = report.trajectories[k];
    ConfigSummary s;
    s.config = configs[k];
    s.n_eligible = trajs.size();
    s.n_skipped = dataset.size() - trajs.size();
    Vector iters, l2, linf;
    for (const auto& t : trajs) {
      if (!t.trajectory.flipped()) continue;
      iters.push_back(static_cast<double>(*t.trajectory.first_flip_iteration));
      l2.push_back(*t.trajectory.flip_l2);
      linf.push_back(*t.trajectory.flip_linf);
    }
    s.n_flipped = iters.size();
    s.flip_rate =
        s.n_eligible == 0 ? 0.0 : static_cast<double>(s.n_flipped) / static_cast<double>(s.n_eligible);
    s.iterations = summarize(iters);
    s.flip_l2 = summarize(l2);
    s.flip_linf = summarize(linf);
    s.curves = build_curves(trajs);
    report.summaries.push_back(std::move(s));
  }
  return report;
}

void write_trajectories_csv(std::ostream& os, const SweepReport& report) {
  os << "sample_id,source,iteration,softmax_initial,softmax_target,logit_initial,logit_target,"
        "grad_l1,alpha_used,cum_l2,cum_linf,subspace\n";
  for (std::size_t k = 0; k < report.trajectories.size(); ++k) {
    const std::string_view src = source_name(report.summaries[k].config.source.kind);
    for (const auto& t : report.trajectories[k]) {
      for (const auto& r : t.trajectory.records) {
        os << t.sample_id << ',' << src << ',' << r.iteration << ',' << format_real(r.softmax_initial)
           << ',' << format_real(r.softmax_target) << ',' << format_real(r.logit_initial) << ','
           << format_real(r.logit_target) << ',' << format_real(r.grad_l1) << ','
           << format_real(r.alpha_used) << ',' << format_real(r.cum_l2) << ','
           << format_real(r.cum_linf) << ',' << subspace_name(r.subspace) << '\n';
      }
    }
  }
}

void write_summary_csv(std::ostream& os, const SweepReport& report) {
  os << "source,schedule,n_samples,flip_rate,iters_mean,iters_std,l2_mean,l2_std,linf_mean,linf_std\n";
  for (const auto& s : report.summaries) {
    os << source_name(s.config.source.kind) << ',' << schedule_name(s.config.schedule) << ','
       << s.n_eligible << ',' << format_real(s.flip_rate) << ',' << format_real(s.iterations.mean)
       << ',' << format_real(s.iterations.std) << ',' << format_real(s.flip_l2.mean) << ','
       << format_real(s.flip_l2.std) << ',' << format_real(s.flip_linf.mean) << ','
       << format_real(s.flip_linf.std) << '\n';
  }
}

}  // namespace advlab
