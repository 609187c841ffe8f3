#include "advlab/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "advlab/error.hpp"

namespace advlab::detector {

DetectorDataset build_detector_dataset(const Mlp& model, std::span<const Sample> genuine,
                                       std::span<const AttackConfig> configs,
                                       std::uint64_t split_seed, double train_fraction,
                                       std::size_t workers) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  DetectorDataset ds;
  ds.genuine.assign(genuine.begin(), genuine.end());
  ds.split_seed = split_seed;
  ds.train_fraction = train_fraction;

  const SweepReport report = sweep(model, genuine, configs, workers);
  for (std::size_t k = 0; k < configs.size(); ++k) {
    CohortCount count;
    count.source = configs[k].source.kind;
    count.attacked = report.trajectories[k].size();
    for (const auto& t : report.trajectories[k]) {
      if (!t.trajectory.flipped()) continue;
      ++count.flipped;
      ds.adversarial.push_back({t.trajectory.final_sample, count.source, t.sample_id});
    }
    count.omitted = count.flipped == 0;
    ds.cohorts.push_back(count);
  }
  return ds;
}

namespace {

// Deterministic per-stratum shuffle; the stratum id keeps strata independent.
std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, std::uint64_t stratum) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::seed_seq seq{seed, stratum};
  std::mt19937_64 rng(seq);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

std::size_t train_count(std::size_t n, double fraction) {
  if (n < 2) return n;
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

Sample relabel(Sample s, ClassIndex label) {
  s.label = label;
  return s;
}

}  // namespace

Split split_dataset(const DetectorDataset& dataset, std::span<const SourceKind> sources) {
  Split split;
  {
    const auto order = shuffled(dataset.genuine.size(), dataset.split_seed, 0);
    const std::size_t k = train_count(order.size(), dataset.train_fraction);
    for (std::size_t i = 0; i < order.size(); ++i) {
      Sample s = relabel(dataset.genuine[order[i]], kGenuine);
      if (i < k) {
        split.train.push_back(std::move(s));
      } else {
        split.test.push_back(std::move(s));
        split.test_source.push_back(std::nullopt);
      }
    }
  }
  for (SourceKind kind : sources) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.adversarial.size(); ++i) {
      if (dataset.adversarial[i].source == kind) members.push_back(i);
    }
    const auto order =
        shuffled(members.size(), dataset.split_seed, 1 + static_cast<std::uint64_t>(kind));
    const std::size_t k = train_count(order.size(), dataset.train_fraction);
    for (std::size_t i = 0; i < order.size(); ++i) {
      Sample s = relabel(dataset.adversarial[members[order[i]]].sample, kAdversarial);
      if (i < k) {
        split.train.push_back(std::move(s));
      } else {
        split.test.push_back(std::move(s));
        split.test_source.push_back(kind);
      }
    }
  }
  auto has = [](const std::vector<Sample>& v, ClassIndex label) {
    return std::any_of(v.begin(), v.end(), [&](const Sample& s) { return s.label == label; });
  };
  if (!has(split.train, kGenuine) || !has(split.train, kAdversarial) ||
      !has(split.test, kGenuine) || !has(split.test, kAdversarial)) {
    throw ConfigError("detector split leaves a class without train or test points");
  }
  return split;
}

DetectorAccuracy evaluate(const Mlp& model, std::span<const Sample> test) {
  DetectorAccuracy acc;
  acc.n_test = test.size();
  std::size_t n_gen = 0, n_adv = 0, hit_gen = 0, hit_adv = 0;
  for (const auto& s : test) {
    const bool hit = argmax(forward(model, s).logits) == s.label;
    if (s.label == kGenuine) {
      ++n_gen;
      hit_gen += hit;
    } else {
      ++n_adv;
      hit_adv += hit;
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  acc.acc_genuine = ratio(hit_gen, n_gen);
  acc.acc_adversarial = ratio(hit_adv, n_adv);
  acc.acc_overall = ratio(hit_gen + hit_adv, n_gen + n_adv);
  return acc;
}

namespace {

Mlp fit(const std::vector<Sample>& train, const DetectorTraining& training) {
  const std::size_t sizes[] = {train.front().coords.size(), kHiddenUnits, 2};
  return train_sgd(init_mlp(sizes, training.init_seed), train, training.train).model;
}

std::vector<Sample> cohort_test(const Split& split, std::optional<SourceKind> keep) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    if (!split.test_source[i] || split.test_source[i] == keep) out.push_back(split.test[i]);
  }
  return out;
}

}  // namespace

DetectorReport train_detector(const DetectorDataset& dataset, bool per_source,
                              const DetectorTraining& training) {
  std::vector<SourceKind> present;
  for (const auto& c : dataset.cohorts) {
    if (!c.omitted) present.push_back(c.source);
  }
  if (present.empty()) throw ConfigError("detector: no adversarial cohort to train on");

  DetectorReport report;
  if (per_source) {
    for (SourceKind kind : present) {
      const SourceKind one[] = {kind};
      const Split split = split_dataset(dataset, one);
      const Mlp model = fit(split.train, training);
      DetectorAccuracy acc = evaluate(model, split.test);
      acc.source = std::string(source_name(kind));
      acc.n_train = split.train.size();
      report.rows.push_back(acc);
    }
  } else {
    const Split split = split_dataset(dataset, present);
    const Mlp model = fit(split.train, training);
    DetectorAccuracy acc = evaluate(model, split.test);
    acc.source = "pooled";
    acc.n_train = split.train.size();
    acc.pooled = true;
    report.rows.push_back(acc);
    for (SourceKind kind : present) {
      DetectorAccuracy by = evaluate(model, cohort_test(split, kind));
      by.source = std::string(source_name(kind));
      by.n_train = split.train.size();
      by.pooled = true;
      report.pooled_by_source.push_back(by);
    }
  }
  return report;
}

void write_detector_report_csv(std::ostream& os, std::span<const DetectorAccuracy> rows) {
  os << "source,n_train,n_test,acc_genuine,acc_adversarial,acc_overall,pooled\n";
  for (const auto& r : rows) {
    os << r.source << ',' << r.n_train << ',' << r.n_test << ',' << format_real(r.acc_genuine) << ','
       << format_real(r.acc_adversarial) << ',' << format_real(r.acc_overall) << ','
       << (r.pooled ? "true" : "false") << '\n';
  }
}

}  // namespace advlab::detector
