#include "advlab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "advlab/attack.hpp"
#include "advlab/circles.hpp"
#include "advlab/detector.hpp"
#include "advlab/error.hpp"
#include "advlab/theory.hpp"

namespace advlab::cli {

namespace {

namespace fs = std::filesystem;

// Ordered key/value echo of a resolved configuration.
class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)) {}

  void add(const std::string& key, const std::string& value) {
    entries_.emplace_back(key, "\"" + value + "\"");
  }
  void add(const std::string& key, double value) { entries_.emplace_back(key, format_real(value)); }
  void add(const std::string& key, std::uint64_t value) {
    entries_.emplace_back(key, std::to_string(value));
  }

  void write(const fs::path& dir) const {
    std::ostringstream os;
    os << "# advlab " << command_ << "\n";
    for (const auto& [k, v] : entries_) os << k << " = " << v << "\n";
    write_file(dir / "manifest", os.str());
  }

  static void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << content;
    if (!f) throw IoError("failed writing '" + path.string() + "'");
  }

 private:
  std::string command_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

template <typename Fn>
void write_output(const fs::path& path, Fn&& body) {
  std::ostringstream os;
  body(os);
  Manifest::write_file(path, os.str());
}

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) {
    throw IoError("cannot create output directory '" + out + "'" +
                  (ec ? ": " + ec.message() : std::string()));
  }
  return fs::path(out);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<SourceKind> parse_sources(const std::string& s) {
  std::vector<SourceKind> out;
  for (const auto& name : split_list(s)) out.push_back(parse_source(name));
  if (out.empty()) throw ConfigError("no sources given (valid: ce, ce-sign, logit, m-logit)");
  return out;
}

// Options shared by every command.
struct Common {
  std::string model;
  std::string out = "out";
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

void add_common(CLI::App& app, Common& c, bool needs_model) {
  app.set_config("--config", "", "Read options from a key = value file (flags win)");
  auto* m = app.add_option("--model", c.model, "Model file");
  if (needs_model) m->required();
  app.add_option("--out", c.out, "Output directory")->capture_default_str();
  app.add_option("--seed", c.seed, "Base seed for every unspecified named seed")
      ->capture_default_str();
  app.add_option("--workers", c.workers, "Worker threads")->capture_default_str()->check(
      CLI::PositiveNumber);
}

void echo_common(Manifest& m, const Common& c, bool with_model) {
  if (with_model) m.add("model", c.model);
  m.add("out", c.out);
  m.add("seed", c.seed);
  m.add("workers", static_cast<std::uint64_t>(c.workers));
}

// Named seeds default to fixed offsets of --seed when not given explicitly.
struct NamedSeed {
  std::string name;
  std::uint64_t offset;
  std::uint64_t value = 0;
  CLI::Option* opt = nullptr;

  void add(CLI::App& app) {
    opt = app.add_option("--" + name, value, "Seed (default: --seed + " + std::to_string(offset) + ")");
  }
  void resolve(const Common& c) {
    if (opt->count() == 0) value = c.seed + offset;
  }
};

struct DataOptions {
  circles::CirclesParams params;
  NamedSeed data_seed{"data-seed", 0};

  explicit DataOptions(std::size_t n) { params.n = n; }

  void add(CLI::App& app) {
    app.add_option("--n", params.n, "Number of circles points")->capture_default_str();
    app.add_option("--inner-radius", params.inner_radius)->capture_default_str();
    app.add_option("--outer-radius", params.outer_radius)->capture_default_str();
    app.add_option("--noise-std", params.noise_std)->capture_default_str();
    data_seed.add(app);
  }
  void resolve(const Common& c) {
    data_seed.resolve(c);
    params.seed = data_seed.value;
  }
  void echo(Manifest& m) const {
    m.add("n", static_cast<std::uint64_t>(params.n));
    m.add("inner-radius", params.inner_radius);
    m.add("outer-radius", params.outer_radius);
    m.add("noise-std", params.noise_std);
    m.add("data-seed", data_seed.value);
  }
};

// Desk-scale attack defaults: beta = 5 moves a 2-D point across the whole
// [-1, 1] box in one step, so the default L1 budget per step is 0.01.
struct AttackOptions {
  std::string sources = "ce,ce-sign,logit,m-logit";
  std::string schedule = "equal-perturbation";
  double alpha = 5e-4;
  double beta = 0.01;
  std::size_t max_iterations = 250;
  std::string stop = "first-flip";
  double stop_confidence = 0.9;
  double epsilon = 0.0;
  double kappa = 20.0;
  double sign_epsilon = 1e-16;
  std::size_t target = circles::kInnerClass;

  void add(CLI::App& app) {
    app.add_option("--sources", sources, "Comma list of ce, ce-sign, logit, m-logit")
        ->capture_default_str();
    app.add_option("--schedule", schedule)
        ->check(CLI::IsMember({"equal-multiplier", "equal-perturbation"}))
        ->capture_default_str();
    app.add_option("--alpha", alpha, "Equal-multiplier step")->capture_default_str();
    app.add_option("--beta", beta, "Equal-perturbation L1 mass per step")->capture_default_str();
    app.add_option("--max-iterations", max_iterations)->capture_default_str();
    app.add_option("--stop", stop)
        ->check(CLI::IsMember({"first-flip", "fixed", "confidence"}))
        ->capture_default_str();
    app.add_option("--stop-confidence", stop_confidence)->capture_default_str();
    app.add_option("--epsilon", epsilon, "L-inf ball radius, 0 = off")->capture_default_str();
    app.add_option("--kappa", kappa)->capture_default_str();
    app.add_option("--sign-epsilon", sign_epsilon)->capture_default_str();
    app.add_option("--target", target)->capture_default_str();
  }

  [[nodiscard]] std::vector<AttackConfig> configs() const {
    std::vector<AttackConfig> out;
    for (SourceKind kind : parse_sources(sources)) {
      AttackConfig c;
      c.source.kind = kind;
      c.source.kappa = kappa;
      c.source.sign_epsilon = sign_epsilon;
      c.target_class = target;
      if (schedule == "equal-multiplier") {
        c.schedule = EqualMultiplier{alpha};
      } else {
        c.schedule = EqualPerturbation{beta};
      }
      c.max_iterations = max_iterations;
      if (epsilon > 0.0) c.epsilon_ball = epsilon;
      if (stop == "fixed") {
        c.stop_rule = FixedIterations{};
      } else if (stop == "confidence") {
        c.stop_rule = TargetConfidence{stop_confidence};
      }
      c.validate();
      out.push_back(c);
    }
    return out;
  }

  void echo(Manifest& m) const {
    m.add("sources", sources);
    m.add("schedule", schedule);
    m.add("alpha", alpha);
    m.add("beta", beta);
    m.add("max-iterations", static_cast<std::uint64_t>(max_iterations));
    m.add("stop", stop);
    m.add("stop-confidence", stop_confidence);
    m.add("epsilon", epsilon);
    m.add("kappa", kappa);
    m.add("sign-epsilon", sign_epsilon);
    m.add("target", static_cast<std::uint64_t>(target));
  }
};

struct TrainOptions {
  TrainConfig config;
  void add(CLI::App& app) {
    app.add_option("--learning-rate", config.learning_rate)->capture_default_str();
    app.add_option("--epochs", config.epochs)->capture_default_str();
    app.add_option("--batch-size", config.batch_size)->capture_default_str();
  }
  void echo(Manifest& m) const {
    m.add("learning-rate", config.learning_rate);
    m.add("epochs", static_cast<std::uint64_t>(config.epochs));
    m.add("batch-size", static_cast<std::uint64_t>(config.batch_size));
  }
};

void check_target(const Mlp& model, std::size_t target) {
  if (target >= model.num_classes()) throw ConfigError("--target out of range for the model");
}

// ---------------------------------------------------------------------------

int cmd_train_circles(CLI::App& app, const std::vector<std::string>& rest, std::ostream& out) {
  Common common;
  DataOptions data(1000);
  TrainOptions train;
  NamedSeed init_seed{"init-seed", 1};
  NamedSeed train_seed{"train-seed", 2};
  add_common(app, common, false);
  data.add(app);
  train.add(app);
  init_seed.add(app);
  train_seed.add(app);
  auto args = rest;
  app.parse(args);
  data.resolve(common);
  init_seed.resolve(common);
  train_seed.resolve(common);
  train.config.seed = train_seed.value;

  const fs::path dir = prepare_out(common.out);
  const auto trained = circles::train_default(data.params, init_seed.value, train.config);
  save_mlp((dir / "model.txt").string(), trained.result.model);
  write_output(dir / "history.csv", [&](std::ostream& os) {
    os << "epoch,loss,accuracy\n";
    for (const auto& h : trained.result.history) {
      os << h.epoch << ',' << format_real(h.mean_loss) << ',' << format_real(h.accuracy) << '\n';
    }
  });

  Manifest m("train-circles");
  echo_common(m, common, false);
  data.echo(m);
  train.echo(m);
  m.add("init-seed", init_seed.value);
  m.add("train-seed", train_seed.value);
  m.write(dir);

  const auto& last = trained.result.history.back();
  out << "final training accuracy " << format_real(last.accuracy) << " (loss "
      << format_real(last.mean_loss) << ")\n";
  out << "model written to " << (dir / "model.txt").string() << '\n';
  return kOk;
}

int cmd_attack(CLI::App& app, const std::vector<std::string>& rest, std::ostream& out) {
  Common common;
  DataOptions data(400);
  AttackOptions attack;
  add_common(app, common, true);
  data.add(app);
  attack.add(app);
  auto args = rest;
  app.parse(args);
  data.resolve(common);

  const auto configs = attack.configs();
  const Mlp model = load_mlp(common.model);
  check_target(model, attack.target);
  const fs::path dir = prepare_out(common.out);
  const auto dataset = circles::make_circles(data.params);
  const SweepReport report = sweep(model, dataset.samples, configs, common.workers);

  write_output(dir / "trajectories.csv", [&](std::ostream& os) { write_trajectories_csv(os, report); });
  write_output(dir / "summary.csv", [&](std::ostream& os) { write_summary_csv(os, report); });

  Manifest m("attack");
  echo_common(m, common, true);
  data.echo(m);
  attack.echo(m);
  m.write(dir);

  for (const auto& s : report.summaries) {
    out << source_name(s.config.source.kind) << ": flipped " << s.n_flipped << "/" << s.n_eligible
        << ", iterations " << format_real(s.iterations.mean) << " +/- "
        << format_real(s.iterations.std) << ", flip L2 " << format_real(s.flip_l2.mean) << '\n';
  }
  return kOk;
}

int cmd_heatmap(CLI::App& app, const std::vector<std::string>& rest, std::ostream& out) {
  Common common;
  std::string kinds = "ce,logit,ce-sign";
  std::size_t resolution = 200;
  std::size_t target = circles::kInnerClass;
  add_common(app, common, true);
  app.add_option("--kinds", kinds, "Comma list of ce, logit, ce-sign")->capture_default_str();
  app.add_option("--resolution", resolution)->capture_default_str();
  app.add_option("--target", target)->capture_default_str();
  auto args = rest;
  app.parse(args);

  const auto kind_list = parse_sources(kinds);
  if (std::find(kind_list.begin(), kind_list.end(), SourceKind::kMLogit) != kind_list.end()) {
    throw ConfigError("m-logit has no heatmap (valid kinds: ce, logit, ce-sign)");
  }
  if (resolution < 2) throw ConfigError("--resolution must be at least 2");
  const Mlp model = load_mlp(common.model);
  check_target(model, target);
  const fs::path dir = prepare_out(common.out);
  for (SourceKind kind : kind_list) {
    const auto grid = circles::heatmap(model, kind, target, resolution, common.workers);
    const std::string stem = "heatmap_" + std::string(source_name(kind));
    write_output(dir / (stem + ".csv"), [&](std::ostream& os) { circles::write_heatmap_csv(os, grid); });
    write_output(dir / (stem + ".pgm"), [&](std::ostream& os) { circles::write_heatmap_pgm(os, grid); });
    out << "wrote " << (dir / (stem + ".csv")).string() << " and .pgm\n";
  }

  Manifest m("heatmap");
  echo_common(m, common, true);
  m.add("kinds", kinds);
  m.add("resolution", static_cast<std::uint64_t>(resolution));
  m.add("target", static_cast<std::uint64_t>(target));
  m.write(dir);
  return kOk;
}

int cmd_verify(CLI::App& app, const std::vector<std::string>& rest, std::ostream& out) {
  Common common;
  std::size_t points = 1000;
  double tau = kDefaultConfidence;
  std::size_t target = circles::kInnerClass;
  NamedSeed point_seed{"point-seed", 5};
  add_common(app, common, true);
  app.add_option("--points", points, "Uniformly sampled points")->capture_default_str();
  app.add_option("--tau", tau, "Subspace confidence threshold")->capture_default_str();
  app.add_option("--target", target)->capture_default_str();
  point_seed.add(app);
  auto args = rest;
  app.parse(args);
  point_seed.resolve(common);
  if (points == 0) throw ConfigError("--points must be positive");
  if (!(tau > 0.5 && tau < 1.0)) throw ConfigError("--tau must lie in (0.5, 1)");

  const Mlp model = load_mlp(common.model);
  check_target(model, target);
  const fs::path dir = prepare_out(common.out);

  std::mt19937_64 rng(point_seed.value);
  std::uniform_real_distribution<double> coord(circles::kBoxLow, circles::kBoxHigh);
  std::vector<Sample> samples(points);
  for (auto& s : samples) {
    s.lower_bound = circles::kBoxLow;
    s.upper_bound = circles::kBoxHigh;
    s.coords.resize(model.input_dim());
    for (auto& v : s.coords) v = coord(rng);
  }
  const auto checks = theory::verify_points(model, samples, target, tau, common.workers);
  write_output(dir / "theorem_report.csv",
               [&](std::ostream& os) { theory::write_theorem_report_csv(os, checks); });

  Manifest m("verify");
  echo_common(m, common, true);
  m.add("points", static_cast<std::uint64_t>(points));
  m.add("tau", tau);
  m.add("target", static_cast<std::uint64_t>(target));
  m.add("point-seed", point_seed.value);
  m.write(dir);

  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // subspace -> (n, failed)
  std::size_t failed = 0;
  for (const auto& c : checks) {
    auto& t = tally[std::string(subspace_name(c.report.subspace))];
    ++t.first;
    if (!c.passed()) {
      ++t.second;
      ++failed;
    }
  }
  for (const auto& [name, t] : tally) {
    out << name << ": " << t.first << " points, " << t.second << " failed\n";
  }
  std::size_t sat_single = 0, sat_double = 0;
  for (const auto& s : samples) {
    sat_single += theory::verify_sign_saturation(model, s, target, theory::kSinglePrecisionThreshold);
    sat_double += theory::verify_sign_saturation(model, s, target, theory::kDoublePrecisionThreshold);
  }
  out << "sign-saturated points: " << sat_single << " (threshold 1e-8), " << sat_double
      << " (threshold 1e-16)\n";
  out << (failed == 0 ? "PASS" : "FAIL") << '\n';
  return failed == 0 ? kOk : kVerificationFailed;
}

int cmd_detector(CLI::App& app, const std::vector<std::string>& rest, std::ostream& out) {
  Common common;
  DataOptions data(1000);
  AttackOptions attack;
  TrainOptions train;
  double train_fraction = 0.95;
  NamedSeed split_seed{"split-seed", 3};
  NamedSeed detector_seed{"detector-seed", 4};
  add_common(app, common, true);
  data.add(app);
  attack.add(app);
  train.add(app);
  app.add_option("--train-fraction", train_fraction)->capture_default_str();
  split_seed.add(app);
  detector_seed.add(app);
  auto args = rest;
  app.parse(args);
  data.resolve(common);
  split_seed.resolve(common);
  detector_seed.resolve(common);

  const auto configs = attack.configs();
  const Mlp model = load_mlp(common.model);
  check_target(model, attack.target);
  const fs::path dir = prepare_out(common.out);
  const auto dataset = circles::make_circles(data.params);
  const auto ds = detector::build_detector_dataset(model, dataset.samples, configs, split_seed.value,
                                                   train_fraction, common.workers);
  for (const auto& c : ds.cohorts) {
    out << source_name(c.source) << ": " << c.flipped << "/" << c.attacked << " successful attacks"
        << (c.omitted ? " (omitted: no successful attack)" : "") << '\n';
  }
  detector::DetectorTraining training;
  training.train = train.config;
  training.train.seed = detector_seed.value;
  training.init_seed = detector_seed.value;
  auto per = detector::train_detector(ds, true, training);
  const auto pooled = detector::train_detector(ds, false, training);
  std::vector<detector::DetectorAccuracy> rows = per.rows;
  rows.insert(rows.end(), pooled.rows.begin(), pooled.rows.end());
  write_output(dir / "detector_report.csv",
               [&](std::ostream& os) { detector::write_detector_report_csv(os, rows); });

  Manifest m("detector");
  echo_common(m, common, true);
  data.echo(m);
  attack.echo(m);
  train.echo(m);
  m.add("train-fraction", train_fraction);
  m.add("split-seed", split_seed.value);
  m.add("detector-seed", detector_seed.value);
  m.write(dir);

  for (const auto& r : rows) {
    out << r.source << ": genuine " << format_real(r.acc_genuine) << " / adversarial "
        << format_real(r.acc_adversarial) << " (" << format_real(r.acc_overall) << ")\n";
  }
  return kOk;
}

constexpr const char* kUsage =
    "usage: advlab <command> [options]\n"
    "commands: train-circles, attack, heatmap, verify, detector\n"
    "run `advlab <command> --help` for the options of a command\n";

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    (args.empty() ? err : out) << kUsage;
    return args.empty() ? kUsageError : kOk;
  }
  const std::string& command = args[0];
  CLI::App app("advlab " + command, "advlab " + command);
  // CLI11 consumes arguments from the back.
  std::vector<std::string> rest(args.rbegin(), args.rend() - 1);

  try {
    if (command == "train-circles") return cmd_train_circles(app, rest, out);
    if (command == "attack") return cmd_attack(app, rest, out);
    if (command == "heatmap") return cmd_heatmap(app, rest, out);
    if (command == "verify") return cmd_verify(app, rest, out);
    if (command == "detector") return cmd_detector(app, rest, out);
    err << "unknown command '" << command << "'\n" << kUsage;
    return kUsageError;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kIoError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
}

}  // namespace advlab::cli
