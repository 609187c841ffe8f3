#include "advlab/net.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "advlab/error.hpp"

namespace advlab {

bool Sample::feasible() const {
  if (!(lower_bound < upper_bound)) return false;
  return std::all_of(coords.begin(), coords.end(), [&](double v) {
    return std::isfinite(v) && v >= lower_bound && v <= upper_bound;
  });
}

void Sample::validate() const {
  if (!(lower_bound < upper_bound)) {
    throw ConfigError("sample box is empty: lower_bound must be below upper_bound");
  }
  if (!feasible()) throw ConfigError("sample coordinates lie outside their box");
}

std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "identity"; }

bool operator==(const DenseLayer& a, const DenseLayer& b) {
  return a.in_dim == b.in_dim && a.out_dim == b.out_dim && a.activation == b.activation &&
         a.weights == b.weights && a.bias == b.bias;
}

bool operator==(const Mlp& a, const Mlp& b) {
  return a.num_classes_ == b.num_classes_ && a.layers_ == b.layers_;
}

Mlp::Mlp(std::vector<DenseLayer> layers, std::size_t num_classes)
    : layers_(std::move(layers)), num_classes_(num_classes) {
  if (layers_.empty()) throw ConfigError("mlp needs at least one layer");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    if (l.in_dim == 0 || l.out_dim == 0) throw ConfigError("mlp layer with zero width");
    if (l.weights.size() != l.in_dim * l.out_dim || l.bias.size() != l.out_dim) {
      throw ConfigError("mlp layer " + std::to_string(k) + ": buffer sizes do not match dims");
    }
    if (k > 0 && layers_[k - 1].out_dim != l.in_dim) {
      throw ConfigError("mlp layer " + std::to_string(k) + ": input width does not chain");
    }
  }
  if (layers_.back().activation != Activation::kIdentity) {
    throw ConfigError("mlp output layer must be identity (logits)");
  }
  if (layers_.back().out_dim != num_classes_) {
    throw ConfigError("mlp output width differs from num_classes");
  }
}

Mlp init_mlp(std::span<const std::size_t> layer_sizes, std::uint64_t seed, Activation hidden) {
  if (layer_sizes.size() < 2) throw ConfigError("init_mlp needs input and output sizes");
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    DenseLayer l;
    l.in_dim = layer_sizes[k];
    l.out_dim = layer_sizes[k + 1];
    l.activation = (k + 2 == layer_sizes.size()) ? Activation::kIdentity : hidden;
    const double s = std::sqrt(6.0 / static_cast<double>(l.in_dim + l.out_dim));
    std::uniform_real_distribution<double> dist(-s, s);
    l.weights.resize(l.in_dim * l.out_dim);
    for (auto& w : l.weights) w = dist(rng);
    l.bias.assign(l.out_dim, 0.0);
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers), layer_sizes.back());
}

namespace {

double activate(Activation a, double z) {
  return a == Activation::kRelu ? (z > 0.0 ? z : 0.0) : z;
}

// Rectifier subgradient at exactly zero is taken as 0.
double activate_grad(Activation a, double z) {
  return a == Activation::kRelu ? (z > 0.0 ? 1.0 : 0.0) : 1.0;
}

}  // namespace

ForwardTrace forward(const Mlp& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw ShapeError("input has dimension " + std::to_string(x.size()) + ", model expects " +
                     std::to_string(model.input_dim()));
  }
  ForwardTrace t;
  t.input.assign(x.begin(), x.end());
  const Vector* in = &t.input;
  for (const auto& l : model.layers()) {
    Vector pre(l.out_dim);
    Vector post(l.out_dim);
    for (std::size_t r = 0; r < l.out_dim; ++r) {
      double acc = l.bias[r];
      const double* w = l.weights.data() + r * l.in_dim;
      for (std::size_t c = 0; c < l.in_dim; ++c) acc += w[c] * (*in)[c];
      pre[r] = acc;
      post[r] = activate(l.activation, acc);
    }
    t.pre_activations.push_back(std::move(pre));
    t.post_activations.push_back(std::move(post));
    in = &t.post_activations.back();
  }
  t.logits = t.post_activations.back();
  return t;
}

ForwardTrace forward(const Mlp& model, const Sample& x) { return forward(model, x.coords); }

namespace {

void require_finite(std::span<const double> v) {
  for (double z : v) {
    if (!std::isfinite(z)) throw NumericError("non-finite logit");
  }
}

void require_class(std::span<const double> logits, ClassIndex c) {
  if (c >= logits.size()) {
    throw ConfigError("class index " + std::to_string(c) + " out of range [0, " +
                      std::to_string(logits.size()) + ")");
  }
}

}  // namespace

Vector softmax(std::span<const double> logits) {
  require_finite(logits);
  if (logits.empty()) return {};
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vector p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

ClassIndex argmax(std::span<const double> v) {
  return static_cast<ClassIndex>(std::max_element(v.begin(), v.end()) - v.begin());
}

double cross_entropy(std::span<const double> logits, ClassIndex c) {
  require_class(logits, c);
  require_finite(logits);
  const double mx = *std::max_element(logits.begin(), logits.end());
  if (logits[c] == mx) {
    double rest = 0.0;
    for (std::size_t m = 0; m < logits.size(); ++m) {
      if (m != c) rest += std::exp(logits[m] - logits[c]);
    }
    return std::log1p(rest);
  }
  double z = 0.0;
  for (double g : logits) z += std::exp(g - mx);
  return mx + std::log(z) - logits[c];
}

Vector cross_entropy_logit_grad(std::span<const double> logits, ClassIndex c) {
  require_class(logits, c);
  Vector p = softmax(logits);
  double rest = 0.0;
  for (std::size_t m = 0; m < p.size(); ++m) {
    if (m != c) rest += p[m];
  }
  p[c] = -rest;
  return p;
}

Vector grad_input(const Mlp& model, const ForwardTrace& trace, std::span<const double> seed) {
  if (seed.size() != model.num_classes()) {
    throw ShapeError("seed has length " + std::to_string(seed.size()) + ", model has " +
                     std::to_string(model.num_classes()) + " classes");
  }
  const auto& layers = model.layers();
  Vector delta(seed.begin(), seed.end());
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& l = layers[k];
    const auto& pre = trace.pre_activations[k];
    for (std::size_t r = 0; r < l.out_dim; ++r) delta[r] *= activate_grad(l.activation, pre[r]);
    Vector below(l.in_dim, 0.0);
    for (std::size_t r = 0; r < l.out_dim; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* w = l.weights.data() + r * l.in_dim;
      for (std::size_t c = 0; c < l.in_dim; ++c) below[c] += w[c] * d;
    }
    delta = std::move(below);
  }
  return delta;
}

Vector grad_input(const Mlp& model, const Sample& x, std::span<const double> seed) {
  return grad_input(model, forward(model, x), seed);
}

Vector grad_input_ce(const Mlp& model, const ForwardTrace& trace, ClassIndex c) {
  return grad_input(model, trace, cross_entropy_logit_grad(trace.logits, c));
}

Vector grad_input_ce(const Mlp& model, const Sample& x, ClassIndex c) {
  return grad_input_ce(model, forward(model, x), c);
}

std::vector<Vector> logit_jacobian(const Mlp& model, const ForwardTrace& trace) {
  std::vector<Vector> rows;
  rows.reserve(model.num_classes());
  Vector seed(model.num_classes(), 0.0);
  for (std::size_t m = 0; m < model.num_classes(); ++m) {
    seed[m] = 1.0;
    rows.push_back(grad_input(model, trace, seed));
    seed[m] = 0.0;
  }
  return rows;
}

Vector finite_diff_grad(const ScalarFn& f, const Sample& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  Vector probe = x.coords;
  Vector g(probe.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double mean_cross_entropy(const Mlp& model, std::span<const Sample> data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : data) total += cross_entropy(forward(model, s).logits, s.label);
  return total / static_cast<double>(data.size());
}

double accuracy(const Mlp& model, std::span<const Sample> data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : data) {
    if (argmax(forward(model, s).logits) == s.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainResult train_sgd(const Mlp& model, std::span<const Sample> data, const TrainConfig& config) {
  if (data.empty()) throw ConfigError("train_sgd: empty training data");
  if (config.batch_size == 0) throw ConfigError("train_sgd: batch size must be positive");
  if (!(config.learning_rate > 0.0)) throw ConfigError("train_sgd: learning rate must be positive");
  for (const auto& s : data) {
    if (s.label >= model.num_classes()) throw ConfigError("train_sgd: label out of range");
    if (s.coords.size() != model.input_dim()) throw ShapeError("train_sgd: sample dimension");
  }

  std::vector<DenseLayer> layers = model.layers();
  std::vector<Vector> grad_w(layers.size());
  std::vector<Vector> grad_b(layers.size());

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);

  std::vector<EpochStats> history;
  history.push_back({0, mean_cross_entropy(model, data), accuracy(model, data)});

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      for (std::size_t k = 0; k < layers.size(); ++k) {
        grad_w[k].assign(layers[k].weights.size(), 0.0);
        grad_b[k].assign(layers[k].bias.size(), 0.0);
      }
      // The layers vector is rebuilt into an Mlp view only for forward().
      const Mlp current(layers, model.num_classes());
      for (std::size_t i = start; i < stop; ++i) {
        const Sample& s = data[order[i]];
        const ForwardTrace t = forward(current, s.coords);
        Vector delta = cross_entropy_logit_grad(t.logits, s.label);
        for (std::size_t k = layers.size(); k-- > 0;) {
          const auto& l = layers[k];
          const auto& pre = t.pre_activations[k];
          const Vector& in = k == 0 ? t.input : t.post_activations[k - 1];
          for (std::size_t r = 0; r < l.out_dim; ++r) delta[r] *= activate_grad(l.activation, pre[r]);
          Vector below(l.in_dim, 0.0);
          for (std::size_t r = 0; r < l.out_dim; ++r) {
            const double d = delta[r];
            grad_b[k][r] += d;
            if (d == 0.0) continue;
            double* gw = grad_w[k].data() + r * l.in_dim;
            const double* w = l.weights.data() + r * l.in_dim;
            for (std::size_t c = 0; c < l.in_dim; ++c) {
              gw[c] += d * in[c];
              below[c] += w[c] * d;
            }
          }
          delta = std::move(below);
        }
      }
      const double step = config.learning_rate / static_cast<double>(stop - start);
      for (std::size_t k = 0; k < layers.size(); ++k) {
        for (std::size_t j = 0; j < layers[k].weights.size(); ++j) {
          layers[k].weights[j] -= step * grad_w[k][j];
        }
        for (std::size_t j = 0; j < layers[k].bias.size(); ++j) {
          layers[k].bias[j] -= step * grad_b[k][j];
        }
      }
    }
    const Mlp snapshot(layers, model.num_classes());
    history.push_back({epoch, mean_cross_entropy(snapshot, data), accuracy(snapshot, data)});
  }
  return {Mlp(std::move(layers), model.num_classes()), std::move(history)};
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_mlp(std::ostream& os, const Mlp& model) {
  os << "mlp " << model.layers().size() << ' ' << model.num_classes() << '\n';
  for (const auto& l : model.layers()) {
    os << l.out_dim << ' ' << l.in_dim << ' ' << to_string(l.activation) << '\n';
    for (std::size_t r = 0; r < l.out_dim; ++r) {
      for (std::size_t c = 0; c < l.in_dim; ++c) {
        if (c) os << ' ';
        os << format_real(l.weight(r, c));
      }
      os << '\n';
    }
    for (std::size_t r = 0; r < l.out_dim; ++r) {
      if (r) os << ' ';
      os << format_real(l.bias[r]);
    }
    os << '\n';
  }
}

namespace {

double parse_real(const std::string& tok) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError("mlp: invalid real '" + tok + "'");
  }
  return v;
}

std::size_t parse_count(const std::string& tok) {
  std::size_t v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ParseError("mlp: invalid count '" + tok + "'");
  }
  return v;
}

std::string next_token(std::istream& is, const char* what) {
  std::string tok;
  if (!(is >> tok)) throw ParseError(std::string("mlp: unexpected end of input reading ") + what);
  return tok;
}

}  // namespace

Mlp read_mlp(std::istream& is) {
  if (next_token(is, "header") != "mlp") throw ParseError("mlp: missing 'mlp' header");
  const std::size_t num_layers = parse_count(next_token(is, "layer count"));
  const std::size_t num_classes = parse_count(next_token(is, "class count"));
  if (num_layers == 0 || num_layers > 1024) throw ParseError("mlp: implausible layer count");
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k < num_layers; ++k) {
    DenseLayer l;
    l.out_dim = parse_count(next_token(is, "layer dims"));
    l.in_dim = parse_count(next_token(is, "layer dims"));
    if (l.out_dim == 0 || l.in_dim == 0 || l.out_dim > (1u << 20) || l.in_dim > (1u << 20)) {
      throw ParseError("mlp: implausible layer dimensions");
    }
    const std::string act = next_token(is, "activation");
    if (act == "relu") {
      l.activation = Activation::kRelu;
    } else if (act == "identity") {
      l.activation = Activation::kIdentity;
    } else {
      throw ParseError("mlp: unknown activation '" + act + "'");
    }
    l.weights.resize(l.out_dim * l.in_dim);
    for (auto& w : l.weights) w = parse_real(next_token(is, "weights"));
    l.bias.resize(l.out_dim);
    for (auto& b : l.bias) b = parse_real(next_token(is, "bias"));
    layers.push_back(std::move(l));
  }
  std::string trailing;
  if (is >> trailing) throw ParseError("mlp: trailing content after last layer");
  try {
    return Mlp(std::move(layers), num_classes);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("mlp: ") + e.what());
  }
}

void save_mlp(const std::string& path, const Mlp& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_mlp(os, model);
  if (!os) throw IoError("failed writing '" + path + "'");
}

Mlp load_mlp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return read_mlp(is);
}

double norm_l1(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

double norm_linf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double norm_l2(std::span<const double> v) {
  // Scaled so that gradients near the double underflow range keep their norm.
  const double m = norm_linf(v);
  if (m == 0.0 || !std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) {
    const double r = x / m;
    s += r * r;
  }
  return m * std::sqrt(s);
}

}  // namespace advlab
