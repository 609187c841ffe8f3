#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace advlab {

using ClassIndex = std::size_t;
using Vector = std::vector<double>;

/// A point in a box-bounded input space together with its class label.
struct Sample {
  Vector coords;
  double lower_bound = 0.0;
  double upper_bound = 1.0;
  ClassIndex label = 0;

  /// True when lower_bound < upper_bound and every coordinate is inside the box.
  [[nodiscard]] bool feasible() const;
  /// Throws ConfigError when the sample is not feasible.
  void validate() const;
};

enum class Activation { kRelu, kIdentity };

[[nodiscard]] std::string to_string(Activation a);

/// Fully connected layer; weights are stored row-major, out_dim x in_dim.
struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Vector weights;
  Vector bias;
  Activation activation = Activation::kIdentity;

  [[nodiscard]] double weight(std::size_t row, std::size_t col) const {
    return weights[row * in_dim + col];
  }
};

/// Dense feed-forward classifier whose final layer emits logits (no softmax).
///
/// Immutable once constructed: all evaluation entry points take it by const
/// reference and may be called concurrently.
class Mlp {
 public:
  /// Validates that layer dimensions chain, buffer sizes match, the final
  /// activation is identity and the output width equals num_classes.
  Mlp(std::vector<DenseLayer> layers, std::size_t num_classes);

  [[nodiscard]] std::size_t input_dim() const { return layers_.front().in_dim; }
  [[nodiscard]] std::size_t num_classes() const { return num_classes_; }
  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }

  friend bool operator==(const Mlp&, const Mlp&);

 private:
  std::vector<DenseLayer> layers_;
  std::size_t num_classes_;
};

bool operator==(const DenseLayer& a, const DenseLayer& b);

/// Glorot-uniform weights in [-s, s], s = sqrt(6 / (fan_in + fan_out)), zero
/// biases. Hidden layers use `hidden`, the output layer is identity.
[[nodiscard]] Mlp init_mlp(std::span<const std::size_t> layer_sizes, std::uint64_t seed,
                           Activation hidden = Activation::kRelu);

/// Cached activations of one forward pass.
struct ForwardTrace {
  Vector input;
  std::vector<Vector> pre_activations;
  std::vector<Vector> post_activations;
  Vector logits;
};

[[nodiscard]] ForwardTrace forward(const Mlp& model, std::span<const double> x);
[[nodiscard]] ForwardTrace forward(const Mlp& model, const Sample& x);

/// Max-subtracted softmax. Throws NumericError on non-finite logits.
[[nodiscard]] Vector softmax(std::span<const double> logits);

/// -log softmax(logits)_c evaluated without cancellation (log1p branch when c
/// is the arg-max).
[[nodiscard]] double cross_entropy(std::span<const double> logits, ClassIndex c);

/// Index of the largest element; ties go to the lowest index.
[[nodiscard]] ClassIndex argmax(std::span<const double> v);

/// d(cross_entropy)/d(logits) = softmax - onehot(c), with the c-component
/// assembled as -sum_{m != c} p_m so that it keeps full relative precision
/// when p_c is close to one.
[[nodiscard]] Vector cross_entropy_logit_grad(std::span<const double> logits, ClassIndex c);

/// Gradient of seed . g(x) with respect to the input, by reverse accumulation.
[[nodiscard]] Vector grad_input(const Mlp& model, const ForwardTrace& trace,
                                std::span<const double> seed);
[[nodiscard]] Vector grad_input(const Mlp& model, const Sample& x, std::span<const double> seed);

/// Input gradient of the cross-entropy toward class c.
[[nodiscard]] Vector grad_input_ce(const Mlp& model, const ForwardTrace& trace, ClassIndex c);
[[nodiscard]] Vector grad_input_ce(const Mlp& model, const Sample& x, ClassIndex c);

/// Rows are the input gradients of each logit (num_classes x input_dim).
[[nodiscard]] std::vector<Vector> logit_jacobian(const Mlp& model, const ForwardTrace& trace);

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h. The probe points are
/// not clipped to the sample's box.
[[nodiscard]] Vector finite_diff_grad(const ScalarFn& f, const Sample& x, double h);

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 500;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  Mlp model;
  /// Entry 0 is the untrained model; entry k is measured after epoch k.
  std::vector<EpochStats> history;
};

/// Mini-batch SGD on mean cross-entropy. Works on a private copy of `model`.
[[nodiscard]] TrainResult train_sgd(const Mlp& model, std::span<const Sample> data,
                                    const TrainConfig& config);

[[nodiscard]] double mean_cross_entropy(const Mlp& model, std::span<const Sample> data);
[[nodiscard]] double accuracy(const Mlp& model, std::span<const Sample> data);

/// Text format: `mlp <num_layers> <num_classes>`, then per layer a line
/// `<out> <in> <relu|identity>`, `out` weight rows and one bias row. Reals are
/// written with 17 significant digits.
void write_mlp(std::ostream& os, const Mlp& model);
[[nodiscard]] Mlp read_mlp(std::istream& is);
void save_mlp(const std::string& path, const Mlp& model);
[[nodiscard]] Mlp load_mlp(const std::string& path);

/// Locale-independent rendering with 17 significant digits (round-trips exactly).
[[nodiscard]] std::string format_real(double v);

// Small vector helpers shared across modules.
[[nodiscard]] double norm_l1(std::span<const double> v);
[[nodiscard]] double norm_l2(std::span<const double> v);
[[nodiscard]] double norm_linf(std::span<const double> v);

}  // namespace advlab
