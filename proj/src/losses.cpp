#include "advlab/losses.hpp"

#include <cmath>

#include "advlab/error.hpp"

namespace advlab {

std::string_view source_name(SourceKind kind) {
  switch (kind) {
    case SourceKind::kCe:
      return "ce";
    case SourceKind::kCeSign:
      return "ce-sign";
    case SourceKind::kLogit:
      return "logit";
    case SourceKind::kMLogit:
      return "m-logit";
  }
  return "?";
}

SourceKind parse_source(std::string_view name) {
  for (SourceKind k : kAllSources) {
    if (source_name(k) == name) return k;
  }
  throw ConfigError("unknown source '" + std::string(name) +
                    "' (valid: ce, ce-sign, logit, m-logit)");
}

void PerturbationSource::validate() const {
  if (kind == SourceKind::kMLogit && !(kappa >= 0.0)) {
    throw ConfigError("m-logit kappa must be non-negative");
  }
  if (!(sign_epsilon >= 0.0)) throw ConfigError("sign_epsilon must be non-negative");
}

Vector thresholded_sign(std::span<const double> v, double epsilon) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) < epsilon || v[i] == 0.0) {
      out[i] = 0.0;
    } else {
      out[i] = v[i] > 0.0 ? 1.0 : -1.0;
    }
  }
  return out;
}

ClassIndex runner_up(std::span<const double> logits, ClassIndex target) {
  ClassIndex best = target == 0 ? 1 : 0;
  for (ClassIndex i = 0; i < logits.size(); ++i) {
    if (i != target && logits[i] > logits[best]) best = i;
  }
  return best;
}

Vector perturbation(const PerturbationSource& source, const Mlp& model, const ForwardTrace& trace,
                    ClassIndex target) {
  source.validate();
  const std::size_t classes = model.num_classes();
  if (target >= classes) throw ConfigError("target class out of range");

  switch (source.kind) {
    case SourceKind::kCe:
    case SourceKind::kCeSign: {
      // Descent direction on the cross-entropy: seed onehot(c) - softmax.
      Vector seed = cross_entropy_logit_grad(trace.logits, target);
      for (auto& s : seed) s = -s;
      Vector p = grad_input(model, trace, seed);
      if (source.kind == SourceKind::kCeSign) return thresholded_sign(p, source.sign_epsilon);
      return p;
    }
    case SourceKind::kLogit: {
      Vector seed(classes, 0.0);
      seed[target] = 1.0;
      return grad_input(model, trace, seed);
    }
    case SourceKind::kMLogit: {
      if (classes < 2) throw ConfigError("m-logit needs at least two classes");
      const ClassIndex other = runner_up(trace.logits, target);
      if (trace.logits[target] - trace.logits[other] >= source.kappa) {
        return Vector(model.input_dim(), 0.0);
      }
      Vector seed(classes, 0.0);
      seed[target] = 1.0;
      seed[other] = -1.0;
      return grad_input(model, trace, seed);
    }
  }
  return {};
}

Vector perturbation(const PerturbationSource& source, const Mlp& model, const Sample& x,
                    ClassIndex target) {
  return perturbation(source, model, forward(model, x), target);
}

std::string_view subspace_name(Subspace s) {
  switch (s) {
    case Subspace::kD1:
      return "D1";
    case Subspace::kD2:
      return "D2";
    case Subspace::kD3:
      return "D3";
  }
  return "?";
}

Subspace classify_subspace(std::span<const double> probs, ClassIndex target, double tau) {
  if (!(tau > 0.5 && tau < 1.0)) throw ConfigError("confidence threshold must lie in (0.5, 1)");
  if (target >= probs.size()) throw ConfigError("target class out of range");
  const ClassIndex top = argmax(probs);
  // tau > 0.5 makes probs[target] >= tau imply target is the arg-max.
  if (probs[target] >= tau) return Subspace::kD3;
  if (probs[top] >= tau && top != target) return Subspace::kD1;
  return Subspace::kD2;
}

}  // namespace advlab
