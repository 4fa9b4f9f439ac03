#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "mfauc/errors.hpp"

namespace mfauc {

enum class LossKind { square_hinge, square, sigmoid, logistic };
enum class WeightKind { identity, tanh };

/// Surrogate for the indicator I(x <= 0) of a misordered pair with margin x.
struct LossSpec {
  LossKind kind = LossKind::square_hinge;
  double beta = 1.0;  ///< Sharpness, sigmoid and logistic only.

  void validate() const {
    if ((kind == LossKind::sigmoid || kind == LossKind::logistic) &&
        !(beta > 0.0))
      throw ParameterError("beta must be > 0 for sigmoid/logistic loss");
  }
};

/// Rank weighting applied to the per-relevant-item loss mass.
struct WeightSpec {
  WeightKind kind = WeightKind::identity;
  double rho = 1.0;  ///< Scale, tanh only.

  void validate() const {
    if (kind == WeightKind::tanh && !(rho > 0.0))
      throw ParameterError("rho must be > 0 for tanh weighting");
  }
};

/// tanh weighting is only defined for the non-negative squared losses.
inline void validate_combination(const LossSpec& loss, const WeightSpec& weight) {
  loss.validate();
  weight.validate();
  if (weight.kind == WeightKind::tanh &&
      (loss.kind == LossKind::sigmoid || loss.kind == LossKind::logistic))
    throw ParameterError(
        "tanh weighting requires square or square_hinge loss");
}

LossKind parse_loss_kind(std::string_view name);
WeightKind parse_weight_kind(std::string_view name);
std::string to_string(LossKind kind);
std::string to_string(WeightKind kind);

namespace detail {
// Numerically stable log(1 + e^{-z}) and 1 / (1 + e^{-z}).
template <typename Scalar>
Scalar softplus_neg(Scalar z) {
  using std::exp;
  using std::log1p;
  return z > Scalar(0) ? log1p(exp(-z)) : -z + log1p(exp(z));
}
template <typename Scalar>
Scalar logistic_sigma(Scalar z) {
  using std::exp;
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-z));
  const Scalar e = exp(z);
  return e / (Scalar(1) + e);
}
}  // namespace detail

template <typename Scalar>
Scalar loss_value(const LossSpec& spec, Scalar x) {
  const Scalar beta = static_cast<Scalar>(spec.beta);
  switch (spec.kind) {
    case LossKind::square_hinge: {
      const Scalar r = x < Scalar(1) ? Scalar(1) - x : Scalar(0);
      return Scalar(0.5) * r * r;
    }
    case LossKind::square:
      return Scalar(0.5) * (Scalar(1) - x) * (Scalar(1) - x);
    case LossKind::sigmoid:
      return -detail::logistic_sigma(beta * x);
    case LossKind::logistic:
      return detail::softplus_neg(beta * x);
  }
  return Scalar(0);
}

/// Gradient kernel h with dL/dx = -c h(x), where c = loss_h_scale(spec).
template <typename Scalar>
Scalar loss_h(const LossSpec& spec, Scalar x) {
  const Scalar beta = static_cast<Scalar>(spec.beta);
  switch (spec.kind) {
    case LossKind::square_hinge:
      return x < Scalar(1) ? Scalar(1) - x : Scalar(0);
    case LossKind::square:
      return Scalar(1) - x;
    case LossKind::sigmoid: {
      const Scalar s = detail::logistic_sigma(beta * x);
      return s * (Scalar(1) - s);
    }
    case LossKind::logistic:
      return detail::logistic_sigma(-beta * x);
  }
  return Scalar(0);
}

inline double loss_h_scale(const LossSpec& spec) {
  return (spec.kind == LossKind::sigmoid || spec.kind == LossKind::logistic)
             ? spec.beta
             : 1.0;
}

/// -dL/dx, the quantity every gradient formula multiplies by.
template <typename Scalar>
Scalar loss_slope(const LossSpec& spec, Scalar x) {
  return static_cast<Scalar>(loss_h_scale(spec)) * loss_h(spec, x);
}

template <typename Scalar>
Scalar weight_phi(const WeightSpec& spec, Scalar x) {
  using std::tanh;
  return spec.kind == WeightKind::identity
             ? x
             : tanh(static_cast<Scalar>(spec.rho) * x);
}

/// 1 - tanh^2(rho x) for tanh, 1 for identity.
template <typename Scalar>
Scalar weight_phi_factor(const WeightSpec& spec, Scalar x) {
  using std::tanh;
  if (spec.kind == WeightKind::identity) return Scalar(1);
  const Scalar t = tanh(static_cast<Scalar>(spec.rho) * x);
  return Scalar(1) - t * t;
}

/// phi'(x) = rho * factor for tanh, 1 for identity.
template <typename Scalar>
Scalar weight_phi_derivative(const WeightSpec& spec, Scalar x) {
  if (spec.kind == WeightKind::identity) return Scalar(1);
  return static_cast<Scalar>(spec.rho) * weight_phi_factor(spec, x);
}

}  // namespace mfauc
