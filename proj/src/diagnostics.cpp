#include "mfauc/diagnostics.hpp"

#include <cmath>

#include "mfauc/errors.hpp"

namespace mfauc {

namespace {

struct RowScales {
  Eigen::VectorXd c;  // 1/|w_i| + 1/|wbar_i|
  Eigen::VectorXd r;  // 1/|wbar_i|
};

RowScales row_scales(const ImplicitRatings& ratings) {
  const Index m = ratings.users();
  if (m == 0 || ratings.items() == 0) throw ParameterError("empty rating matrix");
  RowScales s{Eigen::VectorXd(m), Eigen::VectorXd(m)};
  for (Index i = 0; i < m; ++i) {
    const double a = static_cast<double>(ratings.row_size(i));
    const double b = static_cast<double>(ratings.irrelevant_count(i));
    if (a == 0) throw DegenerateUserError(i, "row of X is zero");
    if (b == 0) throw DegenerateUserError(i, "row of J - X is zero");
    s.c[i] = 1.0 / a + 1.0 / b;
    s.r[i] = 1.0 / b;
  }
  return s;
}

/// z = M w = X^T (c .* w) - 1 (r . w)
Eigen::VectorXd apply_m(const ImplicitRatings& X, const RowScales& s, const Eigen::VectorXd& w) {
  Eigen::VectorXd z = Eigen::VectorXd::Constant(X.items(), -s.r.dot(w));
  for (Index i = 0; i < X.users(); ++i) {
    const double cw = s.c[i] * w[i];
    for (Index j : X.row(i)) z[j] += cw;
  }
  return z;
}

/// w = M^T z = c .* (X z) - r (1 . z)
Eigen::VectorXd apply_mt(const ImplicitRatings& X, const RowScales& s, const Eigen::VectorXd& z) {
  const double total = z.sum();
  Eigen::VectorXd w(X.users());
  for (Index i = 0; i < X.users(); ++i) {
    double acc = 0.0;
    for (Index j : X.row(i)) acc += z[j];
    w[i] = s.c[i] * acc - s.r[i] * total;
  }
  return w;
}

}  // namespace

Eigen::MatrixXd margin_matrix(const ImplicitRatings& ratings) {
  const RowScales s = row_scales(ratings);
  Eigen::MatrixXd M(ratings.items(), ratings.users());
  for (Index i = 0; i < ratings.users(); ++i) {
    M.col(i).setConstant(-s.r[i]);
    for (Index j : ratings.row(i)) M(j, i) += s.c[i];
  }
  return M;
}

double margin_matrix_norm(const ImplicitRatings& ratings, NormMethod method,
                          double tolerance, Index max_iterations) {
  if (!(tolerance > 0.0)) throw ParameterError("tolerance must be > 0");
  const Index m = ratings.users(), n = ratings.items();
  if (method == NormMethod::automatic)
    method = std::min(m, n) <= 64 ? NormMethod::dense : NormMethod::power;
  if (method == NormMethod::dense) {
    const Eigen::MatrixXd M = margin_matrix(ratings);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinV);
    // Rayleigh quotient on the top right singular vector: error is second order
    // in the vector error and exact when the vector is exact up to rounding.
    const Eigen::VectorXd v = svd.matrixV().col(0);
    return std::sqrt((M * v).squaredNorm() / v.squaredNorm());
  }
  const RowScales s = row_scales(ratings);
  // Deterministic, generic start: unit-norm vector with distinct entries.
  Eigen::VectorXd x(m);
  for (Index i = 0; i < m; ++i) x[i] = 1.0 + std::sin(1.0 + 0.7 * static_cast<double>(i));
  x.normalize();
  double theta = 0.0;
  for (Index it = 0; it < max_iterations; ++it) {
    const Eigen::VectorXd y = apply_mt(ratings, s, apply_m(ratings, s, x));
    theta = x.dot(y);  // Rayleigh quotient of M^T M
    const double ynorm = y.norm();
    if (ynorm == 0.0) return 0.0;
    const double residual = (y - theta * x).norm();
    x = y / ynorm;
    if (residual <= tolerance * theta) break;
  }
  return std::sqrt(std::max(theta, 0.0));
}

void BoundInputs::validate() const {
  if (!(B > 0.0) || !(R_U > 0.0) || !(R_V > 0.0))
    throw ParameterError("B, R_U and R_V must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("delta must lie in (0, 1)");
}

BoundTerms rademacher_bound(const ImplicitRatings& ratings, const BoundInputs& inputs,
                            NormMethod method) {
  inputs.validate();
  BoundTerms t;
  t.spectral_norm = margin_matrix_norm(ratings, method);
  const double m = static_cast<double>(ratings.users());
  const double n = static_cast<double>(ratings.items());
  t.complexity = 2.0 * inputs.B * inputs.R_U * inputs.R_V / m * t.spectral_norm;
  double sum = 0.0;
  for (Index i = 0; i < ratings.users(); ++i) {
    const double a = static_cast<double>(ratings.row_size(i));
    const double b = static_cast<double>(ratings.irrelevant_count(i));
    sum += 1.0 / (a * b * b);
  }
  const double base = std::log(1.0 / inputs.delta) * (n - 1.0) * (n - 1.0) / (m * m) * sum;
  t.deviation = std::sqrt(2.0 * base);
  t.deviation_half = std::sqrt(0.5 * base);
  t.total = t.complexity + t.deviation;
  return t;
}

}  // namespace mfauc
