#pragma once

#include "mfauc/ratings.hpp"
#include "mfauc/types.hpp"

namespace mfauc {

enum class NormMethod {
  automatic,  ///< dense SVD when min(m, n) <= 64, power iteration otherwise
  power,
  dense,
};

/// M = E - Ebar as a dense n x m matrix: column i is x_i / |w_i| minus
/// (1 - x_i) / |wbar_i|, x_i the 0/1 row of user i.
Eigen::MatrixXd margin_matrix(const ImplicitRatings& ratings);

/// Spectral norm of E - Ebar. The power method works on M^T M through
/// products with X only and stops once the eigen-residual falls below
/// `tolerance` relative to the eigenvalue estimate.
double margin_matrix_norm(const ImplicitRatings& ratings,
                          NormMethod method = NormMethod::automatic,
                          double tolerance = 1e-8, Index max_iterations = 100000);

struct BoundInputs {
  double B = 1.0;    ///< Lipschitz constant of the loss
  double R_U = 1.0;  ///< Frobenius radius of U
  double R_V = 1.0;  ///< Frobenius radius of V
  double delta = 0.05;

  void validate() const;
};

struct BoundTerms {
  /// 2 B R_U R_V / m * |E - Ebar|_2
  double complexity = 0.0;
  /// sqrt(2 ln(1/delta) (n-1)^2 / m^2 * sum_i 1 / (|w_i| |wbar_i|^2))
  double deviation = 0.0;
  /// Same with 1/2 in place of 2 under the root.
  double deviation_half = 0.0;
  double spectral_norm = 0.0;
  double total = 0.0;  ///< complexity + deviation
};

BoundTerms rademacher_bound(const ImplicitRatings& ratings, const BoundInputs& inputs,
                            NormMethod method = NormMethod::automatic);

}  // namespace mfauc
