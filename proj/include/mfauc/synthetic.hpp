#pragma once

#include <cstdint>
#include <vector>

#include "mfauc/ratings.hpp"
#include "mfauc/types.hpp"

namespace mfauc {

struct SyntheticSpec {
  int variant = 1;
  Index m = 500;
  Index n = 200;
  Index k = 8;
  /// Fraction of each row kept by the score threshold (variant 1).
  double top_fraction = 0.1;
  /// Mean number of uniformly drawn extra relevant items per row (variant 1).
  double noise_per_row = 5.0;
  /// Zipf exponent of the user and item observation probabilities (variant 2).
  double power = 1.0;
  /// Relevant-entry density at which sampling stops (variant 2).
  double density = 0.1;
  /// Upper bound on observation draws (variant 2).
  std::int64_t max_draws = 100'000'000;

  static SyntheticSpec defaults(int variant);
  void validate() const;
};

struct SyntheticData {
  ImplicitRatings ratings;
  /// Ground-truth factors; rows follow the retained users / items.
  RowMatrix<double> U;
  RowMatrix<double> V;
  /// Variant 1: per-user score threshold of the top-fraction rule.
  std::vector<double> thresholds;
  /// Relevant entries before noise was added (variant 1) as a matrix.
  ImplicitRatings thresholded;
  /// Original index of every retained user / item (variant 2 drops empty ones).
  std::vector<Index> user_map;
  std::vector<Index> item_map;
  /// Observation draws made (variant 2).
  std::int64_t draws = 0;
};

/// m x k matrix with exactly orthogonal columns: the Q factor of a Gaussian
/// matrix with each column rescaled to the norm of the Gaussian column.
RowMatrix<double> orthogonal_factors(Index m, Index k, std::uint64_t seed);

SyntheticData gen_synthetic1(const SyntheticSpec& spec, std::uint64_t seed);
SyntheticData gen_synthetic2(const SyntheticSpec& spec, std::uint64_t seed);
SyntheticData generate(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace mfauc
