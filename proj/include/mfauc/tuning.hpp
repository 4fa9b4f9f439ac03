#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mfauc/optimizer.hpp"
#include "mfauc/ratings.hpp"

namespace mfauc {

/// Candidate values per hyperparameter. Empty lists keep the base value.
struct Grid {
  std::vector<double> alpha;
  std::vector<double> lambda;
  std::vector<Index> k;
  std::vector<LossKind> loss;
  std::vector<double> beta;
  std::vector<double> rho;  ///< nonempty selects tanh weighting
  Index folds = 3;
  Index validation_items = 3;
  Index cutoff = 5;
  /// Sequential-user subsample size in ratings; 0 keeps everything.
  Index max_ratings = 0;

  void validate() const;
};

/// Grid points in row-major order of (alpha, lambda, k, loss, beta, rho).
std::vector<TrainConfig> expand_grid(const Grid& grid, const TrainConfig& base);

struct CvFold {
  ImplicitRatings train;
  /// Items ranked against but never counted: everything outside `validation`
  /// that the user rated.
  ImplicitRatings mask;
  std::vector<std::vector<Index>> validation;
};

/// Each user's relevant items are shuffled and dealt into `folds` parts.
/// Fold f trains on the other parts and validates on up to
/// `validation_items` items drawn from part f.
std::vector<CvFold> make_folds(const ImplicitRatings& ratings, Index folds,
                               Index validation_items, std::uint64_t seed);

/// Users taken in index order until `max_ratings` ratings are reached; items
/// left without ratings are dropped.
FilterResult sequential_user_sample(const ImplicitRatings& ratings, Index max_ratings);

struct TuningResult {
  std::vector<TrainConfig> points;
  /// F1 at the cutoff, [point][fold]; 0 for failed runs.
  std::vector<std::vector<double>> fold_scores;
  std::vector<double> mean_scores;
  std::vector<std::string> failures;  ///< empty string when the run succeeded
  std::size_t best = 0;
  TrainConfig best_config;
  double best_score = 0.0;
};

/// Cross-validated F1 for every grid point; the best mean wins, ties going
/// to the earlier point. Runs that fail at runtime score 0.
TuningResult grid_search(const ImplicitRatings& ratings, const Grid& grid,
                         const TrainConfig& base, std::uint64_t seed,
                         Index workers = 1);

/// Flat "key = value" or "key = [v1, v2, ...]" lines; '#' starts a comment.
Grid parse_grid(std::string_view text);
Grid load_grid(const std::filesystem::path& path);

/// Writes the chosen hyperparameters in the same flat format.
void save_best(const TuningResult& result, const std::filesystem::path& path);

}  // namespace mfauc
