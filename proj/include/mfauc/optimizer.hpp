#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mfauc/factor_model.hpp"
#include "mfauc/losses.hpp"
#include "mfauc/ratings.hpp"

namespace mfauc {

enum class TrainMode { sgd, full_batch };

enum class AveragingRule {
  visit_count,  ///< avg <- c/(c+1) avg + 1/(c+1) row, c = updates so far
  row_index,    ///< literal variant weighting by the row index
};

enum class TerminationReason { max_iters, converged };

std::string to_string(TerminationReason reason);

struct TrainConfig {
  Index k = 8;
  double lambda = 0.0;
  double alpha = 0.05;
  Index max_iters = 500;   ///< T
  /// T0: averaging runs after this many iterations; negative means 0.8 T.
  Index average_start = -1;
  double eps = 1e-9;
  Index kappa_w = 30;
  Index kappa_y = 10;
  double tau = 0.0;
  LossSpec loss{};
  WeightSpec weight{};
  double init_std = 0.1;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::sgd;
  /// Objective is recorded (and convergence tested) every this many
  /// iterations.
  Index objective_check_period = 1;
  /// Users drawn by the fixed-seed objective estimate; 0 means one per user.
  Index eval_users = 0;
  std::uint64_t eval_seed = 0x5eedULL;
  /// Use the exact objective instead of the fixed-seed estimate.
  bool exact_objective = false;
  /// Optional (iteration, beta) steps; beta applies from that iteration on.
  std::vector<std::pair<Index, double>> beta_schedule;
  AveragingRule averaging = AveragingRule::visit_count;
  /// Reuse one pair of permutations for every iteration.
  bool fixed_permutations = false;
  /// Step along m * d/du_i and n * d/dv_j (per-row scale) rather than the raw
  /// gradient, whose magnitude shrinks like 1/m and 1/n.
  bool row_scaled_steps = true;
  /// Any factor entry above this magnitude is treated as divergence.
  double divergence_bound = 1e6;

  void validate() const;
  Index resolved_average_start() const;
  LossSpec loss_at(Index iteration) const;
};

struct TrainReport {
  /// (iteration, objective) pairs; iteration 0 is the initial model.
  std::vector<std::pair<Index, double>> trace;
  std::vector<double> iteration_seconds;
  TerminationReason reason = TerminationReason::max_iters;
  Index iterations = 0;
  /// Final model: averaged factors once averaging has started, raw otherwise.
  FactorModeld model;
  /// Users skipped inside blocks (parallel trainer only).
  std::int64_t skipped_block_users = 0;
  /// Ownership conflicts detected by the race ledger (parallel only).
  std::int64_t ownership_conflicts = 0;
};

/// U and V with i.i.d. N(0, init_std^2) entries; averages start equal to them.
FactorModeld init_factors(Index m, Index n, Index k, double init_std,
                          std::uint64_t seed);

/// avg <- (c/(c+1)) avg + (1/(c+1)) row.
template <typename AvgDerived, typename RowDerived>
void running_average_update(const Eigen::MatrixBase<AvgDerived>& avg,
                            const Eigen::MatrixBase<RowDerived>& row,
                            std::int64_t count) {
  using Scalar = typename AvgDerived::Scalar;
  auto& out = const_cast<Eigen::MatrixBase<AvgDerived>&>(avg);
  const Scalar c = static_cast<Scalar>(count);
  out = (c / (c + Scalar(1))) * out + (Scalar(1) / (c + Scalar(1))) * row;
}

/// Averaged stochastic gradient descent (or exact full-batch descent).
TrainReport train(const ImplicitRatings& ratings, const TrainConfig& config);

}  // namespace mfauc
