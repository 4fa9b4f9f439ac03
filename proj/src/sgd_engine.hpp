#pragma once

// Internal: the row-update loop shared by the serial and block-parallel
// trainers, and the epoch driver that records the objective trace.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <vector>

#include "mfauc/errors.hpp"
#include "mfauc/objective.hpp"
#include "mfauc/optimizer.hpp"

namespace mfauc::detail {

/// Seed of the sampling stream for (iteration, block).
inline std::uint64_t block_stream_seed(std::uint64_t seed, Index iteration,
                                       Index block) {
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(iteration)),
                     static_cast<std::uint64_t>(block));
}

inline void average_row(RowMatrix<double>& avg, const RowMatrix<double>& raw,
                        std::vector<std::int64_t>& visits, Index row,
                        bool averaging, AveragingRule rule) {
  if (!averaging) {
    avg.row(row) = raw.row(row);
    return;
  }
  const std::int64_t c =
      rule == AveragingRule::visit_count ? visits[row] : static_cast<std::int64_t>(row + 1);
  running_average_update(avg.row(row), raw.row(row), c);
  ++visits[row];
}

/// max(|users|, |items|) paired updates over permutations of the given rows,
/// wrapping the shorter list. Both gradients of a pair are computed before
/// either row moves.
template <SamplingDomain Domain>
void run_block_steps(FactorModeld& model, const RankingObjective& obj,
                     const Domain& domain, std::vector<Index> users,
                     std::vector<Index> items, const TrainConfig& cfg,
                     bool averaging, Rng& rng, Rng* perm_rng = nullptr) {
  Rng& shuffler = perm_rng ? *perm_rng : rng;
  std::shuffle(users.begin(), users.end(), shuffler);
  std::shuffle(items.begin(), items.end(), shuffler);
  const std::size_t steps = std::max(users.size(), items.size());
  const double su = cfg.row_scaled_steps ? static_cast<double>(domain.user_count()) : 1.0;
  const double sv = cfg.row_scaled_steps ? static_cast<double>(domain.item_count()) : 1.0;
  Vector<double> gu, gv;
  for (std::size_t t = 0; t < steps; ++t) {
    const bool has_u = !users.empty(), has_v = !items.empty();
    const Index i = has_u ? users[t % users.size()] : -1;
    const Index j = has_v ? items[t % items.size()] : -1;
    if (has_u) gu = grad_u_sampled(model, obj, domain, i, cfg.kappa_y, rng);
    if (has_v) gv = grad_v_sampled(model, obj, domain, j, cfg.kappa_w, cfg.kappa_y, rng);
    if (has_u) {
      model.U.row(i) -= (cfg.alpha * su) * gu.transpose();
      average_row(model.U_avg, model.U, model.user_visits, i, averaging, cfg.averaging);
    }
    if (has_v) {
      model.V.row(j) -= (cfg.alpha * sv) * gv.transpose();
      average_row(model.V_avg, model.V, model.item_visits, j, averaging, cfg.averaging);
    }
  }
}

inline void check_factors(const FactorModeld& model, double bound, Index iteration) {
  if (!model.all_finite())
    throw DivergenceError(iteration, "non-finite factor entry");
  const double peak = std::max(model.U.size() ? model.U.cwiseAbs().maxCoeff() : 0.0,
                               model.V.size() ? model.V.cwiseAbs().maxCoeff() : 0.0);
  if (peak > bound)
    throw DivergenceError(iteration, "factor entry magnitude " + std::to_string(peak) +
                                         " exceeds " + std::to_string(bound));
}

/// Objective used for the trace and the stopping test, evaluated on the
/// averaged factors.
inline double tracked_objective(const FactorModeld& model, const RankingObjective& obj,
                                const TrainConfig& cfg) {
  const FactorModeld view = model.averaged();
  if (cfg.exact_objective || cfg.mode == TrainMode::full_batch)
    return objective_full(view, obj);
  Rng rng(cfg.eval_seed);
  const Index users = cfg.eval_users > 0 ? cfg.eval_users : model.users();
  return objective_sampled(view, obj, obj.dists, users, cfg.kappa_y, rng);
}

/// Runs epochs until T or convergence. `epoch(model, obj, s, averaging)`
/// performs the updates of iteration s.
template <typename EpochFn>
TrainReport drive_training(const ImplicitRatings& ratings, const TrainConfig& cfg,
                           EpochFn&& epoch) {
  cfg.validate();
  ratings.require_nondegenerate();
  const ItemDistributions dists(ratings, cfg.tau);
  FactorModeld model =
      init_factors(ratings.users(), ratings.items(), cfg.k, cfg.init_std, cfg.seed);
  RankingObjective obj{ratings, dists, cfg.loss_at(0), cfg.weight, cfg.lambda};

  TrainReport report;
  double prev = tracked_objective(model, obj, cfg);
  if (!std::isfinite(prev)) throw DivergenceError(0, "non-finite objective");
  report.trace.emplace_back(0, prev);
  bool averaged = false;
  for (Index s = 1; s <= cfg.max_iters; ++s) {
    const auto start = std::chrono::steady_clock::now();
    obj.loss = cfg.loss_at(s);
    const bool averaging = s > cfg.resolved_average_start();
    averaged = averaged || averaging;
    epoch(model, obj, s, averaging);
    model.touch();
    check_factors(model, cfg.divergence_bound, s);
    report.iteration_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    report.iterations = s;
    if (s % cfg.objective_check_period != 0 && s != cfg.max_iters) continue;
    const double value = tracked_objective(model, obj, cfg);
    if (!std::isfinite(value)) throw DivergenceError(s, "non-finite objective");
    report.trace.emplace_back(s, value);
    if (std::abs(value - prev) < cfg.eps) {
      report.reason = TerminationReason::converged;
      break;
    }
    prev = value;
  }
  report.model = averaged ? model.averaged() : FactorModeld(model.U, model.V);
  return report;
}

}  // namespace mfauc::detail
