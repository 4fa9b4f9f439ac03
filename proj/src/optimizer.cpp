#include "mfauc/optimizer.hpp"

#include <numeric>

#include "sgd_engine.hpp"

namespace mfauc {

std::string to_string(TerminationReason reason) {
  return reason == TerminationReason::converged ? "converged" : "max_iters";
}

void TrainConfig::validate() const {
  if (k < 1) throw ParameterError("k must be >= 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw ParameterError("alpha must be finite and >= 0");
  if (!(lambda >= 0.0)) throw ParameterError("lambda must be >= 0");
  if (max_iters < 1) throw ParameterError("T must be >= 1");
  if (average_start > max_iters) throw ParameterError("T0 must satisfy 0 <= T0 <= T");
  if (!(eps >= 0.0)) throw ParameterError("eps must be >= 0");
  if (kappa_w < 1 || kappa_y < 1)
    throw ParameterError("kappa_w and kappa_y must be >= 1");
  if (!(tau >= 0.0)) throw ParameterError("tau must be >= 0");
  if (!(init_std >= 0.0)) throw ParameterError("init_std must be >= 0");
  if (objective_check_period < 1)
    throw ParameterError("objective_check_period must be >= 1");
  if (eval_users < 0) throw ParameterError("eval_users must be >= 0");
  if (!(divergence_bound > 0.0))
    throw ParameterError("divergence_bound must be > 0");
  for (std::size_t a = 0; a < beta_schedule.size(); ++a) {
    if (!(beta_schedule[a].second > 0.0))
      throw ParameterError("beta schedule values must be > 0");
    if (a > 0 && beta_schedule[a].first <= beta_schedule[a - 1].first)
      throw ParameterError("beta schedule iterations must increase");
  }
  validate_combination(loss, weight);
}

Index TrainConfig::resolved_average_start() const {
  return average_start >= 0 ? average_start : (4 * max_iters) / 5;
}

LossSpec TrainConfig::loss_at(Index iteration) const {
  LossSpec out = loss;
  for (const auto& [from, beta] : beta_schedule)
    if (iteration >= from) out.beta = beta;
  return out;
}

FactorModeld init_factors(Index m, Index n, Index k, double init_std,
                          std::uint64_t seed) {
  if (k < 1) throw ParameterError("k must be >= 1");
  if (m < 0 || n < 0) throw ParameterError("dimensions must be >= 0");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix<double> U(m, k), V(n, k);
  for (Index a = 0; a < U.size(); ++a) U.data()[a] = init_std * normal(rng);
  for (Index a = 0; a < V.size(); ++a) V.data()[a] = init_std * normal(rng);
  return FactorModeld(std::move(U), std::move(V));
}

namespace {

void full_batch_epoch(FactorModeld& model, const RankingObjective& obj,
                      const TrainConfig& cfg, bool averaging) {
  const auto [gu, gv] = full_gradient(model, obj);
  const double su = cfg.row_scaled_steps ? static_cast<double>(model.users()) : 1.0;
  const double sv = cfg.row_scaled_steps ? static_cast<double>(model.items()) : 1.0;
  model.U -= (cfg.alpha * su) * gu;
  model.V -= (cfg.alpha * sv) * gv;
  for (Index i = 0; i < model.users(); ++i)
    detail::average_row(model.U_avg, model.U, model.user_visits, i, averaging,
                        cfg.averaging);
  for (Index j = 0; j < model.items(); ++j)
    detail::average_row(model.V_avg, model.V, model.item_visits, j, averaging,
                        cfg.averaging);
}

}  // namespace

TrainReport train(const ImplicitRatings& ratings, const TrainConfig& config) {
  std::vector<Index> users(ratings.users()), items(ratings.items());
  std::iota(users.begin(), users.end(), Index{0});
  std::iota(items.begin(), items.end(), Index{0});
  return detail::drive_training(
      ratings, config,
      [&](FactorModeld& model, const RankingObjective& obj, Index s, bool averaging) {
        if (config.mode == TrainMode::full_batch) {
          full_batch_epoch(model, obj, config, averaging);
          return;
        }
        Rng rng(detail::block_stream_seed(config.seed, s, 0));
        if (config.fixed_permutations) {
          Rng perm(detail::block_stream_seed(config.seed, 0, 0));
          detail::run_block_steps(model, obj, obj.dists, users, items, config,
                                  averaging, rng, &perm);
        } else {
          detail::run_block_steps(model, obj, obj.dists, users, items, config,
                                  averaging, rng);
        }
      });
}

}  // namespace mfauc
