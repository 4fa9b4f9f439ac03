#pragma once

#include <concepts>
#include <utility>
#include <vector>

#include "mfauc/distributions.hpp"
#include "mfauc/errors.hpp"
#include "mfauc/factor_model.hpp"
#include "mfauc/losses.hpp"
#include "mfauc/ratings.hpp"

namespace mfauc {

/// Everything that defines the training objective
///   (1/m) sum_i sum_{p in w_i} g(p) phi( sum_{q notin w_i} L(s_ip - s_iq) g'(q) )
///     + lambda/2 (|U|_F^2 / m + |V|_F^2 / n).
struct RankingObjective {
  const ImplicitRatings& ratings;
  const ItemDistributions& dists;
  LossSpec loss;
  WeightSpec weight;
  double lambda = 0.0;
};

/// A source of users and per-user relevant / irrelevant items for the sampled
/// estimators. ItemDistributions is the full-matrix domain; the parallel
/// trainer provides column-restricted block domains.
template <typename D>
concept SamplingDomain = requires(const D& d, Index i, Index j, Rng& rng) {
  { d.user_count() } -> std::convertible_to<Index>;
  { d.item_count() } -> std::convertible_to<Index>;
  { d.draw_user(rng) } -> std::convertible_to<Index>;
  { d.draw_relevant(i, rng) } -> std::convertible_to<Index>;
  { d.draw_irrelevant(i, rng) } -> std::convertible_to<Index>;
  { d.relevant_weight(i, j) } -> std::convertible_to<double>;
  { d.irrelevant_weight(i, j) } -> std::convertible_to<double>;
};

namespace detail {

inline void require_user(const ImplicitRatings& r, Index i) {
  if (r.row_size(i) == 0) throw DegenerateUserError(i, "no relevant items");
  if (r.irrelevant_count(i) == 0)
    throw DegenerateUserError(i, "no irrelevant items");
}

template <typename Scalar>
Scalar regulariser(const FactorModel<Scalar>& model, double lambda) {
  const Scalar m = static_cast<Scalar>(model.users());
  const Scalar n = static_cast<Scalar>(model.items());
  return static_cast<Scalar>(lambda) / Scalar(2) *
         (model.U.squaredNorm() / m + model.V.squaredNorm() / n);
}

/// Calls f(j) for every item j not in the sorted row.
template <typename F>
void for_each_irrelevant(std::span<const Index> row, Index items, F&& f) {
  std::size_t k = 0;
  for (Index j = 0; j < items; ++j) {
    if (k < row.size() && row[k] == j) {
      ++k;
      continue;
    }
    f(j);
  }
}

/// Inner loss masses S_p = sum_{q notin w_i} g'(q) L(s_p - s_q) for every
/// relevant p of user i, aligned with the row.
template <typename Scalar>
std::vector<Scalar> loss_masses(const RankingObjective& obj, Index i,
                                const Vector<Scalar>& scores) {
  const auto row = obj.ratings.row(i);
  const Index n = obj.ratings.items();
  std::vector<Scalar> mass(row.size(), Scalar(0));
  const double norm = obj.dists.irrelevant_normaliser(i);
  const auto& neg = obj.dists.irrelevant_mass();
  for (std::size_t k = 0; k < row.size(); ++k) {
    const Scalar sp = scores[row[k]];
    Scalar acc(0);
    for_each_irrelevant(row, n, [&](Index q) {
      acc += static_cast<Scalar>(neg[q] / norm) * loss_value(obj.loss, sp - scores[q]);
    });
    mass[k] = acc;
  }
  return mass;
}

/// Per-item coefficients c_j such that the data term of user i has gradient
/// V^T c with respect to u_i and c_j u_i with respect to v_j (before the 1/m
/// factor). Uses the exact double sum.
template <typename Scalar>
Vector<Scalar> user_coefficients(const FactorModel<Scalar>& model,
                                 const RankingObjective& obj, Index i) {
  require_user(obj.ratings, i);
  const Vector<Scalar> scores = model.user_scores(i);
  const auto row = obj.ratings.row(i);
  const auto g = obj.dists.relevant_weights(i);
  const auto& neg = obj.dists.irrelevant_mass();
  const double norm = obj.dists.irrelevant_normaliser(i);
  const Index n = obj.ratings.items();
  std::vector<Scalar> mass;
  if (obj.weight.kind != WeightKind::identity)
    mass = loss_masses<Scalar>(obj, i, scores);

  Vector<Scalar> coef = Vector<Scalar>::Zero(n);
  for (std::size_t k = 0; k < row.size(); ++k) {
    const Index p = row[k];
    const Scalar sp = scores[p];
    const Scalar outer =
        static_cast<Scalar>(g[k]) *
        (mass.empty() ? Scalar(1) : weight_phi_derivative(obj.weight, mass[k]));
    Scalar total(0);
    for_each_irrelevant(row, n, [&](Index q) {
      const Scalar c = outer * static_cast<Scalar>(neg[q] / norm) *
                       loss_slope(obj.loss, sp - scores[q]);
      coef[q] += c;
      total += c;
    });
    coef[p] -= total;
  }
  return coef;
}

}  // namespace detail

/// Exact objective value (full double sum over every user's item pairs).
template <typename Scalar>
Scalar objective_full(const FactorModel<Scalar>& model,
                      const RankingObjective& obj) {
  const Index m = obj.ratings.users();
  Scalar data(0);
  for (Index i = 0; i < m; ++i) {
    detail::require_user(obj.ratings, i);
    const Vector<Scalar> scores = model.user_scores(i);
    const auto mass = detail::loss_masses<Scalar>(obj, i, scores);
    const auto g = obj.dists.relevant_weights(i);
    Scalar user(0);
    for (std::size_t k = 0; k < mass.size(); ++k)
      user += static_cast<Scalar>(g[k]) * weight_phi(obj.weight, mass[k]);
    data += user;
  }
  return data / static_cast<Scalar>(m) + detail::regulariser(model, obj.lambda);
}

/// Monte-Carlo estimate of the objective from kappa_w users (uniform, with
/// replacement) and kappa_y relevant and irrelevant items per user. The
/// regulariser is evaluated exactly.
template <typename Scalar, SamplingDomain Domain>
Scalar objective_sampled(const FactorModel<Scalar>& model,
                         const RankingObjective& obj, const Domain& domain,
                         Index kappa_w, Index kappa_y, Rng& rng) {
  if (kappa_w < 1 || kappa_y < 1)
    throw ParameterError("kappa_w and kappa_y must be >= 1");
  std::vector<Scalar> pos(kappa_y), neg(kappa_y);
  Scalar data(0);
  for (Index s = 0; s < kappa_w; ++s) {
    const Index i = domain.draw_user(rng);
    const auto u = model.U.row(i);
    for (Index k = 0; k < kappa_y; ++k)
      pos[k] = u.dot(model.V.row(domain.draw_relevant(i, rng)));
    for (Index k = 0; k < kappa_y; ++k)
      neg[k] = u.dot(model.V.row(domain.draw_irrelevant(i, rng)));
    Scalar user(0);
    for (Index a = 0; a < kappa_y; ++a) {
      Scalar inner(0);
      for (Index b = 0; b < kappa_y; ++b)
        inner += loss_value(obj.loss, pos[a] - neg[b]);
      user += weight_phi(obj.weight, inner / static_cast<Scalar>(kappa_y));
    }
    data += user / static_cast<Scalar>(kappa_y);
  }
  return data / static_cast<Scalar>(kappa_w) +
         detail::regulariser(model, obj.lambda);
}

/// Per-user empirical expectations used by the square-loss gradients:
///   v_dot = sum_p g v_p,  v_ddot = sum_q g' v_q,
///   w_dot = sum_p g v_p v_p^T u_i,  w_ddot = sum_q g' v_q v_q^T u_i.
template <typename Scalar = double>
struct ExpectationCache {
  RowMatrix<Scalar> v_dot;
  RowMatrix<Scalar> v_ddot;
  RowMatrix<Scalar> w_dot;
  RowMatrix<Scalar> w_ddot;
  std::uint64_t generation = 0;

  bool valid_for(const FactorModel<Scalar>& model) const {
    return generation == model.generation && v_dot.rows() == model.users() &&
           v_dot.cols() == model.rank();
  }
};

namespace detail {

/// Irrelevant-mass-weighted sums over all items: sum_j q_j v_j and
/// sum_j q_j v_j v_j^T.
template <typename Scalar>
std::pair<Vector<Scalar>, Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>
global_negative_moments(const FactorModel<Scalar>& model,
                        const ItemDistributions& dists) {
  const auto& mass = dists.irrelevant_mass();
  Vector<Scalar> w(model.items());
  for (Index j = 0; j < model.items(); ++j) w[j] = static_cast<Scalar>(mass[j]);
  Vector<Scalar> first = model.V.transpose() * w;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> second =
      model.V.transpose() * w.asDiagonal() * model.V;
  return {std::move(first), std::move(second)};
}

template <typename Scalar>
void fill_user_expectations(
    const FactorModel<Scalar>& model, const ItemDistributions& dists, Index i,
    const Vector<Scalar>& neg_first,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& neg_second,
    ExpectationCache<Scalar>& cache) {
  const auto row = dists.ratings().row(i);
  const auto g = dists.relevant_weights(i);
  const auto& mass = dists.irrelevant_mass();
  const Scalar norm = static_cast<Scalar>(dists.irrelevant_normaliser(i));
  const Vector<Scalar> u = model.U.row(i).transpose();
  const Index k = model.rank();
  Vector<Scalar> vd = Vector<Scalar>::Zero(k), wd = Vector<Scalar>::Zero(k);
  Vector<Scalar> rel_first = Vector<Scalar>::Zero(k);
  Vector<Scalar> rel_second = Vector<Scalar>::Zero(k);
  for (std::size_t t = 0; t < row.size(); ++t) {
    const auto v = model.V.row(row[t]).transpose();
    const Scalar vu = v.dot(u);
    vd += static_cast<Scalar>(g[t]) * v;
    wd += static_cast<Scalar>(g[t]) * vu * v;
    rel_first += static_cast<Scalar>(mass[row[t]]) * v;
    rel_second += static_cast<Scalar>(mass[row[t]]) * vu * v;
  }
  cache.v_dot.row(i) = vd.transpose();
  cache.w_dot.row(i) = wd.transpose();
  cache.v_ddot.row(i) = ((neg_first - rel_first) / norm).transpose();
  cache.w_ddot.row(i) = ((neg_second * u - rel_second) / norm).transpose();
}

}  // namespace detail

template <typename Scalar>
ExpectationCache<Scalar> build_expectation_cache(const FactorModel<Scalar>& model,
                                                 const ImplicitRatings& ratings,
                                                 const ItemDistributions& dists) {
  const Index m = ratings.users(), k = model.rank();
  ExpectationCache<Scalar> cache;
  cache.v_dot = RowMatrix<Scalar>::Zero(m, k);
  cache.v_ddot = RowMatrix<Scalar>::Zero(m, k);
  cache.w_dot = RowMatrix<Scalar>::Zero(m, k);
  cache.w_ddot = RowMatrix<Scalar>::Zero(m, k);
  const auto [first, second] = detail::global_negative_moments(model, dists);
  for (Index i = 0; i < m; ++i) {
    if (ratings.irrelevant_count(i) == 0) continue;
    detail::fill_user_expectations(model, dists, i, first, second, cache);
  }
  cache.generation = model.generation;
  return cache;
}

namespace detail {

inline bool uses_fast_path(const RankingObjective& obj) {
  return obj.loss.kind == LossKind::square &&
         obj.weight.kind == WeightKind::identity;
}

template <typename Scalar>
void require_cache(const ExpectationCache<Scalar>& cache,
                   const FactorModel<Scalar>& model) {
  if (!cache.valid_for(model))
    throw RuntimeError("expectation cache is stale for this model");
}

template <typename Scalar>
Vector<Scalar> square_grad_u_from_cache(const FactorModel<Scalar>& model,
                                        const RankingObjective& obj, Index i,
                                        const ExpectationCache<Scalar>& cache) {
  const Vector<Scalar> u = model.U.row(i).transpose();
  const Vector<Scalar> vd = cache.v_dot.row(i).transpose();
  const Vector<Scalar> vdd = cache.v_ddot.row(i).transpose();
  const Vector<Scalar> wd = cache.w_dot.row(i).transpose();
  const Vector<Scalar> wdd = cache.w_ddot.row(i).transpose();
  const Scalar m = static_cast<Scalar>(model.users());
  Vector<Scalar> data =
      vdd - vd + wdd - vd * vdd.dot(u) - vdd * vd.dot(u) + wd;
  return data / m + static_cast<Scalar>(obj.lambda) / m * u;
}

template <typename Scalar>
Vector<Scalar> square_grad_v_from_cache(const FactorModel<Scalar>& model,
                                        const RankingObjective& obj, Index j,
                                        const ExpectationCache<Scalar>& cache) {
  const Index m = model.users();
  const Vector<Scalar> vj = model.V.row(j).transpose();
  Vector<Scalar> acc = Vector<Scalar>::Zero(model.rank());
  for (Index i = 0; i < m; ++i) {
    detail::require_user(obj.ratings, i);
    const auto u = model.U.row(i);
    const Scalar uv = u.dot(vj.transpose());
    const double gp = obj.dists.relevant_weight(i, j);
    Scalar c;
    if (gp > 0.0 || obj.ratings.contains(i, j)) {
      c = -static_cast<Scalar>(gp) * (Scalar(1) + u.dot(cache.v_ddot.row(i)) - uv);
    } else {
      const double gq = obj.dists.irrelevant_weight(i, j);
      c = static_cast<Scalar>(gq) * (Scalar(1) + uv - u.dot(cache.v_dot.row(i)));
    }
    acc += c * u.transpose();
  }
  return acc / static_cast<Scalar>(m) +
         static_cast<Scalar>(obj.lambda / static_cast<double>(model.items())) * vj;
}

}  // namespace detail

/// Exact gradient of the objective with respect to u_i by the general double
/// sum, for any loss and weighting.
template <typename Scalar>
Vector<Scalar> grad_u_naive(const FactorModel<Scalar>& model,
                            const RankingObjective& obj, Index i) {
  const Vector<Scalar> coef = detail::user_coefficients(model, obj, i);
  const Scalar m = static_cast<Scalar>(model.users());
  return (model.V.transpose() * coef) / m +
         static_cast<Scalar>(obj.lambda) / m * model.U.row(i).transpose();
}

/// Exact gradient with respect to v_j by the general double sum.
template <typename Scalar>
Vector<Scalar> grad_v_naive(const FactorModel<Scalar>& model,
                            const RankingObjective& obj, Index j) {
  Vector<Scalar> acc = Vector<Scalar>::Zero(model.rank());
  for (Index i = 0; i < model.users(); ++i) {
    const Vector<Scalar> coef = detail::user_coefficients(model, obj, i);
    acc += coef[j] * model.U.row(i).transpose();
  }
  return acc / static_cast<Scalar>(model.users()) +
         static_cast<Scalar>(obj.lambda / static_cast<double>(model.items())) *
             model.V.row(j).transpose();
}

/// Exact gradient with respect to u_i. Square loss with identity weighting
/// goes through the expectation cache; everything else uses the double sum.
template <typename Scalar>
Vector<Scalar> grad_u(const FactorModel<Scalar>& model,
                      const RankingObjective& obj, Index i,
                      const ExpectationCache<Scalar>& cache) {
  if (!detail::uses_fast_path(obj)) return grad_u_naive(model, obj, i);
  detail::require_user(obj.ratings, i);
  detail::require_cache(cache, model);
  return detail::square_grad_u_from_cache(model, obj, i, cache);
}

template <typename Scalar>
Vector<Scalar> grad_u(const FactorModel<Scalar>& model,
                      const RankingObjective& obj, Index i) {
  if (!detail::uses_fast_path(obj)) return grad_u_naive(model, obj, i);
  detail::require_user(obj.ratings, i);
  // Only user i's row of the cache is needed.
  ExpectationCache<Scalar> cache;
  const Index m = model.users(), k = model.rank();
  cache.v_dot = RowMatrix<Scalar>::Zero(m, k);
  cache.v_ddot = cache.w_dot = cache.w_ddot = cache.v_dot;
  const auto [first, second] = detail::global_negative_moments(model, obj.dists);
  detail::fill_user_expectations(model, obj.dists, i, first, second, cache);
  return detail::square_grad_u_from_cache(model, obj, i, cache);
}

template <typename Scalar>
Vector<Scalar> grad_v(const FactorModel<Scalar>& model,
                      const RankingObjective& obj, Index j,
                      const ExpectationCache<Scalar>& cache) {
  if (!detail::uses_fast_path(obj)) return grad_v_naive(model, obj, j);
  detail::require_cache(cache, model);
  return detail::square_grad_v_from_cache(model, obj, j, cache);
}

template <typename Scalar>
Vector<Scalar> grad_v(const FactorModel<Scalar>& model,
                      const RankingObjective& obj, Index j) {
  if (!detail::uses_fast_path(obj)) return grad_v_naive(model, obj, j);
  obj.ratings.require_nondegenerate();
  return detail::square_grad_v_from_cache(
      model, obj, j, build_expectation_cache(model, obj.ratings, obj.dists));
}

/// Exact gradients with respect to all of U and V in one pass.
template <typename Scalar>
std::pair<RowMatrix<Scalar>, RowMatrix<Scalar>> full_gradient(
    const FactorModel<Scalar>& model, const RankingObjective& obj) {
  const Index m = model.users(), n = model.items();
  RowMatrix<Scalar> gu(m, model.rank());
  RowMatrix<Scalar> gv = RowMatrix<Scalar>::Zero(n, model.rank());
  if (detail::uses_fast_path(obj)) {
    obj.ratings.require_nondegenerate();
    const auto cache = build_expectation_cache(model, obj.ratings, obj.dists);
    for (Index i = 0; i < m; ++i)
      gu.row(i) = detail::square_grad_u_from_cache(model, obj, i, cache).transpose();
    for (Index j = 0; j < n; ++j)
      gv.row(j) = detail::square_grad_v_from_cache(model, obj, j, cache).transpose();
    return {std::move(gu), std::move(gv)};
  }
  const Scalar sm = static_cast<Scalar>(m);
  for (Index i = 0; i < m; ++i) {
    const Vector<Scalar> coef = detail::user_coefficients(model, obj, i);
    gu.row(i) = (model.V.transpose() * coef).transpose() / sm;
    gv.noalias() += coef * model.U.row(i) / sm;
  }
  gu += static_cast<Scalar>(obj.lambda) / sm * model.U;
  gv += static_cast<Scalar>(obj.lambda / static_cast<double>(n)) * model.V;
  return {std::move(gu), std::move(gv)};
}

/// Sampled estimate of the gradient with respect to u_i of the domain's
/// objective, from kappa_y relevant and kappa_y irrelevant draws that are
/// shared by the loss-mass and gradient terms.
template <typename Scalar, SamplingDomain Domain>
Vector<Scalar> grad_u_sampled(const FactorModel<Scalar>& model,
                              const RankingObjective& obj, const Domain& domain,
                              Index i, Index kappa_y, Rng& rng) {
  const Index k = model.rank();
  std::vector<Index> pos(kappa_y), neg(kappa_y);
  for (auto& p : pos) p = domain.draw_relevant(i, rng);
  for (auto& q : neg) q = domain.draw_irrelevant(i, rng);
  const auto u = model.U.row(i);
  std::vector<Scalar> sneg(kappa_y);
  for (Index b = 0; b < kappa_y; ++b) sneg[b] = u.dot(model.V.row(neg[b]));

  const bool weighted = obj.weight.kind != WeightKind::identity;
  const Scalar inv = Scalar(1) / static_cast<Scalar>(kappa_y);
  Vector<Scalar> neg_coef = Vector<Scalar>::Zero(kappa_y);
  Vector<Scalar> data = Vector<Scalar>::Zero(k);
  for (Index a = 0; a < kappa_y; ++a) {
    const Scalar sp = u.dot(model.V.row(pos[a]));
    Scalar outer(1);
    if (weighted) {
      Scalar mass(0);
      for (Index b = 0; b < kappa_y; ++b)
        mass += loss_value(obj.loss, sp - sneg[b]);
      outer = weight_phi_derivative(obj.weight, mass * inv);
    }
    Scalar total(0);
    for (Index b = 0; b < kappa_y; ++b) {
      const Scalar c = outer * loss_slope(obj.loss, sp - sneg[b]);
      neg_coef[b] += c;
      total += c;
    }
    data -= total * model.V.row(pos[a]).transpose();
  }
  for (Index b = 0; b < kappa_y; ++b)
    data += neg_coef[b] * model.V.row(neg[b]).transpose();
  const Scalar m = static_cast<Scalar>(domain.user_count());
  return data * (inv * inv) / m +
         static_cast<Scalar>(obj.lambda) / m * u.transpose();
}

/// Sampled estimate of the gradient with respect to v_j from kappa_w users
/// and kappa_y item draws per user.
template <typename Scalar, SamplingDomain Domain>
Vector<Scalar> grad_v_sampled(const FactorModel<Scalar>& model,
                              const RankingObjective& obj, const Domain& domain,
                              Index j, Index kappa_w, Index kappa_y, Rng& rng) {
  const Index k = model.rank();
  const bool weighted = obj.weight.kind != WeightKind::identity;
  const Scalar inv = Scalar(1) / static_cast<Scalar>(kappa_y);
  std::vector<Scalar> spos(kappa_y), sneg(kappa_y);
  Vector<Scalar> acc = Vector<Scalar>::Zero(k);
  const auto vj = model.V.row(j);
  for (Index s = 0; s < kappa_w; ++s) {
    const Index i = domain.draw_user(rng);
    const auto u = model.U.row(i);
    const Scalar sj = u.dot(vj);
    const double gp = domain.relevant_weight(i, j);
    Scalar c(0);
    if (gp > 0.0) {
      // j relevant: j plays p against sampled irrelevant items.
      for (Index b = 0; b < kappa_y; ++b)
        sneg[b] = u.dot(model.V.row(domain.draw_irrelevant(i, rng)));
      Scalar slope(0), mass(0);
      for (Index b = 0; b < kappa_y; ++b) {
        slope += loss_slope(obj.loss, sj - sneg[b]);
        if (weighted) mass += loss_value(obj.loss, sj - sneg[b]);
      }
      const Scalar outer = weighted ? weight_phi_derivative(obj.weight, mass * inv)
                                    : Scalar(1);
      c = -static_cast<Scalar>(gp) * outer * slope * inv;
    } else {
      const double gq = domain.irrelevant_weight(i, j);
      if (gq <= 0.0) continue;
      for (Index a = 0; a < kappa_y; ++a)
        spos[a] = u.dot(model.V.row(domain.draw_relevant(i, rng)));
      if (weighted)
        for (Index b = 0; b < kappa_y; ++b)
          sneg[b] = u.dot(model.V.row(domain.draw_irrelevant(i, rng)));
      Scalar sum(0);
      for (Index a = 0; a < kappa_y; ++a) {
        Scalar outer(1);
        if (weighted) {
          Scalar mass(0);
          for (Index b = 0; b < kappa_y; ++b)
            mass += loss_value(obj.loss, spos[a] - sneg[b]);
          outer = weight_phi_derivative(obj.weight, mass * inv);
        }
        sum += outer * loss_slope(obj.loss, spos[a] - sj);
      }
      c = static_cast<Scalar>(gq) * sum * inv;
    }
    acc += c * u.transpose();
  }
  const Scalar n = static_cast<Scalar>(domain.item_count());
  return acc / static_cast<Scalar>(kappa_w) +
         static_cast<Scalar>(obj.lambda) / n * vj.transpose();
}

}  // namespace mfauc
