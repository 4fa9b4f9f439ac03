#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfauc/errors.hpp"
#include "mfauc/objective.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mfauc;
using namespace mfauc::testing;

namespace {

struct Instance {
  ImplicitRatings r;
  RowMatrix<double> U, V;
};

Instance random_instance(Rng& rng, Index max_m = 12, Index max_n = 12, Index max_k = 4) {
  std::uniform_int_distribution<Index> dm(3, max_m), dn(3, max_n), dk(1, max_k);
  const Index m = dm(rng), n = dn(rng), k = dk(rng);
  Instance in{random_ratings(m, n, 0.4, rng), {}, {}};
  in.U = gaussian(m, k, rng, 0.7);
  in.V = gaussian(n, k, rng, 0.7);
  return in;
}

struct Combo {
  LossSpec loss;
  WeightSpec weight;
};

std::vector<Combo> all_combos() {
  std::vector<Combo> out;
  for (LossKind kind : {LossKind::square_hinge, LossKind::square})
    for (WeightSpec w : {WeightSpec{}, WeightSpec{WeightKind::tanh, 0.5},
                         WeightSpec{WeightKind::tanh, 1.0}, WeightSpec{WeightKind::tanh, 2.0}})
      out.push_back({{kind, 1.0}, w});
  for (LossKind kind : {LossKind::sigmoid, LossKind::logistic})
    for (double beta : {0.5, 1.0, 2.0}) out.push_back({{kind, beta}, {}});
  return out;
}

std::string describe(const Combo& c, double tau) {
  return to_string(c.loss.kind) + " beta=" + std::to_string(c.loss.beta) + " " +
         to_string(c.weight.kind) + " rho=" + std::to_string(c.weight.rho) +
         " tau=" + std::to_string(tau);
}

}  // namespace

TEST(Objective, ZeroFactorsGiveLossAtZero) {
  const ImplicitRatings r(3, 4, {{0}, {1, 2}, {3}});
  const ItemDistributions d(r, 0.0);
  const FactorModeld zero(RowMatrix<double>::Zero(3, 2), RowMatrix<double>::Zero(4, 2));
  EXPECT_DOUBLE_EQ(objective_full(zero, {r, d, {LossKind::square_hinge}, {}, 0.0}), 0.5);
  EXPECT_DOUBLE_EQ(objective_full(zero, {r, d, {LossKind::sigmoid, 1.0}, {}, 0.0}), -0.5);
  EXPECT_DOUBLE_EQ(objective_full(zero, {r, d, {LossKind::logistic, 1.0}, {}, 0.0}),
                   std::log(2.0));
}

TEST(Objective, MatchesScalarLoopOracle) {
  Rng rng(61);
  Instance in{random_ratings(6, 5, 0.4, rng), gaussian(6, 2, rng), gaussian(5, 2, rng)};
  for (const Combo& c : all_combos())
    for (double tau : {0.0, 1.0}) {
      const ItemDistributions d(in.r, tau);
      const double got = objective_full(FactorModeld(in.U, in.V), {in.r, d, c.loss, c.weight, 0.3});
      const double want = oracle::objective(in.U, in.V, in.r, tau, c.loss, c.weight, 0.3);
      EXPECT_NEAR(got, want, 1e-12 * std::max(1.0, std::abs(want))) << describe(c, tau);
    }
}

TEST(Objective, DegenerateUserNamed) {
  const ImplicitRatings r(2, 2, {{0}, {0, 1}});
  const ItemDistributions d(r, 0.0);
  const FactorModeld model(RowMatrix<double>::Zero(2, 1), RowMatrix<double>::Zero(2, 1));
  try {
    objective_full(model, {r, d, {}, {}, 0.0});
    FAIL();
  } catch (const DegenerateUserError& e) {
    EXPECT_EQ(e.user(), 1);
  }
}

TEST(Objective, UserPermutationInvariant) {
  Rng rng(5);
  const Instance in = random_instance(rng);
  std::vector<Index> perm(in.r.users());
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  auto rows = in.r.to_rows();
  std::vector<std::vector<Index>> prow(rows.size());
  RowMatrix<double> PU(in.U.rows(), in.U.cols());
  for (std::size_t a = 0; a < perm.size(); ++a) {
    prow[a] = rows[perm[a]];
    PU.row(a) = in.U.row(perm[a]);
  }
  const ImplicitRatings pr(in.r.users(), in.r.items(), prow);
  for (const Combo& c : all_combos()) {
    const ItemDistributions d(in.r, 1.0), pd(pr, 1.0);
    const double a = objective_full(FactorModeld(in.U, in.V), {in.r, d, c.loss, c.weight, 0.1});
    const double b = objective_full(FactorModeld(PU, in.V), {pr, pd, c.loss, c.weight, 0.1});
    EXPECT_NEAR(a, b, 1e-12);
  }
}

TEST(Gradients, ZeroAtZeroFactors) {
  const ImplicitRatings r(3, 4, {{0, 1}, {2}, {1, 3}});
  const ItemDistributions d(r, 0.0);
  const FactorModeld zero(RowMatrix<double>::Zero(3, 2), RowMatrix<double>::Zero(4, 2));
  for (const Combo& c : all_combos()) {
    const RankingObjective obj{r, d, c.loss, c.weight, 0.0};
    for (Index i = 0; i < 3; ++i) EXPECT_EQ(grad_u(zero, obj, i).norm(), 0.0);
    for (Index j = 0; j < 4; ++j) EXPECT_EQ(grad_v(zero, obj, j).norm(), 0.0);
  }
}

TEST(Gradients, OnlyRegulariserSurvives) {
  Rng rng(9);
  const ImplicitRatings r = random_ratings(5, 6, 0.4, rng);
  const ItemDistributions d(r, 0.0);
  const double lambda = 0.7;
  const RowMatrix<double> U = gaussian(5, 3, rng), V = gaussian(6, 3, rng);
  const FactorModeld v_zero(U, RowMatrix<double>::Zero(6, 3));
  const FactorModeld u_zero(RowMatrix<double>::Zero(5, 3), V);
  for (const Combo& c : all_combos()) {
    const RankingObjective obj{r, d, c.loss, c.weight, lambda};
    for (Index i = 0; i < 5; ++i) {
      const Eigen::VectorXd want = lambda / 5.0 * U.row(i).transpose();
      EXPECT_LE((grad_u(v_zero, obj, i) - want).cwiseAbs().maxCoeff(), 1e-15);
    }
    for (Index j = 0; j < 6; ++j) {
      const Eigen::VectorXd want = lambda / 6.0 * V.row(j).transpose();
      EXPECT_LE((grad_v(u_zero, obj, j) - want).cwiseAbs().maxCoeff(), 1e-15);
    }
  }
}

TEST(Gradients, MatchFiniteDifferences) {
  Rng rng(123);
  for (const Combo& c : all_combos())
    for (double tau : {0.0, 1.0})
      for (int trial = 0; trial < 5; ++trial) {
        const Instance in = random_instance(rng);
        const ItemDistributions d(in.r, tau);
        const RankingObjective obj{in.r, d, c.loss, c.weight, 0.2};
        const auto [fu, fv] = oracle::finite_difference(
            in.U, in.V, [&](const RowMatrix<double>& U, const RowMatrix<double>& V) {
              return objective_full(FactorModeld(U, V), obj);
            });
        const FactorModeld model(in.U, in.V);
        const auto [gu, gv] = full_gradient(model, obj);
        for (Index i = 0; i < in.r.users(); ++i) {
          EXPECT_LT(oracle::rel_error(grad_u(model, obj, i), fu.row(i).transpose()), 1e-4)
              << describe(c, tau) << " user " << i;
          EXPECT_LT(oracle::rel_error(gu.row(i).transpose(), fu.row(i).transpose()), 1e-4);
        }
        for (Index j = 0; j < in.r.items(); ++j) {
          EXPECT_LT(oracle::rel_error(grad_v(model, obj, j), fv.row(j).transpose()), 1e-4)
              << describe(c, tau) << " item " << j;
          EXPECT_LT(oracle::rel_error(gv.row(j).transpose(), fv.row(j).transpose()), 1e-4);
        }
      }
}

TEST(ExpectationCache, FieldsMatchDefiningSums) {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Instance in = random_instance(rng);
    for (double tau : {0.0, 1.0}) {
      const ItemDistributions d(in.r, tau);
      const FactorModeld model(in.U, in.V);
      const auto cache = build_expectation_cache(model, in.r, d);
      const oracle::Weights w = oracle::weights(in.r, tau);
      for (Index i = 0; i < in.r.users(); ++i) {
        const Eigen::VectorXd u = in.U.row(i).transpose();
        Eigen::VectorXd vd = Eigen::VectorXd::Zero(in.U.cols()), vdd = vd, wd = vd, wdd = vd;
        for (Index j = 0; j < in.r.items(); ++j) {
          const Eigen::VectorXd v = in.V.row(j).transpose();
          vd += w.g[i][j] * v;
          wd += w.g[i][j] * v.dot(u) * v;
          vdd += w.gq[i][j] * v;
          wdd += w.gq[i][j] * v.dot(u) * v;
        }
        EXPECT_LT((cache.v_dot.row(i).transpose() - vd).norm(), 1e-12);
        EXPECT_LT((cache.v_ddot.row(i).transpose() - vdd).norm(), 1e-12);
        EXPECT_LT((cache.w_dot.row(i).transpose() - wd).norm(), 1e-12);
        EXPECT_LT((cache.w_ddot.row(i).transpose() - wdd).norm(), 1e-12);
      }
    }
  }
}

TEST(ExpectationCache, SimpleCases) {
  const ImplicitRatings r(1, 4, {{1, 3}});
  const ItemDistributions d(r, 0.0);
  Rng rng(2);
  FactorModeld model(gaussian(1, 3, rng), gaussian(4, 3, rng));
  auto cache = build_expectation_cache(model, r, d);
  const Eigen::VectorXd mean = (model.V.row(1) + model.V.row(3)).transpose() / 2.0;
  EXPECT_LT((cache.v_dot.row(0).transpose() - mean).norm(), 1e-15);

  model = FactorModeld(model.U, RowMatrix<double>::Zero(4, 3));
  cache = build_expectation_cache(model, r, d);
  EXPECT_EQ(cache.v_dot.norm() + cache.v_ddot.norm() + cache.w_dot.norm() + cache.w_ddot.norm(),
            0.0);
}

TEST(ExpectationCache, StaleCacheRejected) {
  const ImplicitRatings r(2, 3, {{0}, {1}});
  const ItemDistributions d(r, 0.0);
  Rng rng(3);
  FactorModeld model(gaussian(2, 2, rng), gaussian(3, 2, rng));
  const auto cache = build_expectation_cache(model, r, d);
  const RankingObjective obj{r, d, {LossKind::square}, {}, 0.0};
  EXPECT_NO_THROW(grad_u(model, obj, 0, cache));
  model.touch();
  EXPECT_THROW(grad_u(model, obj, 0, cache), RuntimeError);
}

TEST(ExpectationCache, FastPathEqualsNaive) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance in = random_instance(rng);
    const ItemDistributions d(in.r, trial % 2 ? 1.0 : 0.0);
    const RankingObjective obj{in.r, d, {LossKind::square}, {}, 0.25};
    const FactorModeld model(in.U, in.V);
    const auto cache = build_expectation_cache(model, in.r, d);
    for (Index i = 0; i < in.r.users(); ++i)
      EXPECT_LT((grad_u(model, obj, i, cache) - grad_u_naive(model, obj, i)).cwiseAbs().maxCoeff(),
                1e-10);
    for (Index j = 0; j < in.r.items(); ++j)
      EXPECT_LT((grad_v(model, obj, j, cache) - grad_v_naive(model, obj, j)).cwiseAbs().maxCoeff(),
                1e-10);
  }
}

TEST(SampledObjective, ConstantIntegrandIsExact) {
  Rng rng(4);
  const ImplicitRatings r = random_ratings(8, 7, 0.4, rng);
  const ItemDistributions d(r, 0.0);
  const RowMatrix<double> V = gaussian(7, 2, rng);
  const FactorModeld model(RowMatrix<double>::Zero(8, 2), V);
  const RankingObjective obj{r, d, {LossKind::square_hinge}, {}, 0.4};
  const double reg = 0.4 / 2 * V.squaredNorm() / 7.0;
  for (int s = 0; s < 5; ++s) {
    Rng srng(s);
    EXPECT_NEAR(objective_sampled(model, obj, d, 3, 4, srng), 0.5 + reg, 1e-15);
  }
}

TEST(SampledObjective, ReproducibleAndUnbiased) {
  Rng rng(12);
  const Instance in = random_instance(rng, 10, 10, 3);
  const ItemDistributions d(in.r, 0.0);
  const FactorModeld model(in.U, in.V);
  const RankingObjective obj{in.r, d, {LossKind::square_hinge}, {}, 0.1};
  Rng a(8), b(8);
  EXPECT_EQ(objective_sampled(model, obj, d, in.r.users(), 5, a),
            objective_sampled(model, obj, d, in.r.users(), 5, b));

  const int seeds = 200;
  std::vector<double> vals;
  for (int s = 0; s < seeds; ++s) {
    Rng srng(1000 + s);
    vals.push_back(objective_sampled(model, obj, d, in.r.users(), in.r.items(), srng));
  }
  const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / seeds;
  double var = 0;
  for (double v : vals) var += (v - mean) * (v - mean);
  const double se = std::sqrt(var / (seeds - 1) / seeds);
  EXPECT_LT(std::abs(mean - objective_full(model, obj)), 2 * se);
}

TEST(SampledGradients, UnbiasedOverSeeds) {
  Rng rng(44);
  const Instance in = random_instance(rng, 8, 8, 3);
  for (const Combo& c : {Combo{{LossKind::square_hinge}, {}}, Combo{{LossKind::logistic, 1.0}, {}},
                         Combo{{LossKind::square}, {}}}) {
    const ItemDistributions d(in.r, 1.0);
    const FactorModeld model(in.U, in.V);
    const RankingObjective obj{in.r, d, c.loss, c.weight, 0.1};
    const int seeds = 500;
    const Index k = model.rank();
    const auto check = [&](const Eigen::VectorXd& exact, auto&& draw) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(k), sq = sum;
      for (int s = 0; s < seeds; ++s) {
        Rng srng(derive_seed(s, 5));
        const Eigen::VectorXd x = draw(srng);
        sum += x;
        sq += x.cwiseProduct(x);
      }
      const Eigen::VectorXd mean = sum / seeds;
      for (Index a = 0; a < k; ++a) {
        const double var = std::max(0.0, sq[a] / seeds - mean[a] * mean[a]);
        EXPECT_LE(std::abs(mean[a] - exact[a]), 3 * std::sqrt(var / seeds) + 1e-12)
            << to_string(c.loss.kind) << " component " << a;
      }
    };
    check(grad_v(model, obj, 2),
          [&](Rng& r) { return grad_v_sampled(model, obj, d, Index{2}, Index{3}, Index{2}, r); });
    check(grad_u(model, obj, 1),
          [&](Rng& r) { return grad_u_sampled(model, obj, d, Index{1}, Index{3}, r); });
  }
}
