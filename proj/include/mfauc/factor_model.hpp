#pragma once

#include <cstdint>
#include <vector>

#include "mfauc/types.hpp"

namespace mfauc {

/// User factors U (m x k) and item factors V (n x k) with their running
/// averages. Scores are s(i, j) = u_i . v_j.
template <typename Scalar = double>
struct FactorModel {
  RowMatrix<Scalar> U;
  RowMatrix<Scalar> V;
  RowMatrix<Scalar> U_avg;
  RowMatrix<Scalar> V_avg;
  /// Number of averaged updates each row has received.
  std::vector<std::int64_t> user_visits;
  std::vector<std::int64_t> item_visits;
  /// Bumped on every mutation that should invalidate derived caches.
  std::uint64_t generation = 0;

  FactorModel() = default;
  FactorModel(RowMatrix<Scalar> users, RowMatrix<Scalar> items)
      : U(std::move(users)),
        V(std::move(items)),
        U_avg(U),
        V_avg(V),
        user_visits(U.rows(), 0),
        item_visits(V.rows(), 0) {}

  Index users() const noexcept { return U.rows(); }
  Index items() const noexcept { return V.rows(); }
  Index rank() const noexcept { return U.cols(); }

  Scalar score(Index i, Index j) const { return U.row(i).dot(V.row(j)); }
  Vector<Scalar> user_scores(Index i) const { return V * U.row(i).transpose(); }

  void touch() noexcept { ++generation; }

  /// A model whose raw factors are the current averages.
  FactorModel averaged() const { return FactorModel(U_avg, V_avg); }

  bool all_finite() const { return U.allFinite() && V.allFinite(); }
};

using FactorModeld = FactorModel<double>;

}  // namespace mfauc
