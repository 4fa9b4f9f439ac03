#pragma once

#include <span>
#include <utility>
#include <vector>

#include "mfauc/ratings.hpp"
#include "mfauc/types.hpp"

namespace mfauc {

/// Walker/Vose alias table: O(1) draws from a fixed discrete distribution.
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(std::span<const double> weights);

  Index draw(Rng& rng) const;
  double total() const noexcept { return total_; }
  Index size() const noexcept { return static_cast<Index>(prob_.size()); }
  bool empty() const noexcept { return prob_.empty(); }

 private:
  std::vector<double> prob_;
  std::vector<Index> alias_;
  double total_ = 0.0;
};

/// Per-user item distributions g (over relevant items) and g' (over
/// irrelevant items), both proportional to a power of item popularity:
///   g(y)  ~ p(y)^tau,   g'(y) ~ (1 - p(y))^tau,
/// where p(y) is the fraction of users for whom y is relevant.
///
/// g' is kept as global item masses plus a per-user normaliser. The ratings
/// object must outlive the distributions.
class ItemDistributions {
 public:
  ItemDistributions(const ImplicitRatings& ratings, double tau);

  const ImplicitRatings& ratings() const noexcept { return *ratings_; }
  double tau() const noexcept { return tau_; }
  Index user_count() const noexcept { return ratings_->users(); }
  Index item_count() const noexcept { return ratings_->items(); }

  const std::vector<double>& popularity() const noexcept { return popularity_; }
  /// q(y)^tau for every item, before per-user normalisation.
  const std::vector<double>& irrelevant_mass() const noexcept { return neg_mass_; }

  /// g over the user's row, aligned with ratings().row(user).
  std::span<const double> relevant_weights(Index user) const {
    return {pos_weight_.data() + offsets(user),
            static_cast<std::size_t>(ratings_->row_size(user))};
  }
  double irrelevant_normaliser(Index user) const { return neg_norm_[user]; }

  /// g_user(item), zero when the item is not relevant.
  double relevant_weight(Index user, Index item) const;
  /// g'_user(item), zero when the item is relevant.
  double irrelevant_weight(Index user, Index item) const;
  bool is_relevant(Index user, Index item) const {
    return ratings_->contains(user, item);
  }

  Index draw_user(Rng& rng) const;
  Index draw_relevant(Index user, Rng& rng) const;
  Index draw_irrelevant(Index user, Rng& rng) const;

 private:
  Index offsets(Index user) const;

  const ImplicitRatings* ratings_;
  double tau_;
  std::vector<double> popularity_;
  std::vector<double> neg_mass_;
  std::vector<double> pos_weight_;
  std::vector<double> pos_cdf_;
  std::vector<Index> row_offsets_;
  std::vector<double> neg_norm_;
  AliasTable neg_alias_;
};

ItemDistributions build_distributions(const ImplicitRatings& ratings,
                                      double tau);

/// Draws, with replacement, `count_pos` items from g and `count_neg` from g'.
std::pair<std::vector<Index>, std::vector<Index>> sample_items(
    const ItemDistributions& dists, Index user, Index count_pos,
    Index count_neg, Rng& rng);

}  // namespace mfauc
