#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mfauc/types.hpp"

namespace mfauc {

/// Binary user x item relevance matrix stored row-wise (CSR without values).
///
/// Row i holds the sorted, duplicate-free relevant item set of user i. The
/// complement (irrelevant or missing items) is never materialised; membership
/// is answered by binary search.
class ImplicitRatings {
 public:
  ImplicitRatings() = default;

  /// Builds from per-user item lists. Lists are sorted; indices outside
  /// [0, n) raise BoundsError and repeated items raise DuplicateEntryError.
  ImplicitRatings(Index users, Index items,
                  const std::vector<std::vector<Index>>& rows);

  Index users() const noexcept { return users_; }
  Index items() const noexcept { return items_; }
  Index nnz() const noexcept { return static_cast<Index>(cols_.size()); }

  std::span<const Index> row(Index user) const {
    return {cols_.data() + offsets_[user],
            static_cast<std::size_t>(offsets_[user + 1] - offsets_[user])};
  }
  Index row_size(Index user) const {
    return offsets_[user + 1] - offsets_[user];
  }
  Index irrelevant_count(Index user) const { return items_ - row_size(user); }

  bool contains(Index user, Index item) const;

  /// Number of users for which each item is relevant.
  std::vector<Index> item_counts() const;

  /// Throws DegenerateUserError for the first user with no relevant or no
  /// irrelevant items.
  void require_nondegenerate() const;

  /// Users with at least one relevant and one irrelevant item.
  std::vector<Index> usable_users() const;

  std::vector<std::vector<Index>> to_rows() const;

  friend bool operator==(const ImplicitRatings&, const ImplicitRatings&) = default;

 private:
  Index users_ = 0;
  Index items_ = 0;
  std::vector<Index> offsets_{0};
  std::vector<Index> cols_;
};

/// Reads a MatrixMarket coordinate file (1-based indices). Entries whose value
/// exceeds `threshold` become relevant; without a threshold every listed entry
/// with a nonzero value is relevant.
ImplicitRatings load_ratings(const std::filesystem::path& path,
                             std::optional<double> threshold = std::nullopt);

/// Writes MatrixMarket coordinate real general with value 1 for each entry.
void save_ratings(const ImplicitRatings& ratings,
                  const std::filesystem::path& path);

struct HoldoutSplit {
  ImplicitRatings train;
  /// Withheld relevant items per user (empty for skipped users).
  std::vector<std::vector<Index>> test;
  /// Users with fewer than per_user + min_remaining items, left untouched.
  std::vector<Index> skipped;

  /// Test sets as a matrix with the same shape as `train`.
  ImplicitRatings test_matrix() const;
};

/// Moves `per_user` uniformly chosen relevant items of every eligible user
/// into the test set.
HoldoutSplit split_holdout(const ImplicitRatings& ratings, Index per_user,
                           Index min_remaining, std::uint64_t seed);

struct FilterResult {
  ImplicitRatings ratings;
  /// Original index of each retained user / item.
  std::vector<Index> user_map;
  std::vector<Index> item_map;
};

/// Repeatedly drops users with fewer than `min_items_per_user` items and items
/// with fewer than `min_users_per_item` users until both hold, then compacts.
FilterResult filter_sparse(const ImplicitRatings& ratings,
                           Index min_items_per_user, Index min_users_per_item);

}  // namespace mfauc
