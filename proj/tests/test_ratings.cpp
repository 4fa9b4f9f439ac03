#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "mfauc/errors.hpp"
#include "mfauc/ratings.hpp"
#include "mfauc/synthetic.hpp"
#include "test_support.hpp"

using namespace mfauc;
using namespace mfauc::testing;

namespace {

const char* kHeader = "%%MatrixMarket matrix coordinate real general\n";

}  // namespace

TEST(Ratings, LoadsCoordinateFile) {
  const auto dir = scratch_dir("load");
  write_text(dir / "a.mtx", std::string(kHeader) + "% comment\n3 4 3\n1 2 1\n2 3 1\n3 1 1\n");
  const ImplicitRatings r = load_ratings(dir / "a.mtx");
  EXPECT_EQ(r.users(), 3);
  EXPECT_EQ(r.items(), 4);
  EXPECT_EQ(r.nnz(), 3);
  EXPECT_TRUE(r.contains(0, 1));
  EXPECT_TRUE(r.contains(1, 2));
  EXPECT_TRUE(r.contains(2, 0));
  EXPECT_FALSE(r.contains(0, 0));
}

TEST(Ratings, DuplicateEntryRejected) {
  const auto dir = scratch_dir("dup");
  write_text(dir / "a.mtx", std::string(kHeader) + "3 4 2\n1 2 1\n1 2 1\n");
  EXPECT_THROW(load_ratings(dir / "a.mtx"), DuplicateEntryError);
}

TEST(Ratings, OutOfBoundsRejected) {
  const auto dir = scratch_dir("bounds");
  write_text(dir / "a.mtx", std::string(kHeader) + "3 4 1\n6 1 1\n");
  EXPECT_THROW(load_ratings(dir / "a.mtx"), BoundsError);
}

TEST(Ratings, MalformedRowReportsLine) {
  const auto dir = scratch_dir("malformed");
  write_text(dir / "a.mtx", std::string(kHeader) + "3 4 2\n1 2 1\nx y\n");
  try {
    load_ratings(dir / "a.mtx");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  write_text(dir / "b.mtx", "%%NotMatrixMarket\n1 1 0\n");
  try {
    load_ratings(dir / "b.mtx");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(Ratings, ThresholdKeepsStrictlyGreater) {
  const auto dir = scratch_dir("threshold");
  write_text(dir / "a.mtx", std::string(kHeader) + "2 3 4\n1 1 5\n1 2 3\n2 3 4\n2 1 1\n");
  const ImplicitRatings r = load_ratings(dir / "a.mtx", 3.0);
  EXPECT_EQ(r.nnz(), 2);
  EXPECT_TRUE(r.contains(0, 0));
  EXPECT_FALSE(r.contains(0, 1));
  EXPECT_TRUE(r.contains(1, 2));
}

TEST(Ratings, ConstructorValidates) {
  EXPECT_THROW(ImplicitRatings(1, 3, {{0, 3}}), BoundsError);
  EXPECT_THROW(ImplicitRatings(1, 3, {{1, 1}}), DuplicateEntryError);
  const ImplicitRatings r(1, 5, {{4, 0, 2}});
  const auto row = r.row(0);
  EXPECT_TRUE(std::is_sorted(row.begin(), row.end()));
}

TEST(Ratings, DegenerateUsersNamed) {
  const ImplicitRatings r(3, 2, {{0}, {0, 1}, {1}});
  try {
    r.require_nondegenerate();
    FAIL();
  } catch (const DegenerateUserError& e) {
    EXPECT_EQ(e.user(), 1);
  }
  EXPECT_EQ(r.usable_users(), (std::vector<Index>{0, 2}));
}

TEST(Ratings, RoundTripSynthetic) {
  const auto dir = scratch_dir("roundtrip");
  const ImplicitRatings r = gen_synthetic1(SyntheticSpec::defaults(1), 3).ratings;
  save_ratings(r, dir / "s.mtx");
  EXPECT_EQ(load_ratings(dir / "s.mtx"), r);
}

TEST(Ratings, RoundTripKeepsEmptyRow) {
  const auto dir = scratch_dir("emptyrow");
  const ImplicitRatings r(3, 4, {{1}, {}, {0, 3}});
  save_ratings(r, dir / "e.mtx");
  const ImplicitRatings back = load_ratings(dir / "e.mtx");
  EXPECT_EQ(back, r);
  EXPECT_EQ(back.row_size(1), 0);
}

TEST(Ratings, UnwritablePathRaisesIoError) {
  const ImplicitRatings r(1, 2, {{0}});
  EXPECT_THROW(save_ratings(r, "/nonexistent-dir/x/y.mtx"), IoError);
  EXPECT_THROW(load_ratings("/nonexistent-dir/x/y.mtx"), IoError);
}

TEST(Holdout, TenItemsSplitFiveFive) {
  std::vector<Index> all(10);
  for (Index j = 0; j < 10; ++j) all[j] = j;
  const ImplicitRatings r(1, 12, {all});
  const HoldoutSplit s = split_holdout(r, 5, 1, 9);
  EXPECT_EQ(s.train.row_size(0), 5);
  ASSERT_EQ(s.test[0].size(), 5u);
  for (Index j : s.test[0]) EXPECT_FALSE(s.train.contains(0, j));
  EXPECT_TRUE(s.skipped.empty());
}

TEST(Holdout, SameSeedSameSplit) {
  Rng rng(4);
  const ImplicitRatings r = random_ratings(40, 30, 0.3, rng);
  const HoldoutSplit a = split_holdout(r, 3, 1, 77);
  const HoldoutSplit b = split_holdout(r, 3, 1, 77);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.skipped, b.skipped);
}

TEST(Holdout, ShortUserSkippedAndKept) {
  const ImplicitRatings r(2, 10, {{0, 1, 2}, {0, 1, 2, 3, 4, 5, 6}});
  const HoldoutSplit s = split_holdout(r, 5, 1, 1);
  EXPECT_EQ(s.skipped, (std::vector<Index>{0}));
  EXPECT_EQ(s.train.row_size(0), 3);
  EXPECT_TRUE(s.test[0].empty());
  EXPECT_EQ(s.test[1].size(), 5u);
}

TEST(Holdout, UnionAndDisjointnessForAllUsers) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const ImplicitRatings r = random_ratings(25, 20, 0.35, rng);
    const HoldoutSplit s = split_holdout(r, 4, 2, trial);
    for (Index i = 0; i < r.users(); ++i) {
      std::set<Index> merged(s.train.row(i).begin(), s.train.row(i).end());
      for (Index j : s.test[i]) EXPECT_TRUE(merged.insert(j).second) << "overlap";
      EXPECT_EQ(merged, std::set<Index>(r.row(i).begin(), r.row(i).end()));
      const bool eligible = r.row_size(i) >= 6;
      EXPECT_EQ(s.test[i].size(), eligible ? 4u : 0u);
    }
  }
}

TEST(Holdout, TestMatrixMatchesLists) {
  Rng rng(5);
  const ImplicitRatings r = random_ratings(10, 15, 0.4, rng);
  const HoldoutSplit s = split_holdout(r, 2, 1, 5);
  const ImplicitRatings t = s.test_matrix();
  for (Index i = 0; i < r.users(); ++i)
    EXPECT_EQ(std::vector<Index>(t.row(i).begin(), t.row(i).end()), s.test[i]);
}

TEST(Filter, FixedPointUnchanged) {
  const ImplicitRatings r(3, 3, {{0, 1}, {1, 2}, {0, 2}});
  const FilterResult f = filter_sparse(r, 2, 2);
  EXPECT_EQ(f.ratings, r);
  EXPECT_EQ(f.user_map, (std::vector<Index>{0, 1, 2}));
}

TEST(Filter, EverythingRemovedIsAnError) {
  const ImplicitRatings r(1, 3, {{0}});
  EXPECT_THROW(filter_sparse(r, 2, 0), EmptyResultError);
}

namespace {

/// Largest user / item subsets whose induced matrix meets both thresholds,
/// found by enumerating every pair of subsets.
std::pair<unsigned, unsigned> brute_force_core(const ImplicitRatings& r, Index mu, Index mi) {
  const Index m = r.users(), n = r.items();
  unsigned best_u = 0, best_i = 0;
  int best = -1;
  for (unsigned us = 1; us < (1u << m); ++us)
    for (unsigned is = 1; is < (1u << n); ++is) {
      bool ok = true;
      for (Index i = 0; i < m && ok; ++i) {
        if (!(us >> i & 1)) continue;
        Index c = 0;
        for (Index j : r.row(i)) c += (is >> j) & 1;
        ok = c >= mu;
      }
      for (Index j = 0; j < n && ok; ++j) {
        if (!(is >> j & 1)) continue;
        Index c = 0;
        for (Index i = 0; i < m; ++i) c += ((us >> i) & 1) && r.contains(i, j);
        ok = c >= mi;
      }
      const int size = __builtin_popcount(us) + __builtin_popcount(is);
      if (ok && size > best) best = size, best_u = us, best_i = is;
    }
  return {best_u, best_i};
}

}  // namespace

TEST(Filter, ChainRemovalMatchesBruteForce) {
  // Dropping item 5 (one user) leaves user 4 with one item, which in turn
  // starves item 4.
  const ImplicitRatings chain(6, 6, {{0, 1, 2}, {0, 1, 2}, {0, 1, 3}, {2, 3, 0}, {4, 5}, {4}});
  const FilterResult f = filter_sparse(chain, 2, 2);
  EXPECT_EQ(f.user_map, (std::vector<Index>{0, 1, 2, 3}));
  EXPECT_EQ(f.item_map, (std::vector<Index>{0, 1, 2, 3}));

  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const ImplicitRatings r = random_ratings(6, 6, 0.45, rng);
    const auto [us, is] = brute_force_core(r, 2, 2);
    FilterResult got;
    try {
      got = filter_sparse(r, 2, 2);
    } catch (const EmptyResultError&) {
      EXPECT_EQ(us, 0u);
      continue;
    }
    unsigned gu = 0, gi = 0;
    for (Index i : got.user_map) gu |= 1u << i;
    for (Index j : got.item_map) gi |= 1u << j;
    EXPECT_EQ(gu, us);
    EXPECT_EQ(gi, is);
    for (Index i = 0; i < got.ratings.users(); ++i) EXPECT_GE(got.ratings.row_size(i), 2);
    for (Index c : got.ratings.item_counts()) EXPECT_GE(c, 2);
  }
}
