#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mfauc/optimizer.hpp"
#include "mfauc/ratings.hpp"

namespace mfauc {

/// Assignment of users to d1 row-blocks and items to d2 column-blocks.
struct BlockPartition {
  Index d1 = 1;
  Index d2 = 1;
  std::vector<Index> row_assignment;  ///< user -> row-block
  std::vector<Index> col_assignment;  ///< item -> col-block
  /// Members of each block, in packing order.
  std::vector<std::vector<Index>> row_members;
  std::vector<std::vector<Index>> col_members;
  /// nnz of block (a, b) at a * d2 + b.
  std::vector<std::int64_t> block_nnz;

  std::int64_t nnz(Index a, Index b) const { return block_nnz[a * d2 + b]; }
};

/// Users are shuffled, then packed largest-first into the row-block whose
/// nnz is currently smallest; items likewise into column-blocks.
BlockPartition make_partition(const ImplicitRatings& ratings, Index d1, Index d2,
                              std::uint64_t seed);

/// Rounds of (row-block, col-block) pairs; no two pairs in a round share a
/// row-block or a col-block and every pair occurs exactly once per epoch.
struct RoundSchedule {
  Index d1 = 1;
  Index d2 = 1;
  std::vector<std::vector<std::pair<Index, Index>>> rounds;
};

RoundSchedule make_schedule(Index d1, Index d2, std::uint64_t seed);

struct ParallelConfig {
  Index workers = 1;
  Index d1 = 1;
  Index d2 = 1;
  /// Track row ownership per block and count conflicting claims.
  bool verify_ownership = false;
};

/// Block-parallel averaged SGD. Each epoch draws a fresh partition and
/// schedule; block (a, b) updates a share of row-block a's users and of
/// col-block b's items, sampling only items inside col-block b and users
/// inside row-block a.
TrainReport train_parallel(const ImplicitRatings& ratings, const TrainConfig& config,
                           const ParallelConfig& parallel);

}  // namespace mfauc
