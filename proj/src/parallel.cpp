#include "mfauc/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "mfauc/distributions.hpp"
#include "sgd_engine.hpp"

namespace mfauc {

namespace {

/// Largest-first greedy packing of weighted elements into `groups` bins.
std::vector<Index> pack(const std::vector<Index>& weight, Index groups, Rng& rng,
                        std::vector<std::vector<Index>>& members) {
  std::vector<Index> order(weight.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return weight[x] > weight[y]; });
  std::vector<std::int64_t> load(groups, 0);
  std::vector<Index> assignment(weight.size());
  members.assign(groups, {});
  for (Index e : order) {
    const Index g = std::min_element(load.begin(), load.end()) - load.begin();
    assignment[e] = g;
    load[g] += weight[e];
    members[g].push_back(e);
  }
  return assignment;
}

}  // namespace

BlockPartition make_partition(const ImplicitRatings& ratings, Index d1, Index d2,
                              std::uint64_t seed) {
  const Index m = ratings.users(), n = ratings.items();
  if (d1 < 1 || d1 > std::max<Index>(m, 1))
    throw ParameterError("d1 must satisfy 1 <= d1 <= m");
  if (d2 < 1 || d2 > std::max<Index>(n, 1))
    throw ParameterError("d2 must satisfy 1 <= d2 <= n");
  Rng rng(seed);
  BlockPartition P;
  P.d1 = d1;
  P.d2 = d2;
  std::vector<Index> row_nnz(m);
  for (Index i = 0; i < m; ++i) row_nnz[i] = ratings.row_size(i);
  P.row_assignment = pack(row_nnz, d1, rng, P.row_members);
  P.col_assignment = pack(ratings.item_counts(), d2, rng, P.col_members);
  P.block_nnz.assign(d1 * d2, 0);
  for (Index i = 0; i < m; ++i)
    for (Index j : ratings.row(i))
      ++P.block_nnz[P.row_assignment[i] * d2 + P.col_assignment[j]];
  return P;
}

RoundSchedule make_schedule(Index d1, Index d2, std::uint64_t seed) {
  if (d1 < 1 || d2 < 1) throw ParameterError("block grid dimensions must be >= 1");
  Rng rng(seed);
  const Index D = std::max(d1, d2);
  std::vector<Index> pa(d1), pb(d2), order(D);
  std::iota(pa.begin(), pa.end(), Index{0});
  std::iota(pb.begin(), pb.end(), Index{0});
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(pa.begin(), pa.end(), rng);
  std::shuffle(pb.begin(), pb.end(), rng);
  std::shuffle(order.begin(), order.end(), rng);
  RoundSchedule S;
  S.d1 = d1;
  S.d2 = d2;
  for (Index r : order) {
    std::vector<std::pair<Index, Index>> round;
    for (Index a = 0; a < D; ++a) {
      const Index b = (a + r) % D;
      if (a < d1 && b < d2) round.emplace_back(pa[a], pb[b]);
    }
    S.rounds.push_back(std::move(round));
  }
  return S;
}

namespace {

/// Per-epoch sampling structures for every (user, col-block) pair.
struct EpochLayout {
  const ImplicitRatings* ratings = nullptr;
  const ItemDistributions* dists = nullptr;
  BlockPartition part;
  Index d2 = 1;
  std::vector<std::vector<Index>> block_items;  // sorted ascending
  std::vector<Index> item_local;                // item -> position in its block
  std::vector<std::vector<double>> block_mass;
  std::vector<AliasTable> block_alias;
  std::vector<Index> rel_offsets;  // (i * d2 + b) -> start, size m * d2 + 1
  std::vector<Index> rel_items;
  std::vector<double> rel_weight;
  std::vector<double> rel_cdf;
  std::vector<double> neg_norm;                     // i * d2 + b
  std::vector<std::vector<std::vector<Index>>> usable;  // [a][b] sorted users

  std::span<const Index> rel(Index i, Index b) const {
    const Index s = rel_offsets[i * d2 + b];
    return {rel_items.data() + s,
            static_cast<std::size_t>(rel_offsets[i * d2 + b + 1] - s)};
  }
};

EpochLayout build_layout(const ImplicitRatings& ratings, const ItemDistributions& dists,
                         BlockPartition part) {
  EpochLayout L;
  L.ratings = &ratings;
  L.dists = &dists;
  const Index m = ratings.users(), n = ratings.items();
  const Index d1 = part.d1, d2 = part.d2;
  L.d2 = d2;
  const double tau = dists.tau();
  const auto& mass = dists.irrelevant_mass();
  const auto& pop = dists.popularity();

  L.block_items.assign(d2, {});
  for (Index j = 0; j < n; ++j) L.block_items[part.col_assignment[j]].push_back(j);
  L.item_local.assign(n, 0);
  L.block_mass.assign(d2, {});
  L.block_alias.resize(d2);
  std::vector<double> block_total(d2);
  for (Index b = 0; b < d2; ++b) {
    const auto& items = L.block_items[b];
    auto& w = L.block_mass[b];
    w.resize(items.size());
    for (std::size_t t = 0; t < items.size(); ++t) {
      L.item_local[items[t]] = static_cast<Index>(t);
      w[t] = mass[items[t]];
    }
    L.block_alias[b] = AliasTable(w);
    block_total[b] = std::accumulate(w.begin(), w.end(), 0.0);
  }

  L.rel_offsets.assign(m * d2 + 1, 0);
  L.rel_items.resize(ratings.nnz());
  L.rel_weight.resize(ratings.nnz());
  L.rel_cdf.resize(ratings.nnz());
  L.neg_norm.assign(m * d2, 0.0);
  std::vector<Index> count(d2);
  for (Index i = 0; i < m; ++i) {
    const auto row = ratings.row(i);
    std::fill(count.begin(), count.end(), 0);
    for (Index j : row) ++count[part.col_assignment[j]];
    const Index base = L.rel_offsets[i * d2];
    for (Index b = 0; b < d2; ++b)
      L.rel_offsets[i * d2 + b + 1] = L.rel_offsets[i * d2 + b] + count[b];
    std::vector<Index> fill(d2);
    for (Index b = 0; b < d2; ++b) fill[b] = L.rel_offsets[i * d2 + b];
    for (Index j : row) L.rel_items[fill[part.col_assignment[j]]++] = j;
    (void)base;
    for (Index b = 0; b < d2; ++b) {
      const Index s = L.rel_offsets[i * d2 + b], e = L.rel_offsets[i * d2 + b + 1];
      double pos_total = 0.0, neg_in = 0.0;
      for (Index t = s; t < e; ++t) {
        const double w = std::pow(pop[L.rel_items[t]], tau);
        L.rel_weight[t] = w;
        pos_total += w;
        neg_in += mass[L.rel_items[t]];
      }
      double running = 0.0;
      for (Index t = s; t < e; ++t) {
        L.rel_weight[t] /= pos_total;
        running += L.rel_weight[t];
        L.rel_cdf[t] = running;
      }
      L.neg_norm[i * d2 + b] = block_total[b] - neg_in;
    }
  }

  L.usable.assign(d1, std::vector<std::vector<Index>>(d2));
  for (Index a = 0; a < d1; ++a) {
    std::vector<Index> users = part.row_members[a];
    std::sort(users.begin(), users.end());
    for (Index b = 0; b < d2; ++b) {
      const Index block_size = static_cast<Index>(L.block_items[b].size());
      for (Index i : users) {
        const Index r = static_cast<Index>(L.rel(i, b).size());
        if (r > 0 && r < block_size && L.neg_norm[i * d2 + b] > 0.0)
          L.usable[a][b].push_back(i);
      }
    }
  }
  L.part = std::move(part);
  return L;
}

/// Sampling domain of block (a, b): users of row-block a with relevant and
/// irrelevant items inside col-block b, items of col-block b.
class BlockDomain {
 public:
  BlockDomain(const EpochLayout& layout, Index a, Index b)
      : L_(&layout), a_(a), b_(b), users_(&layout.usable[a][b]) {}

  Index user_count() const { return static_cast<Index>(users_->size()); }
  Index item_count() const { return static_cast<Index>(L_->block_items[b_].size()); }
  const std::vector<Index>& users() const { return *users_; }

  Index draw_user(Rng& rng) const {
    std::uniform_int_distribution<Index> pick(0, user_count() - 1);
    return (*users_)[pick(rng)];
  }

  Index draw_relevant(Index i, Rng& rng) const {
    const auto r = L_->rel(i, b_);
    if (r.empty()) throw DegenerateUserError(i, "no relevant items in block");
    if (L_->dists->tau() == 0.0) {
      std::uniform_int_distribution<std::size_t> pick(0, r.size() - 1);
      return r[pick(rng)];
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double x = u(rng);
    const auto cdf_begin = L_->rel_cdf.begin() + L_->rel_offsets[i * L_->d2 + b_];
    const auto cdf_end = cdf_begin + static_cast<std::ptrdiff_t>(r.size());
    auto it = std::upper_bound(cdf_begin, cdf_end, x);
    if (it == cdf_end) --it;
    return r[it - cdf_begin];
  }

  Index draw_irrelevant(Index i, Rng& rng) const {
    const double mass = L_->neg_norm[i * L_->d2 + b_];
    const auto& alias = L_->block_alias[b_];
    const auto& items = L_->block_items[b_];
    if (!(mass > 0.0)) throw DegenerateUserError(i, "no irrelevant items in block");
    if (mass >= 0.25 * alias.total()) {
      for (;;) {
        const Index j = items[alias.draw(rng)];
        if (!L_->ratings->contains(i, j)) return j;
      }
    }
    std::uniform_real_distribution<double> u(0.0, mass);
    const double target = u(rng);
    const auto r = L_->rel(i, b_);
    const auto& w = L_->block_mass[b_];
    double acc = 0.0;
    Index last = -1;
    std::size_t k = 0;
    for (std::size_t t = 0; t < items.size(); ++t) {
      const Index j = items[t];
      if (k < r.size() && r[k] == j) {
        ++k;
        continue;
      }
      if (w[t] <= 0.0) continue;
      acc += w[t];
      last = j;
      if (acc > target) return j;
    }
    return last;
  }

  double relevant_weight(Index i, Index j) const {
    if (L_->part.col_assignment[j] != b_) return 0.0;
    const auto r = L_->rel(i, b_);
    const auto it = std::lower_bound(r.begin(), r.end(), j);
    if (it == r.end() || *it != j) return 0.0;
    return L_->rel_weight[L_->rel_offsets[i * L_->d2 + b_] + (it - r.begin())];
  }

  double irrelevant_weight(Index i, Index j) const {
    if (L_->part.col_assignment[j] != b_ || L_->ratings->contains(i, j)) return 0.0;
    return L_->block_mass[b_][L_->item_local[j]] / L_->neg_norm[i * L_->d2 + b_];
  }

 private:
  const EpochLayout* L_;
  Index a_, b_;
  const std::vector<Index>* users_;
};

static_assert(SamplingDomain<BlockDomain>);

/// Runs jobs(0..count-1) on up to `workers` threads and rethrows the first
/// failure after all have finished.
template <typename Job>
void run_round(Index count, Index workers, Job&& job) {
  if (workers <= 1 || count <= 1) {
    for (Index t = 0; t < count; ++t) job(t);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto loop = [&] {
    for (;;) {
      const Index t = next.fetch_add(1);
      if (t >= count) return;
      try {
        job(t);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const Index threads = std::min(workers, count);
    for (Index w = 0; w < threads; ++w) pool.emplace_back(loop);
  }
  if (failure) std::rethrow_exception(failure);
}

/// Claims every row of a block; a claim that finds another owner is a
/// conflict.
class OwnershipLedger {
 public:
  OwnershipLedger(Index users, Index items) : users_(users), items_(items) {
    for (auto& o : users_) o.store(-1);
    for (auto& o : items_) o.store(-1);
  }
  void claim(const std::vector<Index>& users, const std::vector<Index>& items, int id) {
    for (Index i : users) take(users_[i], id);
    for (Index j : items) take(items_[j], id);
  }
  void release(const std::vector<Index>& users, const std::vector<Index>& items) {
    for (Index i : users) users_[i].store(-1);
    for (Index j : items) items_[j].store(-1);
  }
  std::int64_t conflicts() const { return conflicts_.load(); }

 private:
  void take(std::atomic<int>& slot, int id) {
    int expected = -1;
    if (!slot.compare_exchange_strong(expected, id)) conflicts_.fetch_add(1);
  }
  std::vector<std::atomic<int>> users_;
  std::vector<std::atomic<int>> items_;
  std::atomic<std::int64_t> conflicts_{0};
};

}  // namespace

TrainReport train_parallel(const ImplicitRatings& ratings, const TrainConfig& config,
                           const ParallelConfig& parallel) {
  if (parallel.workers < 1) throw ParameterError("workers must be >= 1");
  if (config.mode != TrainMode::sgd)
    throw ParameterError("the parallel trainer supports sgd mode only");
  const Index d1 = parallel.d1, d2 = parallel.d2;
  if (d1 < 1 || d1 > ratings.users() || d2 < 1 || d2 > ratings.items())
    throw ParameterError("block grid must satisfy 1 <= d1 <= m and 1 <= d2 <= n");

  std::atomic<std::int64_t> skipped{0};
  OwnershipLedger ledger(parallel.verify_ownership ? ratings.users() : 0,
                         parallel.verify_ownership ? ratings.items() : 0);

  TrainReport report = detail::drive_training(
      ratings, config,
      [&](FactorModeld& model, const RankingObjective& obj, Index s, bool averaging) {
        const EpochLayout layout = build_layout(
            ratings, obj.dists,
            make_partition(ratings, d1, d2, derive_seed(config.seed ^ 0xB10C5EEDull, s)));
        const RoundSchedule schedule =
            make_schedule(d1, d2, derive_seed(config.seed ^ 0x5C4EDull, s));
        const BlockPartition& P = layout.part;
        // Each user is updated in one col-block per epoch, drawn in proportion
        // to its relevant items there among the blocks where it is usable.
        std::vector<Index> user_block(ratings.users(), -1);
        {
          Rng pick(derive_seed(config.seed ^ 0xA551611ull, s));
          std::vector<double> w(d2);
          for (Index i = 0; i < ratings.users(); ++i) {
            const Index a = P.row_assignment[i];
            double total = 0.0;
            for (Index b = 0; b < d2; ++b) {
              const auto& ok = layout.usable[a][b];
              w[b] = std::binary_search(ok.begin(), ok.end(), i)
                         ? static_cast<double>(layout.rel(i, b).size())
                         : 0.0;
              total += w[b];
            }
            if (total <= 0.0) continue;
            std::uniform_real_distribution<double> u(0.0, total);
            const double x = u(pick);
            double acc = 0.0;
            for (Index b = 0; b < d2; ++b) {
              if (w[b] <= 0.0) continue;
              user_block[i] = b;
              acc += w[b];
              if (acc > x) break;
            }
          }
        }
        for (const auto& round : schedule.rounds) {
          run_round(static_cast<Index>(round.size()), parallel.workers, [&](Index t) {
            const auto [a, b] = round[t];
            const BlockDomain domain(layout, a, b);
            const int id = static_cast<int>(a * d2 + b);
            if (parallel.verify_ownership) ledger.claim(P.row_members[a], P.col_members[b], id);
            std::vector<Index> users, items;
            std::int64_t lost = 0;
            const auto& rows = P.row_members[a];
            for (std::size_t p = 0; p < rows.size(); ++p) {
              const Index i = rows[p];
              if (user_block[i] == b) users.push_back(i);
              // Unusable everywhere: charged to the block it would have had.
              else if (user_block[i] < 0 && static_cast<Index>(p % d2) == b) ++lost;
            }
            const auto& cols = P.col_members[b];
            for (std::size_t p = 0; p < cols.size(); ++p)
              if (static_cast<Index>(p % d1) == a) items.push_back(cols[p]);
            std::sort(users.begin(), users.end());
            std::sort(items.begin(), items.end());
            if (domain.user_count() == 0) items.clear();
            if (lost) skipped.fetch_add(lost);
            Rng rng(detail::block_stream_seed(config.seed, s, id));
            detail::run_block_steps(model, obj, domain, std::move(users),
                                    std::move(items), config, averaging, rng);
            if (parallel.verify_ownership) ledger.release(P.row_members[a], P.col_members[b]);
          });
        }
      });
  report.skipped_block_users = skipped.load();
  report.ownership_conflicts = ledger.conflicts();
  return report;
}

}  // namespace mfauc
