#include "mfauc/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfauc/errors.hpp"

namespace mfauc {

AliasTable::AliasTable(std::span<const double> weights)
    : prob_(weights.size()), alias_(weights.size()) {
  const std::size_t n = weights.size();
  total_ = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (n == 0 || !(total_ > 0.0)) {
    prob_.clear();
    alias_.clear();
    return;
  }
  std::vector<double> scaled(n);
  std::vector<Index> small, large;
  for (std::size_t k = 0; k < n; ++k) {
    scaled[k] = weights[k] * static_cast<double>(n) / total_;
    (scaled[k] < 1.0 ? small : large).push_back(static_cast<Index>(k));
  }
  while (!small.empty() && !large.empty()) {
    const Index s = small.back();
    small.pop_back();
    const Index l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (Index l : large) prob_[l] = 1.0, alias_[l] = l;
  for (Index s : small) prob_[s] = 1.0, alias_[s] = s;
}

Index AliasTable::draw(Rng& rng) const {
  std::uniform_int_distribution<Index> column(0, size() - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const Index k = column(rng);
  return coin(rng) < prob_[k] ? k : alias_[k];
}

ItemDistributions::ItemDistributions(const ImplicitRatings& ratings, double tau)
    : ratings_(&ratings), tau_(tau) {
  if (!(tau >= 0.0) || !std::isfinite(tau))
    throw ParameterError("tau must be finite and >= 0");
  const Index m = ratings.users(), n = ratings.items();
  const auto counts = ratings.item_counts();
  popularity_.resize(n);
  neg_mass_.resize(n);
  for (Index j = 0; j < n; ++j) {
    popularity_[j] = m > 0 ? static_cast<double>(counts[j]) / m : 0.0;
    neg_mass_[j] = std::pow(1.0 - popularity_[j], tau);
  }
  const double neg_total = std::accumulate(neg_mass_.begin(), neg_mass_.end(), 0.0);

  row_offsets_.resize(m + 1, 0);
  pos_weight_.resize(ratings.nnz());
  pos_cdf_.resize(ratings.nnz());
  neg_norm_.resize(m);
  for (Index i = 0; i < m; ++i) {
    row_offsets_[i + 1] = row_offsets_[i] + ratings.row_size(i);
    const auto r = ratings.row(i);
    const Index base = row_offsets_[i];
    double pos_total = 0.0, neg_in_row = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double w = std::pow(popularity_[r[k]], tau);
      pos_weight_[base + k] = w;
      pos_total += w;
      neg_in_row += neg_mass_[r[k]];
    }
    double running = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      pos_weight_[base + k] /= pos_total;
      running += pos_weight_[base + k];
      pos_cdf_[base + k] = running;
    }
    neg_norm_[i] = neg_total - neg_in_row;
  }
  neg_alias_ = AliasTable(neg_mass_);
}

Index ItemDistributions::offsets(Index user) const { return row_offsets_[user]; }

double ItemDistributions::relevant_weight(Index user, Index item) const {
  const auto r = ratings_->row(user);
  const auto it = std::lower_bound(r.begin(), r.end(), item);
  if (it == r.end() || *it != item) return 0.0;
  return pos_weight_[offsets(user) + (it - r.begin())];
}

double ItemDistributions::irrelevant_weight(Index user, Index item) const {
  if (ratings_->contains(user, item)) return 0.0;
  return neg_mass_[item] / neg_norm_[user];
}

Index ItemDistributions::draw_user(Rng& rng) const {
  std::uniform_int_distribution<Index> pick(0, user_count() - 1);
  return pick(rng);
}

Index ItemDistributions::draw_relevant(Index user, Rng& rng) const {
  const auto r = ratings_->row(user);
  if (r.empty()) throw DegenerateUserError(user, "no relevant items to sample");
  if (tau_ == 0.0) {
    std::uniform_int_distribution<std::size_t> pick(0, r.size() - 1);
    return r[pick(rng)];
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  const auto cdf_begin = pos_cdf_.begin() + offsets(user);
  const auto cdf_end = cdf_begin + static_cast<std::ptrdiff_t>(r.size());
  auto it = std::upper_bound(cdf_begin, cdf_end, x);
  if (it == cdf_end) --it;
  return r[it - cdf_begin];
}

Index ItemDistributions::draw_irrelevant(Index user, Rng& rng) const {
  const double mass = neg_norm_[user];
  if (ratings_->irrelevant_count(user) == 0 || !(mass > 0.0))
    throw DegenerateUserError(user, "no irrelevant items to sample");
  if (mass >= 0.25 * neg_alias_.total()) {
    for (;;) {
      const Index j = neg_alias_.draw(rng);
      if (!ratings_->contains(user, j)) return j;
    }
  }
  // Dense row: walk the complement directly.
  std::uniform_real_distribution<double> u(0.0, mass);
  const double target = u(rng);
  const auto r = ratings_->row(user);
  double acc = 0.0;
  Index last = -1;
  std::size_t k = 0;
  for (Index j = 0; j < item_count(); ++j) {
    if (k < r.size() && r[k] == j) {
      ++k;
      continue;
    }
    if (neg_mass_[j] <= 0.0) continue;
    acc += neg_mass_[j];
    last = j;
    if (acc > target) return j;
  }
  return last;
}

ItemDistributions build_distributions(const ImplicitRatings& ratings,
                                      double tau) {
  return ItemDistributions(ratings, tau);
}

std::pair<std::vector<Index>, std::vector<Index>> sample_items(
    const ItemDistributions& dists, Index user, Index count_pos,
    Index count_neg, Rng& rng) {
  std::pair<std::vector<Index>, std::vector<Index>> out;
  out.first.reserve(count_pos);
  out.second.reserve(count_neg);
  for (Index k = 0; k < count_pos; ++k)
    out.first.push_back(dists.draw_relevant(user, rng));
  for (Index k = 0; k < count_neg; ++k)
    out.second.push_back(dists.draw_irrelevant(user, rng));
  return out;
}

}  // namespace mfauc
