#include "mfauc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfauc/errors.hpp"

namespace mfauc {

ScoreMatrix score_matrix(const FactorModeld& model) {
  return model.U * model.V.transpose();
}

namespace {

std::span<const double> row_of(const ScoreMatrix& s, Index i) {
  return {s.data() + i * s.cols(), static_cast<std::size_t>(s.cols())};
}

void check_shape(const ScoreMatrix& scores, const ImplicitRatings& r) {
  if (scores.rows() != r.users() || scores.cols() != r.items())
    throw ParameterError("score matrix shape does not match ratings");
}

/// Items of `candidates` (all n when empty) split into relevant / other.
void split_candidates(Index n, std::span<const Index> relevant,
                      std::span<const Index> candidates, std::vector<Index>& pos,
                      std::vector<Index>& neg) {
  std::vector<char> is_pos(n, 0);
  for (Index p : relevant) is_pos[p] = 1;
  pos.clear();
  neg.clear();
  if (candidates.empty()) {
    for (Index j = 0; j < n; ++j) (is_pos[j] ? pos : neg).push_back(j);
  } else {
    for (Index j : candidates) (is_pos[j] ? pos : neg).push_back(j);
  }
}

/// Twice the number of correctly ordered (pos, neg) pairs, ties counting one.
std::int64_t doubled_pair_count(std::span<const double> scores,
                                const std::vector<Index>& pos,
                                const std::vector<Index>& neg) {
  std::vector<double> ns(neg.size());
  for (std::size_t b = 0; b < neg.size(); ++b) ns[b] = scores[neg[b]];
  std::sort(ns.begin(), ns.end());
  std::int64_t total = 0;
  for (Index p : pos) {
    const double s = scores[p];
    const auto lo = std::lower_bound(ns.begin(), ns.end(), s);
    const auto hi = std::upper_bound(lo, ns.end(), s);
    total += 2 * (lo - ns.begin()) + (hi - lo);
  }
  return total;
}

}  // namespace

double user_auc(std::span<const double> scores, std::span<const Index> relevant,
                std::span<const Index> candidates) {
  std::vector<Index> pos, neg;
  split_candidates(static_cast<Index>(scores.size()), relevant, candidates, pos, neg);
  if (pos.empty() || neg.empty())
    throw UndefinedMetricError("AUC needs at least one relevant and one irrelevant item");
  const double pairs = 2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size());
  return static_cast<double>(doubled_pair_count(scores, pos, neg)) / pairs;
}

AucResult empirical_auc(const ScoreMatrix& scores, const ImplicitRatings& relevant,
                        const ItemDistributions* dists) {
  check_shape(scores, relevant);
  AucResult out;
  double total = 0.0;
  Index counted = 0;
  const Index n = relevant.items();
  for (Index i = 0; i < relevant.users(); ++i) {
    const auto row = relevant.row(i);
    if (row.empty() || static_cast<Index>(row.size()) == n) {
      out.excluded.push_back(i);
      continue;
    }
    const auto s = row_of(scores, i);
    if (!dists) {
      total += user_auc(s, row);
    } else {
      // Weighted sweep: each relevant item collects the g' mass strictly
      // below its score plus half the tied mass.
      std::vector<std::pair<double, double>> neg;
      neg.reserve(n - row.size());
      std::size_t k = 0;
      for (Index j = 0; j < n; ++j) {
        if (k < row.size() && row[k] == j) {
          ++k;
          continue;
        }
        neg.emplace_back(s[j], dists->irrelevant_weight(i, j));
      }
      std::sort(neg.begin(), neg.end());
      std::vector<double> prefix(neg.size() + 1, 0.0);
      for (std::size_t b = 0; b < neg.size(); ++b) prefix[b + 1] = prefix[b] + neg[b].second;
      const auto g = dists->relevant_weights(i);
      double user = 0.0;
      for (std::size_t a = 0; a < row.size(); ++a) {
        const double sp = s[row[a]];
        const auto lo = std::lower_bound(neg.begin(), neg.end(), sp,
                                         [](const auto& e, double v) { return e.first < v; });
        const auto hi = std::upper_bound(lo, neg.end(), sp,
                                         [](double v, const auto& e) { return v < e.first; });
        const double below = prefix[lo - neg.begin()];
        const double tied = prefix[hi - neg.begin()] - below;
        user += g[a] * (below + 0.5 * tied);
      }
      total += user;
    }
    ++counted;
  }
  if (counted == 0) throw UndefinedMetricError("no user with both relevant and irrelevant items");
  out.value = total / static_cast<double>(counted);
  return out;
}

double local_auc(const ScoreMatrix& scores, const ImplicitRatings& relevant, double t) {
  if (!(t > 0.0 && t <= 1.0)) throw ParameterError("t must lie in (0, 1]");
  check_shape(scores, relevant);
  const Index n = relevant.items();
  const Index top = std::max<Index>(1, static_cast<Index>(std::ceil(t * static_cast<double>(n) - 1e-12)));
  double total = 0.0;
  Index counted = 0;
  std::vector<Index> pos, neg, qualifying;
  std::vector<double> sorted(n);
  for (Index i = 0; i < relevant.users(); ++i) {
    const auto row = relevant.row(i);
    if (row.empty() || static_cast<Index>(row.size()) == n) continue;
    const auto s = row_of(scores, i);
    std::copy(s.begin(), s.end(), sorted.begin());
    std::nth_element(sorted.begin(), sorted.begin() + (top - 1), sorted.end(),
                     std::greater<double>());
    const double cut = sorted[top - 1];
    split_candidates(n, row, {}, pos, neg);
    qualifying.clear();
    for (Index p : pos)
      if (s[p] >= cut) qualifying.push_back(p);
    if (qualifying.empty()) continue;
    const double pairs =
        2.0 * static_cast<double>(qualifying.size()) * static_cast<double>(neg.size());
    total += static_cast<double>(doubled_pair_count(s, qualifying, neg)) / pairs;
    ++counted;
  }
  if (counted == 0) throw UndefinedMetricError("no qualifying pairs for local AUC");
  return total / static_cast<double>(counted);
}

RocCurve roc_curve(std::span<const double> scores, std::span<const Index> relevant,
                   std::span<const Index> candidates, std::optional<double> max_fpr) {
  std::vector<Index> pos, neg;
  split_candidates(static_cast<Index>(scores.size()), relevant, candidates, pos, neg);
  if (pos.empty() || neg.empty())
    throw UndefinedMetricError("ROC needs at least one relevant and one irrelevant item");
  std::vector<std::pair<double, char>> items;
  items.reserve(pos.size() + neg.size());
  for (Index p : pos) items.emplace_back(scores[p], 1);
  for (Index q : neg) items.emplace_back(scores[q], 0);
  std::sort(items.begin(), items.end(),
            [](const auto& x, const auto& y) { return x.first > y.first; });
  const double P = static_cast<double>(pos.size()), N = static_cast<double>(neg.size());
  RocCurve curve{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t a = 0; a < items.size();) {
    std::size_t b = a;
    while (b < items.size() && items[b].first == items[a].first) {
      (items[b].second ? tp : fp) += 1;
      ++b;
    }
    curve.emplace_back(static_cast<double>(fp) / N, static_cast<double>(tp) / P);
    a = b;
  }
  if (!max_fpr) return curve;
  RocCurve cut{curve.front()};
  for (std::size_t a = 1; a < curve.size(); ++a) {
    const auto [x0, y0] = curve[a - 1];
    const auto [x1, y1] = curve[a];
    if (x1 <= *max_fpr) {
      cut.push_back(curve[a]);
      continue;
    }
    if (x0 < *max_fpr) {
      const double w = (*max_fpr - x0) / (x1 - x0);
      cut.emplace_back(*max_fpr, y0 + w * (y1 - y0));
    }
    break;
  }
  return cut;
}

double curve_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t a = 1; a < curve.size(); ++a)
    area += (curve[a].first - curve[a - 1].first) *
            (curve[a].second + curve[a - 1].second) / 2.0;
  return area;
}

double tpr_at(const RocCurve& curve, double fpr) {
  double y = curve.empty() ? 0.0 : curve.front().second;
  for (std::size_t a = 1; a < curve.size(); ++a) {
    const auto [x0, y0] = curve[a - 1];
    const auto [x1, y1] = curve[a];
    if (x1 <= fpr) {
      y = y1;
      continue;
    }
    if (x0 <= fpr) y = y0 + (fpr - x0) / (x1 - x0) * (y1 - y0);
    break;
  }
  return y;
}

namespace {

std::vector<Index> non_training(const ImplicitRatings& train, Index i) {
  std::vector<Index> out;
  const auto row = train.row(i);
  out.reserve(train.items() - row.size());
  std::size_t k = 0;
  for (Index j = 0; j < train.items(); ++j) {
    if (k < row.size() && row[k] == j) {
      ++k;
      continue;
    }
    out.push_back(j);
  }
  return out;
}

void check_heldout(const ScoreMatrix& scores, const ImplicitRatings& train,
                   const std::vector<std::vector<Index>>& heldout) {
  check_shape(scores, train);
  if (static_cast<Index>(heldout.size()) != train.users())
    throw ParameterError("held-out sets must have one entry per user");
}

}  // namespace

PrecisionRecall precision_recall_at(const ScoreMatrix& scores, const ImplicitRatings& train,
                                    const std::vector<std::vector<Index>>& heldout,
                                    const std::vector<Index>& cutoffs) {
  check_heldout(scores, train, heldout);
  if (cutoffs.empty()) throw ParameterError("at least one cutoff is required");
  for (Index c : cutoffs)
    if (c < 1) throw ParameterError("cutoffs must be positive");
  const Index deepest = *std::max_element(cutoffs.begin(), cutoffs.end());
  PrecisionRecall out;
  out.cutoffs = cutoffs;
  out.precision.assign(cutoffs.size(), 0.0);
  out.recall.assign(cutoffs.size(), 0.0);
  out.f1.assign(cutoffs.size(), 0.0);
  for (Index i = 0; i < train.users(); ++i) {
    const auto& held = heldout[i];
    if (held.empty()) continue;
    const auto s = row_of(scores, i);
    std::vector<Index> cand = non_training(train, i);
    const Index depth = std::min<Index>(deepest, static_cast<Index>(cand.size()));
    std::partial_sort(cand.begin(), cand.begin() + depth, cand.end(), [&](Index x, Index y) {
      return s[x] > s[y] || (s[x] == s[y] && x < y);
    });
    std::vector<Index> sorted_held = held;
    std::sort(sorted_held.begin(), sorted_held.end());
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      const Index l = cutoffs[c];
      Index hits = 0;
      for (Index r = 0; r < std::min(l, depth); ++r)
        hits += std::binary_search(sorted_held.begin(), sorted_held.end(), cand[r]);
      const double p = static_cast<double>(hits) / static_cast<double>(l);
      const double rc = static_cast<double>(hits) / static_cast<double>(held.size());
      out.precision[c] += p;
      out.recall[c] += rc;
      out.f1[c] += (p + rc) > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
    }
    ++out.users;
  }
  if (out.users == 0) throw UndefinedMetricError("no user has held-out items");
  for (std::size_t c = 0; c < cutoffs.size(); ++c) {
    out.precision[c] /= static_cast<double>(out.users);
    out.recall[c] /= static_cast<double>(out.users);
    out.f1[c] /= static_cast<double>(out.users);
  }
  return out;
}

double heldout_auc(const ScoreMatrix& scores, const ImplicitRatings& train,
                   const std::vector<std::vector<Index>>& heldout) {
  check_heldout(scores, train, heldout);
  double total = 0.0;
  Index users = 0;
  for (Index i = 0; i < train.users(); ++i) {
    if (heldout[i].empty()) continue;
    const auto cand = non_training(train, i);
    if (cand.size() <= heldout[i].size()) continue;
    total += user_auc(row_of(scores, i), heldout[i], cand);
    ++users;
  }
  if (users == 0) throw UndefinedMetricError("no user has held-out items");
  return total / static_cast<double>(users);
}

double heldout_tpr_at(const ScoreMatrix& scores, const ImplicitRatings& train,
                      const std::vector<std::vector<Index>>& heldout, double fpr) {
  return mean_heldout_roc(scores, train, heldout, fpr, 2).back().second;
}

RocCurve mean_heldout_roc(const ScoreMatrix& scores, const ImplicitRatings& train,
                          const std::vector<std::vector<Index>>& heldout,
                          double max_fpr, Index points) {
  check_heldout(scores, train, heldout);
  if (!(max_fpr > 0.0 && max_fpr <= 1.0)) throw ParameterError("max FPR must lie in (0, 1]");
  if (points < 2) throw ParameterError("need at least two ROC points");
  RocCurve mean(points);
  for (Index k = 0; k < points; ++k)
    mean[k] = {max_fpr * static_cast<double>(k) / static_cast<double>(points - 1), 0.0};
  Index users = 0;
  for (Index i = 0; i < train.users(); ++i) {
    if (heldout[i].empty()) continue;
    const auto cand = non_training(train, i);
    if (cand.size() <= heldout[i].size()) continue;
    const RocCurve c = roc_curve(row_of(scores, i), heldout[i], cand);
    for (auto& [x, y] : mean) y += tpr_at(c, x);
    ++users;
  }
  if (users == 0) throw UndefinedMetricError("no user has held-out items");
  for (auto& pt : mean) pt.second /= static_cast<double>(users);
  return mean;
}

}  // namespace mfauc
