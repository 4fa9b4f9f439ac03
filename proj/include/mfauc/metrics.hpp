#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mfauc/distributions.hpp"
#include "mfauc/factor_model.hpp"
#include "mfauc/ratings.hpp"

namespace mfauc {

/// One score per item for each user: user_scores(i) returns a length-n vector.
using ScoreMatrix = RowMatrix<double>;

/// Scores of every (user, item) pair, U V^T.
ScoreMatrix score_matrix(const FactorModeld& model);

struct AucResult {
  double value = 0.0;
  /// Users left out because all or none of their items are relevant.
  std::vector<Index> excluded;
};

/// Mean over users of the AUC of row i against `relevant`'s row i. With
/// `dists` the pairs are weighted by g(p) g'(q); without it every pair counts
/// equally. Ties count one half.
AucResult empirical_auc(const ScoreMatrix& scores, const ImplicitRatings& relevant,
                        const ItemDistributions* dists = nullptr);

/// AUC of one user's scores with the given relevant items among `candidates`
/// (all items when empty). Pair-counting is exact: ties count one half.
double user_auc(std::span<const double> scores, std::span<const Index> relevant,
                std::span<const Index> candidates = {});

/// Like the uniform AUC, but only pairs whose relevant item scores at least
/// the (1 - t) quantile of the user's n scores (the ceil(t n)-th largest)
/// count. Users without qualifying pairs are skipped.
double local_auc(const ScoreMatrix& scores, const ImplicitRatings& relevant, double t);

using RocCurve = std::vector<std::pair<double, double>>;

/// ROC points (fpr, tpr) from (0,0) to (1,1); tied scores form one diagonal
/// segment. With max_fpr the curve is cut at that FPR with an interpolated
/// end point.
RocCurve roc_curve(std::span<const double> scores, std::span<const Index> relevant,
                   std::span<const Index> candidates = {},
                   std::optional<double> max_fpr = std::nullopt);

/// Trapezoid area under a curve.
double curve_area(const RocCurve& curve);

/// TPR at a given FPR, by linear interpolation along the curve.
double tpr_at(const RocCurve& curve, double fpr);

struct PrecisionRecall {
  std::vector<Index> cutoffs;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  Index users = 0;
};

/// Ranks every non-training item of each user with a nonempty held-out set
/// and reports mean precision, recall and F1 at each cutoff.
PrecisionRecall precision_recall_at(const ScoreMatrix& scores,
                                    const ImplicitRatings& train,
                                    const std::vector<std::vector<Index>>& heldout,
                                    const std::vector<Index>& cutoffs);

/// Mean uniform AUC on held-out items against irrelevant non-training items.
double heldout_auc(const ScoreMatrix& scores, const ImplicitRatings& train,
                   const std::vector<std::vector<Index>>& heldout);

/// Mean over users of the held-out ROC curves' TPR at `fpr`.
double heldout_tpr_at(const ScoreMatrix& scores, const ImplicitRatings& train,
                      const std::vector<std::vector<Index>>& heldout, double fpr);

/// Held-out ROC curve averaged over users at evenly spaced FPR values in
/// [0, max_fpr].
RocCurve mean_heldout_roc(const ScoreMatrix& scores, const ImplicitRatings& train,
                          const std::vector<std::vector<Index>>& heldout,
                          double max_fpr, Index points);

}  // namespace mfauc
