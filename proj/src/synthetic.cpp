#include "mfauc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mfauc/errors.hpp"

namespace mfauc {

SyntheticSpec SyntheticSpec::defaults(int variant) {
  SyntheticSpec s;
  s.variant = variant;
  if (variant == 2) {
    s.m = 600;
    s.n = 300;
  }
  return s;
}

void SyntheticSpec::validate() const {
  if (variant != 1 && variant != 2) throw ParameterError("variant must be 1 or 2");
  if (m < 1 || n < 1 || k < 1) throw ParameterError("m, n and k must be >= 1");
  if (k > m || k > n) throw ParameterError("k must not exceed m or n");
  if (!(top_fraction > 0.0 && top_fraction < 1.0))
    throw ParameterError("top fraction must lie in (0, 1)");
  if (!(noise_per_row >= 0.0) || noise_per_row > static_cast<double>(n))
    throw ParameterError("noise per row must lie in [0, n]");
  if (!(power >= 0.0)) throw ParameterError("power-law exponent must be >= 0");
  if (!(density > 0.0 && density < 1.0)) throw ParameterError("density must lie in (0, 1)");
  if (max_draws < 1) throw ParameterError("draw limit must be >= 1");
}

RowMatrix<double> orthogonal_factors(Index m, Index k, std::uint64_t seed) {
  if (k < 1) throw ParameterError("k must be >= 1");
  if (k > m) throw ParameterError("k must not exceed m");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd G(m, k);
  for (Index c = 0; c < k; ++c)
    for (Index r = 0; r < m; ++r) G(r, c) = normal(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(m, k);
  for (Index c = 0; c < k; ++c) Q.col(c) *= G.col(c).norm();
  return Q;
}

SyntheticData gen_synthetic1(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Index m = spec.m, n = spec.n;
  SyntheticData out;
  out.U = orthogonal_factors(m, spec.k, derive_seed(seed, 1));
  out.V = orthogonal_factors(n, spec.k, derive_seed(seed, 2));
  Rng rng(derive_seed(seed, 3));
  const Index keep = std::clamp<Index>(
      static_cast<Index>(std::llround(spec.top_fraction * static_cast<double>(n))), 1, n - 1);
  const double p_noise = spec.noise_per_row / static_cast<double>(n);
  std::binomial_distribution<Index> noise_count(n, p_noise);
  std::uniform_int_distribution<Index> item(0, n - 1);

  std::vector<std::vector<Index>> base(m), rows(m);
  out.thresholds.resize(m);
  std::vector<double> sorted(n);
  for (Index i = 0; i < m; ++i) {
    const Eigen::VectorXd s = out.V * out.U.row(i).transpose();
    std::copy(s.data(), s.data() + n, sorted.begin());
    std::nth_element(sorted.begin(), sorted.begin() + keep, sorted.end(),
                     std::greater<double>());
    // Quantile: the (keep+1)-th largest score; kept items lie strictly above.
    const double q = sorted[keep];
    out.thresholds[i] = q;
    for (Index j = 0; j < n; ++j)
      if (s[j] > q) base[i].push_back(j);
    std::set<Index> row(base[i].begin(), base[i].end());
    const Index extra = p_noise > 0.0 ? noise_count(rng) : 0;
    for (Index e = 0; e < extra; ++e) row.insert(item(rng));
    rows[i].assign(row.begin(), row.end());
  }
  out.ratings = ImplicitRatings(m, n, rows);
  out.thresholded = ImplicitRatings(m, n, base);
  out.user_map.resize(m);
  out.item_map.resize(n);
  std::iota(out.user_map.begin(), out.user_map.end(), Index{0});
  std::iota(out.item_map.begin(), out.item_map.end(), Index{0});
  return out;
}

namespace {

/// Zipf weights 1/rank^power over a random assignment of ranks.
std::discrete_distribution<Index> zipf_over_permutation(Index size, double power, Rng& rng) {
  std::vector<Index> rank(size);
  std::iota(rank.begin(), rank.end(), Index{1});
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> w(size);
  for (Index a = 0; a < size; ++a) w[a] = std::pow(static_cast<double>(rank[a]), -power);
  return std::discrete_distribution<Index>(w.begin(), w.end());
}

}  // namespace

SyntheticData gen_synthetic2(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Index m = spec.m, n = spec.n;
  const RowMatrix<double> U = orthogonal_factors(m, spec.k, derive_seed(seed, 1));
  const RowMatrix<double> V = orthogonal_factors(n, spec.k, derive_seed(seed, 2));
  const RowMatrix<double> Z = U * V.transpose();
  const double mean = Z.mean();
  Rng rng(derive_seed(seed, 3));
  auto user_dist = zipf_over_permutation(m, spec.power, rng);
  auto item_dist = zipf_over_permutation(n, spec.power, rng);

  const auto target = static_cast<std::int64_t>(
      std::ceil(spec.density * static_cast<double>(m) * static_cast<double>(n)));
  std::vector<char> X(static_cast<std::size_t>(m * n), 0);
  std::int64_t nnz = 0, draws = 0;
  while (nnz < target) {
    if (draws >= spec.max_draws)
      throw RuntimeError("density target not reached after " + std::to_string(draws) +
                         " draws");
    const Index i = user_dist(rng), j = item_dist(rng);
    ++draws;
    char& x = X[i * n + j];
    if (!x && Z(i, j) >= mean) {
      x = 1;
      ++nnz;
    }
  }

  std::vector<Index> row_count(m, 0), col_count(n, 0);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j)
      if (X[i * n + j]) ++row_count[i], ++col_count[j];
  SyntheticData out;
  std::vector<Index> item_new(n, -1);
  for (Index j = 0; j < n; ++j)
    if (col_count[j] > 0) {
      item_new[j] = static_cast<Index>(out.item_map.size());
      out.item_map.push_back(j);
    }
  std::vector<std::vector<Index>> rows;
  for (Index i = 0; i < m; ++i) {
    if (row_count[i] == 0) continue;
    out.user_map.push_back(i);
    std::vector<Index> r;
    for (Index j = 0; j < n; ++j)
      if (X[i * n + j]) r.push_back(item_new[j]);
    rows.push_back(std::move(r));
  }
  const Index m2 = static_cast<Index>(out.user_map.size());
  const Index n2 = static_cast<Index>(out.item_map.size());
  out.ratings = ImplicitRatings(m2, n2, rows);
  out.U.resize(m2, spec.k);
  out.V.resize(n2, spec.k);
  for (Index a = 0; a < m2; ++a) out.U.row(a) = U.row(out.user_map[a]);
  for (Index b = 0; b < n2; ++b) out.V.row(b) = V.row(out.item_map[b]);
  out.draws = draws;
  return out;
}

SyntheticData generate(const SyntheticSpec& spec, std::uint64_t seed) {
  return spec.variant == 2 ? gen_synthetic2(spec, seed) : gen_synthetic1(spec, seed);
}

}  // namespace mfauc
