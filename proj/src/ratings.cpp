#include "mfauc/ratings.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "mfauc/errors.hpp"

namespace mfauc {

ImplicitRatings::ImplicitRatings(Index users, Index items,
                                 const std::vector<std::vector<Index>>& rows)
    : users_(users), items_(items) {
  if (users < 0 || items < 0) throw ParameterError("negative matrix shape");
  if (static_cast<Index>(rows.size()) != users)
    throw ParameterError("row list size does not match user count");
  offsets_.assign(1, 0);
  offsets_.reserve(users + 1);
  for (Index i = 0; i < users; ++i) {
    std::vector<Index> r = rows[i];
    std::sort(r.begin(), r.end());
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (r[k] < 0 || r[k] >= items)
        throw BoundsError("entry (" + std::to_string(i) + ", " +
                          std::to_string(r[k]) + ") outside " +
                          std::to_string(users) + "x" + std::to_string(items));
      if (k > 0 && r[k] == r[k - 1])
        throw DuplicateEntryError("duplicate entry (" + std::to_string(i) +
                                  ", " + std::to_string(r[k]) + ")");
    }
    cols_.insert(cols_.end(), r.begin(), r.end());
    offsets_.push_back(static_cast<Index>(cols_.size()));
  }
}

bool ImplicitRatings::contains(Index user, Index item) const {
  const auto r = row(user);
  return std::binary_search(r.begin(), r.end(), item);
}

std::vector<Index> ImplicitRatings::item_counts() const {
  std::vector<Index> counts(items_, 0);
  for (Index c : cols_) ++counts[c];
  return counts;
}

void ImplicitRatings::require_nondegenerate() const {
  for (Index i = 0; i < users_; ++i) {
    if (row_size(i) == 0) throw DegenerateUserError(i, "no relevant items");
    if (irrelevant_count(i) == 0)
      throw DegenerateUserError(i, "no irrelevant items");
  }
}

std::vector<Index> ImplicitRatings::usable_users() const {
  std::vector<Index> out;
  for (Index i = 0; i < users_; ++i)
    if (row_size(i) > 0 && irrelevant_count(i) > 0) out.push_back(i);
  return out;
}

std::vector<std::vector<Index>> ImplicitRatings::to_rows() const {
  std::vector<std::vector<Index>> rows(users_);
  for (Index i = 0; i < users_; ++i) {
    const auto r = row(i);
    rows[i].assign(r.begin(), r.end());
  }
  return rows;
}

namespace {

std::string lowered(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

ImplicitRatings load_ratings(const std::filesystem::path& path,
                             std::optional<double> threshold) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "empty file");
  ++line_no;
  {
    std::istringstream hs(lowered(line));
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%matrixmarket" || object != "matrix" ||
        format != "coordinate")
      throw ParseError(line_no, "expected '%%MatrixMarket matrix coordinate' header");
    if (field != "real" && field != "integer" && field != "pattern")
      throw ParseError(line_no, "unsupported field '" + field + "'");
    if (symmetry != "general")
      throw ParseError(line_no, "only 'general' symmetry is supported");
    if (field == "pattern") threshold.reset();
  }

  long long m = -1, n = -1, declared = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ss(line);
    std::string extra;
    if (!(ss >> m >> n >> declared) || (ss >> extra) || m < 0 || n < 0 ||
        declared < 0)
      throw ParseError(line_no, "malformed size line");
    break;
  }
  if (declared < 0) throw ParseError(line_no, "missing size line");

  std::vector<std::vector<Index>> rows(m);
  std::vector<std::pair<Index, Index>> seen;
  seen.reserve(declared);
  long long read = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '%') continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    long long i = 0, j = 0;
    double value = 1.0;
    if (!(ss >> i >> j)) throw ParseError(line_no, "malformed entry");
    if (!(ss >> value)) value = 1.0;
    std::string extra;
    if (ss.clear(), ss >> extra)
      throw ParseError(line_no, "trailing tokens in entry");
    if (i < 1 || i > m || j < 1 || j > n)
      throw BoundsError("line " + std::to_string(line_no) + ": entry (" +
                        std::to_string(i) + ", " + std::to_string(j) +
                        ") outside declared " + std::to_string(m) + "x" +
                        std::to_string(n));
    ++read;
    seen.emplace_back(i - 1, j - 1);
    const bool relevant = threshold ? value > *threshold : value != 0.0;
    if (relevant) rows[i - 1].push_back(j - 1);
  }
  if (read != declared)
    throw ParseError(line_no, "declared " + std::to_string(declared) +
                                  " entries but found " + std::to_string(read));

  std::sort(seen.begin(), seen.end());
  const auto dup = std::adjacent_find(seen.begin(), seen.end());
  if (dup != seen.end())
    throw DuplicateEntryError("duplicate entry (" + std::to_string(dup->first + 1) +
                              ", " + std::to_string(dup->second + 1) + ")");
  return ImplicitRatings(m, n, rows);
}

void save_ratings(const ImplicitRatings& ratings,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << ratings.users() << ' ' << ratings.items() << ' ' << ratings.nnz()
      << '\n';
  for (Index i = 0; i < ratings.users(); ++i)
    for (Index j : ratings.row(i)) out << i + 1 << ' ' << j + 1 << " 1\n";
  if (!out) throw IoError("write failed for " + path.string());
}

ImplicitRatings HoldoutSplit::test_matrix() const {
  return ImplicitRatings(train.users(), train.items(), test);
}

HoldoutSplit split_holdout(const ImplicitRatings& ratings, Index per_user,
                           Index min_remaining, std::uint64_t seed) {
  if (per_user < 1) throw ParameterError("per_user must be >= 1");
  if (min_remaining < 0) throw ParameterError("min_remaining must be >= 0");
  Rng rng(seed);
  auto rows = ratings.to_rows();
  HoldoutSplit split;
  split.test.resize(ratings.users());
  for (Index i = 0; i < ratings.users(); ++i) {
    auto& r = rows[i];
    if (static_cast<Index>(r.size()) < per_user + min_remaining) {
      split.skipped.push_back(i);
      continue;
    }
    // Partial Fisher-Yates: the first per_user slots become the test items.
    for (Index k = 0; k < per_user; ++k) {
      std::uniform_int_distribution<Index> pick(k, static_cast<Index>(r.size()) - 1);
      std::swap(r[k], r[pick(rng)]);
    }
    split.test[i].assign(r.begin(), r.begin() + per_user);
    std::sort(split.test[i].begin(), split.test[i].end());
    r.erase(r.begin(), r.begin() + per_user);
  }
  split.train = ImplicitRatings(ratings.users(), ratings.items(), rows);
  return split;
}

FilterResult filter_sparse(const ImplicitRatings& ratings,
                           Index min_items_per_user, Index min_users_per_item) {
  if (min_items_per_user < 0 || min_users_per_item < 0)
    throw ParameterError("filter thresholds must be >= 0");
  const Index m = ratings.users(), n = ratings.items();
  std::vector<char> keep_user(m, 1), keep_item(n, 1);
  std::vector<Index> user_deg(m), item_deg(n, 0);
  for (Index i = 0; i < m; ++i) {
    user_deg[i] = ratings.row_size(i);
    for (Index j : ratings.row(i)) ++item_deg[j];
  }

  bool changed = true;
  while (changed) {
    changed = false;
    for (Index i = 0; i < m; ++i) {
      if (keep_user[i] && user_deg[i] < min_items_per_user) {
        keep_user[i] = 0;
        changed = true;
        for (Index j : ratings.row(i))
          if (keep_item[j]) --item_deg[j];
      }
    }
    for (Index j = 0; j < n; ++j) {
      if (keep_item[j] && item_deg[j] < min_users_per_item) {
        keep_item[j] = 0;
        changed = true;
      }
    }
    if (changed) {
      for (Index i = 0; i < m; ++i) {
        if (!keep_user[i]) continue;
        Index deg = 0;
        for (Index j : ratings.row(i)) deg += keep_item[j];
        user_deg[i] = deg;
      }
    }
  }

  FilterResult result;
  std::vector<Index> new_item(n, -1);
  for (Index j = 0; j < n; ++j)
    if (keep_item[j]) {
      new_item[j] = static_cast<Index>(result.item_map.size());
      result.item_map.push_back(j);
    }
  std::vector<std::vector<Index>> rows;
  for (Index i = 0; i < m; ++i) {
    if (!keep_user[i]) continue;
    result.user_map.push_back(i);
    auto& r = rows.emplace_back();
    for (Index j : ratings.row(i))
      if (keep_item[j]) r.push_back(new_item[j]);
  }
  if (rows.empty() || result.item_map.empty())
    throw EmptyResultError("filtering removed every user or item");
  result.ratings = ImplicitRatings(static_cast<Index>(rows.size()),
                                   static_cast<Index>(result.item_map.size()),
                                   rows);
  return result;
}

}  // namespace mfauc
