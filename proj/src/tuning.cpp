#include "mfauc/tuning.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include "mfauc/errors.hpp"
#include "mfauc/metrics.hpp"

namespace mfauc {

void Grid::validate() const {
  if (folds < 2) throw ParameterError("folds must be >= 2");
  if (validation_items < 1) throw ParameterError("validation items must be >= 1");
  if (cutoff < 1) throw ParameterError("cutoff must be >= 1");
  if (max_ratings < 0) throw ParameterError("max_ratings must be >= 0");
  for (double a : alpha)
    if (!(a >= 0.0)) throw ParameterError("alpha candidates must be >= 0");
  for (double l : lambda)
    if (!(l >= 0.0)) throw ParameterError("lambda candidates must be >= 0");
  for (Index v : k)
    if (v < 1) throw ParameterError("k candidates must be >= 1");
}

std::vector<TrainConfig> expand_grid(const Grid& grid, const TrainConfig& base) {
  auto or_base = [](const auto& list, auto value) {
    using T = std::decay_t<decltype(value)>;
    return list.empty() ? std::vector<T>{value} : std::vector<T>(list.begin(), list.end());
  };
  const auto alphas = or_base(grid.alpha, base.alpha);
  const auto lambdas = or_base(grid.lambda, base.lambda);
  const auto ks = or_base(grid.k, base.k);
  const auto losses = or_base(grid.loss, base.loss.kind);
  const auto betas = or_base(grid.beta, base.loss.beta);
  const auto rhos = or_base(grid.rho, base.weight.rho);
  std::vector<TrainConfig> out;
  for (double a : alphas)
    for (double l : lambdas)
      for (Index k : ks)
        for (LossKind lk : losses)
          for (double b : betas)
            for (double r : rhos) {
              TrainConfig c = base;
              c.alpha = a;
              c.lambda = l;
              c.k = k;
              c.loss.kind = lk;
              c.loss.beta = b;
              if (!grid.rho.empty()) c.weight.kind = WeightKind::tanh;
              c.weight.rho = r;
              out.push_back(c);
            }
  return out;
}

std::vector<CvFold> make_folds(const ImplicitRatings& ratings, Index folds,
                               Index validation_items, std::uint64_t seed) {
  if (folds < 2) throw ParameterError("folds must be >= 2");
  if (validation_items < 1) throw ParameterError("validation items must be >= 1");
  const Index m = ratings.users(), n = ratings.items();
  Rng rng(seed);
  // part[i][f]: user i's items dealt to fold f
  std::vector<std::vector<std::vector<Index>>> part(m, std::vector<std::vector<Index>>(folds));
  for (Index i = 0; i < m; ++i) {
    const auto row = ratings.row(i);
    if (static_cast<Index>(row.size()) < folds)
      throw DegenerateUserError(i, "fewer relevant items than folds");
    std::vector<Index> items(row.begin(), row.end());
    std::shuffle(items.begin(), items.end(), rng);
    for (std::size_t t = 0; t < items.size(); ++t)
      part[i][static_cast<Index>(t) % folds].push_back(items[t]);
  }
  std::vector<CvFold> out(folds);
  for (Index f = 0; f < folds; ++f) {
    std::vector<std::vector<Index>> train(m), mask(m);
    out[f].validation.assign(m, {});
    for (Index i = 0; i < m; ++i) {
      for (Index g = 0; g < folds; ++g)
        if (g != f) train[i].insert(train[i].end(), part[i][g].begin(), part[i][g].end());
      std::vector<Index> held = part[i][f];
      std::shuffle(held.begin(), held.end(), rng);
      const auto take = std::min<std::size_t>(held.size(), validation_items);
      out[f].validation[i].assign(held.begin(), held.begin() + take);
      std::sort(out[f].validation[i].begin(), out[f].validation[i].end());
      mask[i] = train[i];
      mask[i].insert(mask[i].end(), held.begin() + take, held.end());
    }
    out[f].train = ImplicitRatings(m, n, train);
    out[f].mask = ImplicitRatings(m, n, mask);
  }
  return out;
}

FilterResult sequential_user_sample(const ImplicitRatings& ratings, Index max_ratings) {
  if (max_ratings < 1) throw ParameterError("max_ratings must be >= 1");
  FilterResult out;
  Index total = 0;
  std::vector<char> used(ratings.items(), 0);
  for (Index i = 0; i < ratings.users() && total < max_ratings; ++i) {
    out.user_map.push_back(i);
    for (Index j : ratings.row(i)) used[j] = 1;
    total += ratings.row_size(i);
  }
  std::vector<Index> remap(ratings.items(), -1);
  for (Index j = 0; j < ratings.items(); ++j)
    if (used[j]) {
      remap[j] = static_cast<Index>(out.item_map.size());
      out.item_map.push_back(j);
    }
  std::vector<std::vector<Index>> rows;
  for (Index i : out.user_map) {
    std::vector<Index> r;
    for (Index j : ratings.row(i)) r.push_back(remap[j]);
    rows.push_back(std::move(r));
  }
  out.ratings = ImplicitRatings(static_cast<Index>(out.user_map.size()),
                                static_cast<Index>(out.item_map.size()), rows);
  return out;
}

TuningResult grid_search(const ImplicitRatings& ratings, const Grid& grid,
                         const TrainConfig& base, std::uint64_t seed, Index workers) {
  grid.validate();
  if (workers < 1) throw ParameterError("workers must be >= 1");
  const ImplicitRatings* data = &ratings;
  FilterResult sample;
  if (grid.max_ratings > 0 && ratings.nnz() > grid.max_ratings) {
    sample = sequential_user_sample(ratings, grid.max_ratings);
    data = &sample.ratings;
  }
  TuningResult result;
  result.points = expand_grid(grid, base);
  for (const auto& p : result.points) p.validate();
  const auto folds = make_folds(*data, grid.folds, grid.validation_items, derive_seed(seed, 1));
  const std::size_t P = result.points.size(), F = folds.size();
  result.fold_scores.assign(P, std::vector<double>(F, 0.0));
  std::vector<std::string> errors(P * F);

  auto job = [&](std::size_t t) {
    const std::size_t p = t / F, f = t % F;
    TrainConfig cfg = result.points[p];
    cfg.seed = derive_seed(seed, 100 + f);
    try {
      const TrainReport rep = train(folds[f].train, cfg);
      const ScoreMatrix S = score_matrix(rep.model);
      const auto pr = precision_recall_at(S, folds[f].mask, folds[f].validation, {grid.cutoff});
      result.fold_scores[p][f] = pr.f1[0];
    } catch (const RuntimeError& e) {
      errors[t] = e.what();
    }
  };
  if (workers == 1) {
    for (std::size_t t = 0; t < P * F; ++t) job(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (Index w = 0; w < std::min<Index>(workers, static_cast<Index>(P * F)); ++w)
      pool.emplace_back([&] {
        for (std::size_t t; (t = next.fetch_add(1)) < P * F;) job(t);
      });
  }

  result.failures.assign(P, "");
  result.mean_scores.assign(P, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t f = 0; f < F; ++f) {
      if (!errors[p * F + f].empty()) {
        result.fold_scores[p][f] = 0.0;
        if (result.failures[p].empty()) result.failures[p] = errors[p * F + f];
      }
    }
    if (!result.failures[p].empty())
      std::clog << "grid point " << p << " failed: " << result.failures[p] << "\n";
    result.mean_scores[p] =
        std::accumulate(result.fold_scores[p].begin(), result.fold_scores[p].end(), 0.0) /
        static_cast<double>(F);
  }
  result.best = 0;
  for (std::size_t p = 1; p < P; ++p)
    if (result.mean_scores[p] > result.mean_scores[result.best]) result.best = p;
  result.best_config = result.points[result.best];
  result.best_config.seed = base.seed;
  result.best_score = result.mean_scores[result.best];
  return result;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
    return s.substr(1, s.size() - 2);
  return s;
}

double to_number(const std::string& tok, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, "bad number '" + tok + "'");
  }
}

Index to_count(const std::string& tok, std::size_t line) {
  const double v = to_number(tok, line);
  if (v != static_cast<double>(static_cast<Index>(v)))
    throw ParseError(line, "expected an integer, got '" + tok + "'");
  return static_cast<Index>(v);
}

}  // namespace

Grid parse_grid(std::string_view text) {
  Grid g;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[' && body.back() == ']') continue;  // table headers are ignored
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    std::vector<std::string> items;
    if (!value.empty() && value.front() == '[') {
      if (value.back() != ']') throw ParseError(line, "unterminated list");
      std::stringstream ss(value.substr(1, value.size() - 2));
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!trim(tok).empty()) items.push_back(unquote(trim(tok)));
    } else {
      items.push_back(unquote(value));
    }
    if (items.empty()) throw ParseError(line, "empty value for '" + key + "'");
    auto numbers = [&] {
      std::vector<double> v;
      for (const auto& t : items) v.push_back(to_number(t, line));
      return v;
    };
    auto single = [&] {
      if (items.size() != 1) throw ParseError(line, "'" + key + "' takes one value");
      return to_count(items[0], line);
    };
    if (key == "alpha") g.alpha = numbers();
    else if (key == "lambda") g.lambda = numbers();
    else if (key == "beta") g.beta = numbers();
    else if (key == "rho") g.rho = numbers();
    else if (key == "k") {
      g.k.clear();
      for (const auto& t : items) g.k.push_back(to_count(t, line));
    } else if (key == "loss") {
      g.loss.clear();
      for (const auto& t : items) {
        try {
          g.loss.push_back(parse_loss_kind(t));
        } catch (const ValidationError& e) {
          throw ParseError(line, e.what());
        }
      }
    } else if (key == "folds") g.folds = single();
    else if (key == "validation_items") g.validation_items = single();
    else if (key == "cutoff") g.cutoff = single();
    else if (key == "max_ratings") g.max_ratings = single();
    else throw ParseError(line, "unknown key '" + key + "'");
  }
  return g;
}

Grid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_grid(ss.str());
}

void save_best(const TuningResult& result, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  const TrainConfig& c = result.best_config;
  std::fprintf(f, "alpha = %.17g\nlambda = %.17g\nk = %ld\nloss = \"%s\"\nbeta = %.17g\n",
               c.alpha, c.lambda, static_cast<long>(c.k), to_string(c.loss.kind).c_str(),
               c.loss.beta);
  std::fprintf(f, "weight = \"%s\"\nrho = %.17g\nscore = %.17g\ngrid_index = %zu\n",
               to_string(c.weight.kind).c_str(), c.weight.rho, result.best_score, result.best);
  if (std::fclose(f) != 0) throw IoError("failed writing " + path.string());
}

}  // namespace mfauc
