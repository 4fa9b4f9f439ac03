#include "mfauc/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mfauc/diagnostics.hpp"
#include "mfauc/errors.hpp"
#include "mfauc/manifest.hpp"
#include "mfauc/metrics.hpp"
#include "mfauc/model_io.hpp"
#include "mfauc/objective.hpp"
#include "mfauc/parallel.hpp"
#include "mfauc/synthetic.hpp"
#include "mfauc/tuning.hpp"

namespace mfauc {

namespace fs = std::filesystem;

long default_workers() {
  if (const char* env = std::getenv("MFAUC_WORKERS")) {
    char* end = nullptr;
    const long w = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && w > 0) return w;
  }
  return 1;
}

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string short_num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  return f;
}

void close_out(std::ofstream& f, const fs::path& path) {
  f.close();
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

/// Manifest bookkeeping shared by all subcommands.
struct Run {
  ExperimentManifest manifest;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  Run(std::string command, const std::vector<std::string>& args) {
    manifest.command = std::move(command);
    manifest.args = args;
    manifest.params.emplace_back("cwd", fs::current_path().string());
    manifest.versions = {{"mfauc", kVersion},
                         {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                       std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                       std::to_string(EIGEN_MINOR_VERSION)},
                         {"model_format", "MFAUC-FACTORS v1"},
                         {"manifest_format", "1"}};
  }
  void param(const std::string& key, const std::string& value) {
    manifest.params.emplace_back(key, value);
  }
  void finish(const fs::path& primary) {
    manifest.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    manifest.save(fs::path(primary.string() + ".manifest"));
  }
};

struct ModelFlags {
  Index k = 8;
  std::string loss = "square_hinge";
  double beta = 1.0;
  std::string weight = "identity";
  double rho = 1.0;
  double lambda = 0.0;
  double tau = 0.0;
};

struct TrainFlags {
  ModelFlags model;
  double alpha = 0.05;
  Index iters = 500;
  std::optional<Index> t0;
  double eps = 1e-9;
  Index kappa_w = 30;
  Index kappa_y = 10;
  double init_std = 0.1;
  std::uint64_t seed = 0;
  std::string mode = "sgd";
  Index check_period = 1;
  Index eval_users = 0;
  bool exact_objective = false;
  std::string averaging = "visit";
  bool fixed_permutations = false;
  bool unscaled_steps = false;
  std::string beta_schedule;
  double divergence_bound = 1e6;
};

void add_model_flags(CLI::App* app, ModelFlags& f) {
  app->add_option("--k", f.k, "Factor rank")->capture_default_str();
  app->add_option("--loss", f.loss, "square_hinge|square|sigmoid|logistic")
      ->capture_default_str();
  app->add_option("--beta", f.beta, "Sharpness of sigmoid/logistic")->capture_default_str();
  app->add_option("--weight", f.weight, "identity|tanh")->capture_default_str();
  app->add_option("--rho", f.rho, "tanh scale")->capture_default_str();
  app->add_option("--lambda", f.lambda, "Frobenius penalty")->capture_default_str();
  app->add_option("--tau", f.tau, "Item popularity exponent")->capture_default_str();
}

void add_train_flags(CLI::App* app, TrainFlags& f) {
  add_model_flags(app, f.model);
  app->add_option("--alpha", f.alpha, "Step size")->capture_default_str();
  app->add_option("--iters", f.iters, "Maximum iterations T")->capture_default_str();
  app->add_option("--t0", f.t0, "Averaging start T0 (default 0.8 T)");
  app->add_option("--eps", f.eps, "Objective change that stops training")
      ->capture_default_str();
  app->add_option("--kappa-w", f.kappa_w, "Users sampled per item gradient")
      ->capture_default_str();
  app->add_option("--kappa-y", f.kappa_y, "Pairs sampled per user")->capture_default_str();
  app->add_option("--init-std", f.init_std, "Initial factor scale")->capture_default_str();
  app->add_option("--seed", f.seed, "Training seed")->capture_default_str();
  app->add_option("--mode", f.mode, "sgd|full")->capture_default_str();
  app->add_option("--check-period", f.check_period, "Iterations between objective checks")
      ->capture_default_str();
  app->add_option("--eval-users", f.eval_users, "Users in the objective estimate (0: m)")
      ->capture_default_str();
  app->add_flag("--exact-objective", f.exact_objective, "Track the exact objective");
  app->add_option("--averaging", f.averaging, "visit|row")->capture_default_str();
  app->add_flag("--fixed-permutations", f.fixed_permutations,
                "Reuse one visiting order every iteration");
  app->add_flag("--unscaled-steps", f.unscaled_steps, "Step along the raw gradient");
  app->add_option("--beta-schedule", f.beta_schedule, "iter:beta,... sharpness steps");
  app->add_option("--divergence-bound", f.divergence_bound, "Factor magnitude limit")
      ->capture_default_str();
}

std::vector<std::pair<Index, double>> parse_schedule(const std::string& text) {
  std::vector<std::pair<Index, double>> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ParameterError("beta schedule entry '" + item + "' is not iter:beta");
    try {
      out.emplace_back(std::stol(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    } catch (const std::logic_error&) {
      throw ParameterError("beta schedule entry '" + item + "' is not iter:beta");
    }
  }
  return out;
}

TrainConfig to_config(const TrainFlags& f) {
  TrainConfig c;
  c.k = f.model.k;
  c.lambda = f.model.lambda;
  c.tau = f.model.tau;
  c.loss = {parse_loss_kind(f.model.loss), f.model.beta};
  c.weight = {parse_weight_kind(f.model.weight), f.model.rho};
  c.alpha = f.alpha;
  c.max_iters = f.iters;
  c.average_start = f.t0 ? *f.t0 : -1;
  if (f.t0 && *f.t0 < 0) throw ParameterError("T0 must satisfy 0 <= T0 <= T");
  c.eps = f.eps;
  c.kappa_w = f.kappa_w;
  c.kappa_y = f.kappa_y;
  c.init_std = f.init_std;
  c.seed = f.seed;
  if (f.mode == "sgd") c.mode = TrainMode::sgd;
  else if (f.mode == "full") c.mode = TrainMode::full_batch;
  else throw ParameterError("unknown mode '" + f.mode + "'");
  c.objective_check_period = f.check_period;
  c.eval_users = f.eval_users;
  c.exact_objective = f.exact_objective;
  if (f.averaging == "visit") c.averaging = AveragingRule::visit_count;
  else if (f.averaging == "row") c.averaging = AveragingRule::row_index;
  else throw ParameterError("unknown averaging rule '" + f.averaging + "'");
  c.fixed_permutations = f.fixed_permutations;
  c.row_scaled_steps = !f.unscaled_steps;
  c.beta_schedule = parse_schedule(f.beta_schedule);
  c.divergence_bound = f.divergence_bound;
  c.validate();
  return c;
}

void record_config(Run& run, const TrainConfig& c) {
  run.param("k", std::to_string(c.k));
  run.param("loss", to_string(c.loss.kind));
  run.param("beta", num(c.loss.beta));
  run.param("weight", to_string(c.weight.kind));
  run.param("rho", num(c.weight.rho));
  run.param("lambda", num(c.lambda));
  run.param("tau", num(c.tau));
  run.param("alpha", num(c.alpha));
  run.param("iters", std::to_string(c.max_iters));
  run.param("t0", std::to_string(c.resolved_average_start()));
  run.param("eps", num(c.eps));
  run.param("kappa_w", std::to_string(c.kappa_w));
  run.param("kappa_y", std::to_string(c.kappa_y));
  run.param("init_std", num(c.init_std));
  run.param("mode", c.mode == TrainMode::sgd ? "sgd" : "full");
  run.param("averaging", c.averaging == AveragingRule::visit_count ? "visit" : "row");
  run.param("row_scaled_steps", c.row_scaled_steps ? "1" : "0");
  run.manifest.seeds.emplace_back("train", c.seed);
  run.manifest.seeds.emplace_back("objective", c.eval_seed);
}

struct InputFlags {
  std::string path;
  std::optional<double> threshold;
};

void add_input_flags(CLI::App* app, InputFlags& f, const std::string& name = "--input") {
  app->add_option(name, f.path, "MatrixMarket rating file")->required();
  app->add_option("--threshold", f.threshold, "Ratings above this are relevant");
}

ImplicitRatings read_input(Run& run, const InputFlags& f) {
  ImplicitRatings r = load_ratings(f.path, f.threshold);
  run.manifest.add_input(f.path);
  if (f.threshold) run.param("threshold", num(*f.threshold));
  return r;
}

void check_shape(const FactorModeld& model, const ImplicitRatings& r, const std::string& what) {
  if (model.users() != r.users() || model.items() != r.items())
    throw ParameterError(what + " is " + std::to_string(r.users()) + "x" +
                         std::to_string(r.items()) + " but the model is " +
                         std::to_string(model.users()) + "x" +
                         std::to_string(model.items()));
}

void write_tsv(std::ostream& os, const std::vector<std::pair<std::string, std::string>>& rows) {
  os << "metric\tvalue\n";
  for (const auto& [k, v] : rows) os << k << '\t' << v << '\n';
}

// ---------------------------------------------------------------- generate

struct GenerateFlags {
  int variant = 1;
  std::uint64_t seed = 0;
  std::string out;
  std::string truth;
  std::optional<Index> m, n, k;
  std::optional<double> top_fraction, noise, power, density;
  std::optional<std::int64_t> max_draws;
};

void run_generate(const GenerateFlags& f, const std::vector<std::string>& args,
                  std::ostream& out) {
  Run run("generate", args);
  SyntheticSpec spec = SyntheticSpec::defaults(f.variant);
  if (f.m) spec.m = *f.m;
  if (f.n) spec.n = *f.n;
  if (f.k) spec.k = *f.k;
  if (f.top_fraction) spec.top_fraction = *f.top_fraction;
  if (f.noise) spec.noise_per_row = *f.noise;
  if (f.power) spec.power = *f.power;
  if (f.density) spec.density = *f.density;
  if (f.max_draws) spec.max_draws = *f.max_draws;
  const SyntheticData data = generate(spec, f.seed);
  save_ratings(data.ratings, f.out);
  run.manifest.add_output(f.out);
  if (!f.truth.empty()) {
    save_factors(data.U, data.V, f.truth);
    run.manifest.add_output(f.truth);
  }
  run.param("variant", std::to_string(spec.variant));
  run.param("m", std::to_string(spec.m));
  run.param("n", std::to_string(spec.n));
  run.param("k", std::to_string(spec.k));
  if (spec.variant == 1) {
    run.param("top_fraction", num(spec.top_fraction));
    run.param("noise_per_row", num(spec.noise_per_row));
  } else {
    run.param("power", num(spec.power));
    run.param("density", num(spec.density));
    run.param("draws", std::to_string(data.draws));
  }
  run.manifest.seeds.emplace_back("generate", f.seed);
  run.finish(f.out);
  out << "users\t" << data.ratings.users() << "\nitems\t" << data.ratings.items()
      << "\nnnz\t" << data.ratings.nnz() << '\n';
}

// ---------------------------------------------------------------- train

struct TrainCommand {
  InputFlags input;
  TrainFlags train;
  Index min_user_items = 0;
  Index min_item_users = 0;
  Index holdout = 0;
  Index min_remaining = 1;
  std::optional<std::uint64_t> holdout_seed;
  std::string train_out, test_out, trace_out, out;
  std::optional<Index> workers;
  std::string blocks;
  bool verify_ownership = false;
};

std::pair<Index, Index> parse_blocks(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x != std::string::npos) {
      std::size_t a = 0, b = 0;
      const long d1 = std::stol(text.substr(0, x), &a);
      const long d2 = std::stol(text.substr(x + 1), &b);
      if (a == x && b == text.size() - x - 1) return {d1, d2};
    }
  } catch (const std::logic_error&) {
  }
  throw ParameterError("blocks must look like d1xd2, got '" + text + "'");
}

void run_train(const TrainCommand& f, const std::vector<std::string>& args,
               std::ostream& out) {
  Run run("train", args);
  ImplicitRatings ratings = read_input(run, f.input);
  if (f.min_user_items > 0 || f.min_item_users > 0) {
    ratings = filter_sparse(ratings, f.min_user_items, f.min_item_users).ratings;
    run.param("min_user_items", std::to_string(f.min_user_items));
    run.param("min_item_users", std::to_string(f.min_item_users));
  }
  const TrainConfig cfg = to_config(f.train);
  if (f.holdout > 0) {
    const std::uint64_t hseed = f.holdout_seed ? *f.holdout_seed : cfg.seed;
    HoldoutSplit split = split_holdout(ratings, f.holdout, f.min_remaining, hseed);
    run.param("holdout", std::to_string(f.holdout));
    run.param("min_remaining", std::to_string(f.min_remaining));
    run.param("holdout_skipped_users", std::to_string(split.skipped.size()));
    run.manifest.seeds.emplace_back("holdout", hseed);
    if (!f.test_out.empty()) {
      save_ratings(split.test_matrix(), f.test_out);
      run.manifest.add_output(f.test_out);
    }
    ratings = std::move(split.train);
    if (!f.train_out.empty()) {
      save_ratings(ratings, f.train_out);
      run.manifest.add_output(f.train_out);
    }
  } else if (!f.train_out.empty() || !f.test_out.empty()) {
    throw ParameterError("--train-out and --test-out need --holdout");
  }
  record_config(run, cfg);

  const Index workers = f.workers ? *f.workers : default_workers();
  if (workers < 1) throw ParameterError("workers must be >= 1");
  TrainReport report;
  if (workers == 1 && f.blocks.empty() && !f.verify_ownership) {
    run.param("trainer", "serial");
    report = train(ratings, cfg);
  } else {
    ParallelConfig pc;
    pc.workers = workers;
    pc.d1 = pc.d2 = workers;
    if (!f.blocks.empty()) std::tie(pc.d1, pc.d2) = parse_blocks(f.blocks);
    pc.verify_ownership = f.verify_ownership;
    run.param("trainer", "parallel");
    run.param("workers", std::to_string(pc.workers));
    run.param("blocks", std::to_string(pc.d1) + "x" + std::to_string(pc.d2));
    report = train_parallel(ratings, cfg, pc);
    run.param("skipped_block_users", std::to_string(report.skipped_block_users));
    if (pc.verify_ownership)
      run.param("ownership_conflicts", std::to_string(report.ownership_conflicts));
  }
  save_factors(report.model, f.out);
  run.manifest.add_output(f.out);
  if (!f.trace_out.empty()) {
    std::ofstream t = open_out(f.trace_out);
    t << "iteration\tobjective\n";
    for (const auto& [s, v] : report.trace) t << s << '\t' << num(v) << '\n';
    close_out(t, f.trace_out);
    run.manifest.add_output(f.trace_out);
  }
  run.param("termination", to_string(report.reason));
  run.param("iterations_run", std::to_string(report.iterations));
  run.finish(f.out);

  double seconds = 0.0;
  for (double s : report.iteration_seconds) seconds += s;
  out << "iterations\t" << report.iterations << "\ntermination\t" << to_string(report.reason)
      << "\nobjective\t" << num(report.trace.back().second) << "\ntrain_seconds\t"
      << short_num(seconds) << '\n';
  if (report.skipped_block_users > 0)
    out << "skipped_block_users\t" << report.skipped_block_users << '\n';
  if (f.verify_ownership) out << "ownership_conflicts\t" << report.ownership_conflicts << '\n';
}

// ---------------------------------------------------------------- evaluate

struct EvaluateCommand {
  std::string model_path;
  InputFlags train;
  std::string test;
  std::vector<Index> cutoffs{1, 3, 5};
  double local_t = 0.2;
  double tpr_fpr = 0.2;
  std::string roc_out;
  double max_fpr = 1.0;
  Index points = 101;
  bool objective = false;
  ModelFlags model;
  std::string out;
};

ImplicitRatings union_of(const ImplicitRatings& a, const ImplicitRatings& b) {
  std::vector<std::vector<Index>> rows = a.to_rows();
  for (Index i = 0; i < b.users(); ++i)
    for (Index j : b.row(i))
      if (!a.contains(i, j)) rows[i].push_back(j);
  return ImplicitRatings(a.users(), a.items(), rows);
}

void run_evaluate(const EvaluateCommand& f, const std::vector<std::string>& args,
                  std::ostream& out) {
  Run run("evaluate", args);
  const FactorModeld model = load_factors(f.model_path);
  run.manifest.add_input(f.model_path);
  const ImplicitRatings train = read_input(run, f.train);
  check_shape(model, train, "training matrix");
  const ScoreMatrix scores = score_matrix(model);

  std::vector<std::pair<std::string, std::string>> rows;
  rows.emplace_back("auc_train", short_num(empirical_auc(scores, train).value));
  if (!f.test.empty()) {
    const ImplicitRatings test = load_ratings(f.test);
    run.manifest.add_input(f.test);
    check_shape(model, test, "test matrix");
    std::vector<std::vector<Index>> heldout(test.users());
    for (Index i = 0; i < test.users(); ++i)
      heldout[i].assign(test.row(i).begin(), test.row(i).end());
    const PrecisionRecall pr = precision_recall_at(scores, train, heldout, f.cutoffs);
    rows.emplace_back("users_heldout", std::to_string(pr.users));
    rows.emplace_back("auc_heldout", short_num(heldout_auc(scores, train, heldout)));
    rows.emplace_back("local_auc", short_num(local_auc(scores, union_of(train, test), f.local_t)));
    for (std::size_t c = 0; c < pr.cutoffs.size(); ++c) {
      const std::string at = "@" + std::to_string(pr.cutoffs[c]);
      rows.emplace_back("precision" + at, short_num(pr.precision[c]));
      rows.emplace_back("recall" + at, short_num(pr.recall[c]));
      rows.emplace_back("f1" + at, short_num(pr.f1[c]));
    }
    rows.emplace_back("tpr@fpr" + short_num(f.tpr_fpr),
                      short_num(heldout_tpr_at(scores, train, heldout, f.tpr_fpr)));
    if (!f.roc_out.empty()) {
      const RocCurve roc = mean_heldout_roc(scores, train, heldout, f.max_fpr, f.points);
      std::ofstream r = open_out(f.roc_out);
      r << "fpr\ttpr\n";
      for (const auto& [x, y] : roc) r << num(x) << '\t' << num(y) << '\n';
      close_out(r, f.roc_out);
      run.manifest.add_output(f.roc_out);
    }
  } else {
    if (!f.roc_out.empty()) throw ParameterError("--roc-out needs --test");
    rows.emplace_back("local_auc", short_num(local_auc(scores, train, f.local_t)));
  }
  if (f.objective) {
    train.require_nondegenerate();
    const ItemDistributions dists(train, f.model.tau);
    const LossSpec loss{parse_loss_kind(f.model.loss), f.model.beta};
    const WeightSpec weight{parse_weight_kind(f.model.weight), f.model.rho};
    validate_combination(loss, weight);
    if (!(f.model.lambda >= 0.0)) throw ParameterError("lambda must be >= 0");
    const RankingObjective obj{train, dists, loss, weight, f.model.lambda};
    rows.emplace_back("objective", num(objective_full(model, obj)));
  }
  write_tsv(out, rows);
  if (!f.out.empty()) {
    std::ofstream o = open_out(f.out);
    write_tsv(o, rows);
    close_out(o, f.out);
    run.manifest.add_output(f.out);
    run.finish(f.out);
  } else if (!f.roc_out.empty()) {
    run.finish(f.roc_out);
  }
}

// ---------------------------------------------------------------- roc

struct RocCommand {
  std::string model_path;
  InputFlags train;
  std::string test;
  double max_fpr = 1.0;
  Index points = 101;
  std::string out;
};

void run_roc(const RocCommand& f, const std::vector<std::string>& args, std::ostream& out) {
  Run run("roc", args);
  const FactorModeld model = load_factors(f.model_path);
  run.manifest.add_input(f.model_path);
  const ImplicitRatings train = read_input(run, f.train);
  const ImplicitRatings test = load_ratings(f.test);
  run.manifest.add_input(f.test);
  check_shape(model, train, "training matrix");
  check_shape(model, test, "test matrix");
  std::vector<std::vector<Index>> heldout(test.users());
  for (Index i = 0; i < test.users(); ++i)
    heldout[i].assign(test.row(i).begin(), test.row(i).end());
  const RocCurve roc =
      mean_heldout_roc(score_matrix(model), train, heldout, f.max_fpr, f.points);
  std::ofstream o = open_out(f.out);
  o << "fpr\ttpr\n";
  for (const auto& [x, y] : roc) o << num(x) << '\t' << num(y) << '\n';
  close_out(o, f.out);
  run.manifest.add_output(f.out);
  run.param("max_fpr", num(f.max_fpr));
  run.param("points", std::to_string(f.points));
  run.finish(f.out);
  out << "area\t" << short_num(curve_area(roc)) << '\n';
}

// ---------------------------------------------------------------- tune

struct TuneCommand {
  InputFlags input;
  TrainFlags train;
  std::string grid;
  std::optional<Index> folds, validation_items, cutoff, max_ratings;
  std::optional<Index> workers;
  std::string out;
  std::string table;
};

void run_tune(const TuneCommand& f, const std::vector<std::string>& args, std::ostream& out) {
  Run run("tune", args);
  const ImplicitRatings ratings = read_input(run, f.input);
  Grid grid = load_grid(f.grid);
  run.manifest.add_input(f.grid);
  if (f.folds) grid.folds = *f.folds;
  if (f.validation_items) grid.validation_items = *f.validation_items;
  if (f.cutoff) grid.cutoff = *f.cutoff;
  if (f.max_ratings) grid.max_ratings = *f.max_ratings;
  grid.validate();
  const TrainConfig base = to_config(f.train);
  record_config(run, base);
  const Index workers = f.workers ? *f.workers : default_workers();
  if (workers < 1) throw ParameterError("workers must be >= 1");
  run.param("folds", std::to_string(grid.folds));
  run.param("validation_items", std::to_string(grid.validation_items));
  run.param("cutoff", std::to_string(grid.cutoff));
  run.param("max_ratings", std::to_string(grid.max_ratings));
  const TuningResult result = grid_search(ratings, grid, base, base.seed, workers);
  save_best(result, f.out);
  run.manifest.add_output(f.out);
  if (!f.table.empty()) {
    std::ofstream t = open_out(f.table);
    t << "point\talpha\tlambda\tk\tloss\tbeta\tweight\trho";
    for (Index fold = 0; fold < grid.folds; ++fold) t << "\tf1_fold" << fold;
    t << "\tf1_mean\tfailure\n";
    for (std::size_t p = 0; p < result.points.size(); ++p) {
      const TrainConfig& c = result.points[p];
      t << p << '\t' << num(c.alpha) << '\t' << num(c.lambda) << '\t' << c.k << '\t'
        << to_string(c.loss.kind) << '\t' << num(c.loss.beta) << '\t'
        << to_string(c.weight.kind) << '\t' << num(c.weight.rho);
      for (double s : result.fold_scores[p]) t << '\t' << num(s);
      t << '\t' << num(result.mean_scores[p]) << '\t' << result.failures[p] << '\n';
    }
    close_out(t, f.table);
    run.manifest.add_output(f.table);
  }
  run.finish(f.out);
  const TrainConfig& b = result.best_config;
  out << "best_point\t" << result.best << "\nalpha\t" << num(b.alpha) << "\nlambda\t"
      << num(b.lambda) << "\nk\t" << b.k << "\nloss\t" << to_string(b.loss.kind) << "\nf1\t"
      << short_num(result.best_score) << '\n';
}

// ---------------------------------------------------------------- bound

struct BoundCommand {
  InputFlags input;
  BoundInputs bound;
  std::string method = "auto";
  std::string out;
};

void run_bound(const BoundCommand& f, const std::vector<std::string>& args, std::ostream& out) {
  Run run("bound", args);
  const ImplicitRatings ratings = read_input(run, f.input);
  NormMethod method;
  if (f.method == "auto") method = NormMethod::automatic;
  else if (f.method == "power") method = NormMethod::power;
  else if (f.method == "dense") method = NormMethod::dense;
  else throw ParameterError("unknown norm method '" + f.method + "'");
  const BoundTerms t = rademacher_bound(ratings, f.bound, method);
  const std::vector<std::pair<std::string, std::string>> rows = {
      {"complexity", num(t.complexity)},
      {"deviation", num(t.deviation)},
      {"total", num(t.total)},
      {"deviation_half", num(t.deviation_half)},
      {"spectral_norm", num(t.spectral_norm)}};
  for (const auto& [k, v] : rows) out << k << '\t' << v << '\n';
  if (!f.out.empty()) {
    std::ofstream o = open_out(f.out);
    write_tsv(o, rows);
    close_out(o, f.out);
    run.manifest.add_output(f.out);
    run.param("B", num(f.bound.B));
    run.param("R_U", num(f.bound.R_U));
    run.param("R_V", num(f.bound.R_V));
    run.param("delta", num(f.bound.delta));
    run.param("method", f.method);
    run.finish(f.out);
  }
}

// ---------------------------------------------------------------- replay

struct ReplayCommand {
  std::string manifest;
  bool verify = false;
};

int run_replay(const ReplayCommand& f, std::ostream& out, std::ostream& err) {
  const ExperimentManifest m = ExperimentManifest::load(f.manifest);
  if (m.args.empty() || m.args.front() == "replay")
    throw ParameterError("manifest '" + f.manifest + "' holds no replayable command");
  const fs::path here = fs::current_path();
  const auto cwd = m.param("cwd");
  if (cwd) fs::current_path(*cwd);
  int code = 0;
  try {
    code = dispatch(m.args, out, err);
    if (code == 0 && f.verify) {
      for (const auto& [path, digest] : m.outputs) {
        const std::string now = fs::exists(path) ? file_digest(path) : "missing";
        const bool same = now == digest;
        out << (same ? "match\t" : "mismatch\t") << path << '\n';
        if (!same) code = 2;
      }
    }
  } catch (...) {
    fs::current_path(here);
    throw;
  }
  fs::current_path(here);
  return code;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ranking matrix factorisation for implicit feedback", "mfauc"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);

  GenerateFlags gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic rating matrix");
  g->add_option("--variant", gen.variant, "1 (low-rank threshold) or 2 (Zipf sampling)")
      ->capture_default_str();
  g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output MatrixMarket file")->required();
  g->add_option("--truth", gen.truth, "Ground-truth factor file");
  g->add_option("--m", gen.m, "Users");
  g->add_option("--n", gen.n, "Items");
  g->add_option("--k", gen.k, "Ground-truth rank");
  g->add_option("--top-fraction", gen.top_fraction, "Kept fraction per row (variant 1)");
  g->add_option("--noise", gen.noise, "Mean uniform extras per row (variant 1)");
  g->add_option("--power", gen.power, "Zipf exponent (variant 2)");
  g->add_option("--density", gen.density, "Target density (variant 2)");
  g->add_option("--max-draws", gen.max_draws, "Draw limit (variant 2)");

  TrainCommand tr;
  auto* t = app.add_subcommand("train", "Fit user and item factors");
  add_input_flags(t, tr.input);
  add_train_flags(t, tr.train);
  t->add_option("--min-user-items", tr.min_user_items, "Drop sparser users")
      ->capture_default_str();
  t->add_option("--min-item-users", tr.min_item_users, "Drop sparser items")
      ->capture_default_str();
  t->add_option("--holdout", tr.holdout, "Relevant items withheld per user")
      ->capture_default_str();
  t->add_option("--min-remaining", tr.min_remaining, "Items a user keeps after holdout")
      ->capture_default_str();
  t->add_option("--holdout-seed", tr.holdout_seed, "Holdout seed (default: --seed)");
  t->add_option("--train-out", tr.train_out, "Training part of the split");
  t->add_option("--test-out", tr.test_out, "Withheld part of the split");
  t->add_option("--trace-out", tr.trace_out, "Objective trace TSV");
  t->add_option("--out", tr.out, "Model file")->required();
  t->add_option("--workers", tr.workers, "Worker threads (default MFAUC_WORKERS or 1)");
  t->add_option("--blocks", tr.blocks, "Block grid d1xd2 (default WxW)");
  t->add_flag("--verify-ownership", tr.verify_ownership, "Count row ownership conflicts");

  EvaluateCommand ev;
  auto* e = app.add_subcommand("evaluate", "Ranking metrics of a model");
  e->add_option("--model", ev.model_path, "Model file")->required();
  add_input_flags(e, ev.train, "--train");
  e->add_option("--test", ev.test, "Withheld relevant items");
  e->add_option("--cutoffs", ev.cutoffs, "Precision/recall cutoffs")
      ->delimiter(',')
      ->capture_default_str();
  e->add_option("--local-t", ev.local_t, "Local AUC quantile")->capture_default_str();
  e->add_option("--tpr-fpr", ev.tpr_fpr, "FPR at which TPR is reported")
      ->capture_default_str();
  e->add_option("--roc-out", ev.roc_out, "Mean held-out ROC TSV");
  e->add_option("--max-fpr", ev.max_fpr, "ROC truncation")->capture_default_str();
  e->add_option("--points", ev.points, "ROC points")->capture_default_str();
  e->add_flag("--objective", ev.objective, "Also report the training objective");
  add_model_flags(e, ev.model);
  e->add_option("--out", ev.out, "Metric table TSV");

  RocCommand rc;
  auto* r = app.add_subcommand("roc", "Mean held-out ROC curve");
  r->add_option("--model", rc.model_path, "Model file")->required();
  add_input_flags(r, rc.train, "--train");
  r->add_option("--test", rc.test, "Withheld relevant items")->required();
  r->add_option("--max-fpr", rc.max_fpr, "ROC truncation")->capture_default_str();
  r->add_option("--points", rc.points, "Evenly spaced FPR values")->capture_default_str();
  r->add_option("--out", rc.out, "ROC TSV")->required();

  TuneCommand tu;
  auto* u = app.add_subcommand("tune", "Cross-validated grid search");
  add_input_flags(u, tu.input);
  add_train_flags(u, tu.train);
  u->add_option("--grid", tu.grid, "Grid file")->required();
  u->add_option("--folds", tu.folds, "Folds (overrides the grid file)");
  u->add_option("--validation-items", tu.validation_items, "Validation items per user");
  u->add_option("--cutoff", tu.cutoff, "F1 cutoff");
  u->add_option("--max-ratings", tu.max_ratings, "Sequential-user subsample size");
  u->add_option("--workers", tu.workers, "Concurrent training jobs");
  u->add_option("--out", tu.out, "Best hyperparameters")->required();
  u->add_option("--table", tu.table, "Score table TSV");

  BoundCommand bd;
  auto* b = app.add_subcommand("bound", "Generalisation bound terms");
  add_input_flags(b, bd.input);
  b->add_option("--B", bd.bound.B, "Loss Lipschitz constant")->capture_default_str();
  b->add_option("--ru", bd.bound.R_U, "Frobenius radius of U")->capture_default_str();
  b->add_option("--rv", bd.bound.R_V, "Frobenius radius of V")->capture_default_str();
  b->add_option("--delta", bd.bound.delta, "Failure probability")->capture_default_str();
  b->add_option("--method", bd.method, "auto|power|dense")->capture_default_str();
  b->add_option("--out", bd.out, "Bound table TSV");

  ReplayCommand rp;
  auto* p = app.add_subcommand("replay", "Rerun the command recorded in a manifest");
  p->add_option("--manifest", rp.manifest, "Manifest file")->required();
  p->add_flag("--verify", rp.verify, "Compare output digests with the manifest");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    if (ex.get_exit_code() == 0) {
      app.exit(ex, out, err);
      return 0;
    }
    err << "error: " << ex.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (g->parsed()) run_generate(gen, args, out);
    else if (t->parsed()) run_train(tr, args, out);
    else if (e->parsed()) run_evaluate(ev, args, out);
    else if (r->parsed()) run_roc(rc, args, out);
    else if (u->parsed()) run_tune(tu, args, out);
    else if (b->parsed()) run_bound(bd, args, out);
    else if (p->parsed()) return run_replay(rp, out, err);
    return 0;
  } catch (const ValidationError& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  } catch (const RuntimeError& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  }
}

}  // namespace mfauc
