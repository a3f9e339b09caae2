#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "subag/subag.hpp"

namespace subag::cli {

/// "a..b", "a..b:step" or "a,b,c".
inline std::vector<std::size_t> parse_count_list(const std::string& text) {
  std::vector<std::size_t> out;
  auto number = [&](const std::string& s) -> std::size_t {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != s.size() || s[0] == '-') throw Error("bad count '" + s + "' in list '" + text + "'");
    return static_cast<std::size_t>(v);
  };
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto colon = text.find(':', dots);
    const std::size_t first = number(text.substr(0, dots));
    const std::size_t last = number(text.substr(dots + 2, colon == std::string::npos ? std::string::npos : colon - dots - 2));
    const std::size_t step = colon == std::string::npos ? 1 : number(text.substr(colon + 1));
    require(step >= 1 && first <= last, "bad range '" + text + "'");
    for (std::size_t v = first; v <= last; v += step) out.push_back(v);
    return out;
  }
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(number(item));
  require(!out.empty(), "empty list");
  return out;
}

inline std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_number(item));
  require(!out.empty(), "empty list");
  return out;
}

inline std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

/// Dataset CSV: header comment, `x1,...,xp,y`, one row per observation.
inline std::string dataset_csv(const Dataset& data, std::uint64_t seed) {
  std::string out = output_header(seed);
  for (std::size_t f = 0; f < data.dim(); ++f) out += "x" + std::to_string(f + 1) + ",";
  out += "y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t f = 0; f < data.dim(); ++f) out += format_number(data.x(i, f)) + ",";
    out += format_number(data.y(i)) + "\n";
  }
  return out;
}

inline Dataset parse_dataset_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t width = 0;
  std::vector<double> x, y;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_names(line);
    if (width == 0) {
      width = fields.size();
      require(width >= 2 && fields.back() == "y", "dataset header must end with column y");
      continue;
    }
    require(fields.size() == width, "dataset row has " + std::to_string(fields.size()) + " fields, expected " +
                                        std::to_string(width));
    for (std::size_t f = 0; f + 1 < width; ++f) x.push_back(parse_number(fields[f]));
    y.push_back(parse_number(fields.back()));
  }
  require(width != 0, "dataset has no header");
  return Dataset(std::move(x), std::move(y), width - 1);
}

struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;

  void add(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }
  [[nodiscard]] std::string text() const {
    std::string out;
    for (const auto& [k, v] : entries) out += k + "=" + v + "\n";
    return out;
  }
};

/// Flags shared by every `sim` subcommand.
struct SimCommon {
  std::string f = "square";
  double sigma = 0.2;
  double constant = 0.0;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::string out = ".";
  std::size_t replicates = 200;

  void attach(CLI::App& app, bool with_replicates = true) {
    app.add_option("--f", f, "regression function: square, linear or constant")->capture_default_str();
    app.add_option("--sigma", sigma, "noise standard deviation")->capture_default_str();
    app.add_option("--constant", constant, "value of the constant function")->capture_default_str();
    app.add_option("--seed", seed, "master seed")->capture_default_str();
    app.add_option("--threads", threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--out", out, "output directory")->capture_default_str();
    if (with_replicates) app.add_option("--replicates", replicates, "Monte Carlo replicates")->capture_default_str();
  }

  [[nodiscard]] Dgp dgp() const { return Dgp(parse_regression_fn(f), sigma, 1, constant); }

  void describe(Manifest& m, const std::string& name, bool with_replicates = true) const {
    m.add("subcommand", "sim " + name);
    m.add("version", std::string(version));
    m.add("seed", std::to_string(seed));
    m.add("f", f);
    m.add("sigma", format_number(sigma));
    m.add("constant", format_number(constant));
    if (with_replicates) m.add("replicates", std::to_string(replicates));
  }
};

inline void emit(const SimCommon& common, const std::string& file, const Table& table, Manifest manifest,
                 std::ostream& out, const std::string& note = {}) {
  const std::filesystem::path dir(common.out);
  const auto csv = dir / (file + ".csv");
  const auto man = dir / (file + ".manifest");
  manifest.add("output", csv.string());
  write_file(csv, to_csv(table, common.seed, note));
  write_file(man, manifest.text());
  out << "wrote " << csv.string() << "\n";
}

inline StoppingRule stopping_from(long long min_cell, long long splits) {
  if ((min_cell >= 0) == (splits >= 0)) throw CLI::ValidationError("exactly one of --min-cell and --splits is required");
  return min_cell >= 0 ? StoppingRule::min_cell_size(static_cast<std::size_t>(min_cell))
                       : StoppingRule::exact_splits(static_cast<std::size_t>(splits));
}

/// Runs the tool on `args` (program name excluded). Returns the exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Regression trees, subagging and their bias/variance experiments.", "subag-lab");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version));
  std::function<void()> action;

  // dgp ----------------------------------------------------------------------
  struct {
    std::string f = "square";
    double sigma = 0.2, constant = 0.0;
    std::size_t n = 100, dim = 1;
    std::uint64_t seed = 1;
    std::string out;
  } dgp_opts;
  auto* dgp_cmd = app.add_subcommand("dgp", "sample a dataset and print it as CSV");
  dgp_cmd->add_option("--f", dgp_opts.f, "regression function")->capture_default_str();
  dgp_cmd->add_option("--sigma", dgp_opts.sigma, "noise standard deviation")->capture_default_str();
  dgp_cmd->add_option("--constant", dgp_opts.constant, "value of the constant function")->capture_default_str();
  dgp_cmd->add_option("--n", dgp_opts.n, "sample size")->capture_default_str();
  dgp_cmd->add_option("--dim", dgp_opts.dim, "covariate dimension")->capture_default_str();
  dgp_cmd->add_option("--seed", dgp_opts.seed, "seed")->capture_default_str();
  dgp_cmd->add_option("--out", dgp_opts.out, "write to this file instead of stdout");
  dgp_cmd->callback([&] {
    action = [&] {
      const Dgp dgp(parse_regression_fn(dgp_opts.f), dgp_opts.sigma, dgp_opts.dim, dgp_opts.constant);
      const auto text = dataset_csv(sample_dataset(dgp, dgp_opts.n, derive_stream(dgp_opts.seed, 0)), dgp_opts.seed);
      if (dgp_opts.out.empty()) {
        out << text;
      } else {
        write_file(dgp_opts.out, text);
      }
    };
  });

  // grow / weights -------------------------------------------------------------
  struct {
    std::string data, out, x0;
    long long min_cell = -1, splits = -1;
    std::size_t b = 0, k = 0;
    std::uint64_t seed = 1;
  } tree_opts;
  auto* grow_cmd = app.add_subcommand("grow", "grow a tree on a dataset CSV and print it in preorder text");
  grow_cmd->add_option("--data", tree_opts.data, "dataset CSV")->required();
  grow_cmd->add_option("--min-cell", tree_opts.min_cell, "minimum cell size h");
  grow_cmd->add_option("--splits", tree_opts.splits, "exact number of splits N");
  grow_cmd->add_option("--out", tree_opts.out, "write to this file instead of stdout");
  grow_cmd->callback([&] {
    const auto stopping = stopping_from(tree_opts.min_cell, tree_opts.splits);
    action = [&, stopping] {
      const Dataset data = parse_dataset_csv(read_file(tree_opts.data));
      const std::string text = "# " + stopping.describe() + "\n" + write_tree_text(grow(data, stopping));
      if (tree_opts.out.empty()) {
        out << text;
      } else {
        write_file(tree_opts.out, text);
      }
    };
  });

  auto* weights_cmd = app.add_subcommand("weights", "print the weights of each observation at x0");
  weights_cmd->add_option("--data", tree_opts.data, "dataset CSV")->required();
  weights_cmd->add_option("--x0", tree_opts.x0, "query point, comma separated")->required();
  weights_cmd->add_option("--min-cell", tree_opts.min_cell, "minimum cell size h");
  weights_cmd->add_option("--splits", tree_opts.splits, "exact number of splits N");
  weights_cmd->add_option("--b", tree_opts.b, "subagging: number of subsamples (0 for a single tree)");
  weights_cmd->add_option("--k", tree_opts.k, "subagging: subsample size (default n/2)");
  weights_cmd->add_option("--seed", tree_opts.seed, "subagging seed")->capture_default_str();
  weights_cmd->callback([&] {
    const auto stopping = stopping_from(tree_opts.min_cell, tree_opts.splits);
    action = [&, stopping] {
      const Dataset data = parse_dataset_csv(read_file(tree_opts.data));
      const auto x0 = parse_real_list(tree_opts.x0);
      require(x0.size() == data.dim(), "x0 dimension does not match the dataset");
      WeightVector w;
      if (tree_opts.b == 0) {
        w = grow(data, stopping).weights(x0);
      } else {
        const std::size_t k = tree_opts.k ? tree_opts.k : std::max<std::size_t>(1, data.size() / 2);
        w = fit_ensemble(data, ResamplePlan::subagging(k, tree_opts.b), stopping, derive_stream(tree_opts.seed, 0))
                .weights(x0);
      }
      out << output_header(tree_opts.seed) << "i,w\n";
      for (std::size_t i = 0; i < w.size(); ++i) out << i << "," << format_number(w[i]) << "\n";
    };
  });

  // predict --------------------------------------------------------------------
  struct {
    std::string tree, x0;
  } predict_opts;
  auto* predict_cmd = app.add_subcommand("predict", "predict at x0 with a tree written by grow");
  predict_cmd->add_option("--tree", predict_opts.tree, "tree text file")->required();
  predict_cmd->add_option("--x0", predict_opts.x0, "query point, comma separated")->required();
  predict_cmd->callback([&] {
    action = [&] {
      const auto x0 = parse_real_list(predict_opts.x0);
      for (double v : x0) require(v >= 0.0 && v <= 1.0, "x0 must lie in [0,1]");
      const Tree tree = read_tree_text(read_file(predict_opts.tree), x0.size());
      out << format_number(tree.predict(x0)) << "\n";
    };
  });

  // oracle ---------------------------------------------------------------------
  auto* oracle_cmd = app.add_subcommand("oracle", "population and brute-force references");
  oracle_cmd->require_subcommand(1);
  struct {
    std::string f = "square";
    double constant = 0.0, lo = 0.0, hi = 1.0;
    std::size_t n = 4, k = 2, instances = 1000;
    std::uint64_t seed = 1;
    bool list = false;
  } oracle_opts;
  auto* argmax_cmd = oracle_cmd->add_subcommand("argmax", "maximizer of the population criterion on [lo, hi]");
  argmax_cmd->add_option("--f", oracle_opts.f, "regression function")->capture_default_str();
  argmax_cmd->add_option("--constant", oracle_opts.constant, "value of the constant function");
  argmax_cmd->add_option("--lo", oracle_opts.lo, "cell lower bound")->capture_default_str();
  argmax_cmd->add_option("--hi", oracle_opts.hi, "cell upper bound")->capture_default_str();
  argmax_cmd->callback([&] {
    action = [&] {
      const Dgp dgp(parse_regression_fn(oracle_opts.f), 0.0, 1, oracle_opts.constant);
      const Split s = population_argmax(as_point_function(dgp), PopulationCell::interval(oracle_opts.lo, oracle_opts.hi));
      std::ostringstream line;
      line << std::fixed << std::setprecision(4) << s.threshold;
      out << line.str() << "\n";
    };
  });
  auto* enumerate_cmd = oracle_cmd->add_subcommand("enumerate", "all k-subsets of n rows");
  enumerate_cmd->add_option("--n", oracle_opts.n, "rows")->capture_default_str();
  enumerate_cmd->add_option("--k", oracle_opts.k, "subset size")->capture_default_str();
  enumerate_cmd->add_flag("--list", oracle_opts.list, "print every subset");
  enumerate_cmd->callback([&] {
    action = [&] {
      const auto subsets = enumerate_subsamples(oracle_opts.n, oracle_opts.k);
      out << "count=" << subsets.size() << "\n";
      if (!oracle_opts.list) return;
      for (const auto& s : subsets) {
        for (std::size_t j = 0; j < s.size(); ++j) out << (j ? " " : "") << s[j];
        out << "\n";
      }
    };
  });
  auto* prop1_cmd = oracle_cmd->add_subcommand("check-prop1", "compare both criterion forms on random cells");
  auto* prop2_cmd = oracle_cmd->add_subcommand("check-prop2", "check the criterion is non-constant on random cells");
  for (auto* cmd : {prop1_cmd, prop2_cmd}) {
    cmd->add_option("--instances", oracle_opts.instances, "random instances")->capture_default_str();
    cmd->add_option("--seed", oracle_opts.seed, "seed")->capture_default_str();
  }
  prop1_cmd->callback([&] {
    action = [&] {
      auto rng = derive_stream(oracle_opts.seed, 0);
      double worst = 0.0;
      for (std::size_t t = 0; t < oracle_opts.instances; ++t) {
        auto engine = rng.child(t).engine();
        const std::size_t n = 2 + engine.below(199);
        const Dataset data = sample_dataset(Dgp(RegressionFn::square, 0.5), n, rng.child(t).child(1));
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = i;
        const auto candidates = candidate_splits(data, rows);
        if (candidates.empty()) continue;
        const Split s = candidates[engine.below(candidates.size())];
        const double a = criterion_decrease_form(data, rows, s);
        const double b = criterion_product_form(data, rows, s);
        worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}));
      }
      out << "instances=" << oracle_opts.instances << " max_rel_diff=" << format_number(worst) << "\n";
      if (worst > 1e-10) throw Error("criterion forms disagree");
    };
  });
  prop2_cmd->callback([&] {
    action = [&] {
      auto rng = derive_stream(oracle_opts.seed, 0);
      std::size_t constant_cells = 0;
      for (std::size_t t = 0; t < oracle_opts.instances; ++t) {
        auto engine = rng.child(t).engine();
        const std::size_t n = 3 + engine.below(48);
        const Dataset data = sample_dataset(Dgp(RegressionFn::constant, 1.0), n, rng.child(t).child(1));
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = i;
        if (!check_criterion_nonconstant(data, rows)) ++constant_cells;
      }
      out << "instances=" << oracle_opts.instances << " constant_cells=" << constant_cells << "\n";
      if (constant_cells) throw Error("criterion constant on some cell");
    };
  });

  // sim ------------------------------------------------------------------------
  auto* sim_cmd = app.add_subcommand("sim", "Monte Carlo experiments writing CSV tables");
  sim_cmd->require_subcommand(1);
  SimCommon common;

  struct {
    std::string n_grid = "50..2000:50";
    std::string scenarios = "small,consistent,large";
    double x0 = 0.5;
  } cons;
  auto* cons_cmd = sim_cmd->add_subcommand("consistency", "minimum-cell-size trees on nested samples");
  common.attach(*cons_cmd);
  cons_cmd->add_option("--n-grid", cons.n_grid, "sample sizes")->capture_default_str();
  cons_cmd->add_option("--scenarios", cons.scenarios, "tree-size scenarios")->capture_default_str();
  cons_cmd->add_option("--x0", cons.x0, "query point")->capture_default_str();
  cons_cmd->callback([&] {
    action = [&] {
      sim::ConsistencyConfig cfg;
      cfg.dgp = common.dgp();
      cfg.n_grid = parse_count_list(cons.n_grid);
      cfg.scenarios.clear();
      for (const auto& s : split_names(cons.scenarios)) cfg.scenarios.push_back(sim::parse_scenario(s));
      cfg.replicates = common.replicates;
      cfg.x0 = cons.x0;
      cfg.seed = common.seed;
      cfg.threads = common.threads;
      Manifest m;
      common.describe(m, "consistency");
      m.add("n_grid", cons.n_grid);
      m.add("scenarios", cons.scenarios);
      m.add("x0", format_number(cons.x0));
      emit(common, "consistency", sim::consistency_table(sim::run_consistency(cfg)), m, out, "variance divisor R");
    };
  });

  struct {
    std::string n_grid = "50..2000:50";
    double alpha = 0.65, k_frac = 0.5, x0 = 0.5;
    std::size_t b = 50;
  } sc;
  auto* sc_cmd = sim_cmd->add_subcommand("subag-consistency", "consistent trees against their subagged version");
  common.attach(*sc_cmd);
  sc_cmd->add_option("--n-grid", sc.n_grid, "sample sizes")->capture_default_str();
  sc_cmd->add_option("--alpha", sc.alpha, "minimum cell size exponent")->capture_default_str();
  sc_cmd->add_option("--b", sc.b, "subsamples per ensemble")->capture_default_str();
  sc_cmd->add_option("--k-frac", sc.k_frac, "subsample size as a fraction of n")->capture_default_str();
  sc_cmd->add_option("--x0", sc.x0, "query point")->capture_default_str();
  sc_cmd->callback([&] {
    action = [&] {
      sim::SubagConsistencyConfig cfg;
      cfg.dgp = common.dgp();
      cfg.n_grid = parse_count_list(sc.n_grid);
      cfg.alpha = sc.alpha;
      cfg.replicates = common.replicates;
      cfg.resamples = sc.b;
      cfg.k_frac = sc.k_frac;
      cfg.x0 = sc.x0;
      cfg.seed = common.seed;
      cfg.threads = common.threads;
      Manifest m;
      common.describe(m, "subag-consistency");
      m.add("n_grid", sc.n_grid);
      m.add("alpha", format_number(sc.alpha));
      m.add("b", std::to_string(sc.b));
      m.add("k_frac", format_number(sc.k_frac));
      m.add("x0", format_number(sc.x0));
      emit(common, "subag_consistency", sim::subag_consistency_table(sim::run_subag_consistency(cfg)), m, out,
           "variance divisor R");
    };
  });

  struct {
    std::size_t n = 100, b = 50, k = 50;
    std::string x0_list = "0.1,0.5,0.6";
  } sw;
  auto* sw_cmd = sim_cmd->add_subcommand("stump-weights", "stump and subagged-stump weights on one sample");
  common.attach(*sw_cmd, false);
  sw_cmd->add_option("--n", sw.n, "sample size")->capture_default_str();
  sw_cmd->add_option("--b", sw.b, "subsamples")->capture_default_str();
  sw_cmd->add_option("--k", sw.k, "subsample size")->capture_default_str();
  sw_cmd->add_option("--x0-list", sw.x0_list, "query points")->capture_default_str();
  sw_cmd->callback([&] {
    action = [&] {
      sim::StumpWeightsConfig cfg;
      cfg.dgp = common.dgp();
      cfg.n = sw.n;
      cfg.resamples = sw.b;
      cfg.k = sw.k;
      cfg.x0_list = parse_real_list(sw.x0_list);
      cfg.seed = common.seed;
      Manifest m;
      common.describe(m, "stump-weights", false);
      m.add("n", std::to_string(sw.n));
      m.add("b", std::to_string(sw.b));
      m.add("k", std::to_string(sw.k));
      m.add("x0_list", sw.x0_list);
      const auto result = sim::run_stump_weights(cfg);
      emit(common, "stump_weights", sim::stump_weights_table(result), m, out,
           "stump split " + format_number(result.split));
    };
  });

  struct {
    std::size_t n = 100, b = 50, k = 50, n_splits = 1, grid = 100, max_splits = 49,
                optimal_max_splits = 40;
    std::string n_splits_range = "1..49", n_grid = "50,100,200,400,800", variants = "k20,k50,k95,bagging";
    std::string theorem_grid = "100,200,500,1000,2000";
    double k_frac = 0.5, alpha = 0.65, x0 = 0.5;
    long long h = -1;
  } so;
  auto grid_of = [&](std::size_t size) {
    require(size >= 1, "grid size must be at least 1");
    std::vector<double> g(size);
    for (std::size_t j = 0; j < size; ++j) g[j] = (static_cast<double>(j) + 0.5) / static_cast<double>(size);
    return g;
  };

  auto* pw_cmd = sim_cmd->add_subcommand("pointwise", "bias, variance and mse along x0 for fixed N");
  common.attach(*pw_cmd);
  pw_cmd->add_option("--n", so.n, "sample size")->capture_default_str();
  pw_cmd->add_option("--n-splits", so.n_splits, "number of splits N")->capture_default_str();
  pw_cmd->add_option("--b", so.b, "subsamples")->capture_default_str();
  pw_cmd->add_option("--k", so.k, "subsample size")->capture_default_str();
  pw_cmd->add_option("--grid", so.grid, "number of x0 grid points")->capture_default_str();
  pw_cmd->callback([&] {
    action = [&] {
      sim::PointwiseConfig cfg;
      cfg.dgp = common.dgp();
      cfg.n = so.n;
      cfg.n_splits = so.n_splits;
      cfg.replicates = common.replicates;
      cfg.resamples = so.b;
      cfg.k = so.k;
      cfg.x0_grid = grid_of(so.grid);
      cfg.seed = common.seed;
      cfg.threads = common.threads;
      Manifest m;
      common.describe(m, "pointwise");
      m.add("n", std::to_string(so.n));
      m.add("n_splits", std::to_string(so.n_splits));
      m.add("b", std::to_string(so.b));
      m.add("k", std::to_string(so.k));
      m.add("grid", std::to_string(so.grid));
      emit(common, "pointwise", sim::pointwise_table(sim::run_pointwise_bias_variance(cfg)), m, out,
           "variance divisor R");
    };
  });

  auto* sweep_cmd = sim_cmd->add_subcommand("sweep", "grid-averaged performance against the number of splits");
  common.attach(*sweep_cmd);
  sweep_cmd->add_option("--n", so.n, "sample size")->capture_default_str();
  sweep_cmd->add_option("--n-splits", so.n_splits_range, "split counts")->capture_default_str();
  sweep_cmd->add_option("--b", so.b, "subsamples")->capture_default_str();
  sweep_cmd->add_option("--k", so.k, "subsample size")->capture_default_str();
  sweep_cmd->add_option("--grid", so.grid, "number of x0 grid points")->capture_default_str();
  sweep_cmd->callback([&] {
    action = [&] {
      sim::SweepConfig cfg;
      cfg.n = so.n;
      cfg.replicates = common.replicates;
      cfg.resamples = so.b;
      cfg.k = so.k;
      cfg.n_splits = parse_count_list(so.n_splits_range);
      cfg.x0_grid = grid_of(so.grid);
      cfg.seed = common.seed;
      cfg.threads = common.threads;
      Manifest m;
      common.describe(m, "sweep");
      m.add("n", std::to_string(so.n));
      m.add("n_splits", so.n_splits_range);
      m.add("b", std::to_string(so.b));
      m.add("k", std::to_string(so.k));
      m.add("grid", std::to_string(so.grid));
      emit(common, "sweep", sim::sweep_table(sim::run_split_sweep(cfg, common.dgp())), m, out,
           "percent; variance divisor R");
    };
  });

  auto* opt_cmd = sim_cmd->add_subcommand("optimal-n", "optimal number of splits against n");
  common.attach(*opt_cmd);
  opt_cmd->add_option("--n-grid", so.n_grid, "sample sizes")->capture_default_str();
  opt_cmd->add_option("--b", so.b, "subsamples")->capture_default_str();
  opt_cmd->add_option("--k-frac", so.k_frac, "subsample size as a fraction of n")->capture_default_str();
  opt_cmd->add_option("--max-splits", so.optimal_max_splits, "largest split count searched")->capture_default_str();
  opt_cmd->add_option("--grid", so.grid, "number of x0 grid points")->capture_default_str();
  opt_cmd->callback([&] {
    action = [&] {
      sim::OptimalConfig cfg;
      cfg.dgp = common.dgp();
      cfg.n_grid = parse_count_list(so.n_grid);
      cfg.replicates = common.replicates;
      cfg.resamples = so.b;
      cfg.k_frac = so.k_frac;
      cfg.max_splits = so.optimal_max_splits;
      cfg.x0_grid = grid_of(so.grid);
      cfg.seed = common.seed;
      cfg.threads = common.threads;
      Manifest m;
      common.describe(m, "optimal-n");
      m.add("n_grid", so.n_grid);
      m.add("b", std::to_string(so.b));
      m.add("k_frac", format_number(so.k_frac));
      m.add("max_splits", std::to_string(so.optimal_max_splits));
      m.add("grid", std::to_string(so.grid));
      emit(common, "optimal", sim::optimal_table(sim::run_optimal_splits_vs_n(cfg)), m, out, "percent");
    };
  });

  auto* rob_cmd = sim_cmd->add_subcommand("robustness", "subsample size and bagging against the number of splits");
  common.attach(*rob_cmd);
  rob_cmd->add_option("--n", so.n, "sample size")->capture_default_str();
  rob_cmd->add_option("--b", so.b, "resamples")->capture_default_str();
  rob_cmd->add_option("--variants", so.variants, "k20, k50, k95, bagging")->capture_default_str();
  rob_cmd->add_option("--max-splits", so.max_splits, "largest split count")->capture_default_str();
  rob_cmd->add_option("--grid", so.grid, "number of x0 grid points")->capture_default_str();
  rob_cmd->callback([&] {
    action = [&] {
      sim::RobustnessConfig cfg;
      cfg.dgp = common.dgp();
      cfg.n = so.n;
      cfg.replicates = common.replicates;
      cfg.resamples = so.b;
      cfg.variants.clear();
      for (const auto& v : split_names(so.variants)) cfg.variants.push_back(sim::parse_variant(v));
      cfg.max_splits = so.max_splits;
      cfg.x0_grid = grid_of(so.grid);
      cfg.seed = common.seed;
      cfg.threads = common.threads;
      Manifest m;
      common.describe(m, "robustness");
      m.add("n", std::to_string(so.n));
      m.add("b", std::to_string(so.b));
      m.add("variants", so.variants);
      m.add("max_splits", std::to_string(so.max_splits));
      m.add("grid", std::to_string(so.grid));
      emit(common, "robustness", sim::robustness_table(sim::run_robustness(cfg)), m, out, "percent");
    };
  });

  auto* tt_cmd = sim_cmd->add_subcommand("theorem-terms", "honest-tree mse split into its three terms");
  common.attach(*tt_cmd);
  tt_cmd->add_option("--n-grid", so.theorem_grid, "sample sizes")->capture_default_str();
  tt_cmd->add_option("--alpha", so.alpha, "minimum cell size h = n^alpha")->capture_default_str();
  tt_cmd->add_option("--min-cell", so.h, "fixed minimum cell size (overrides --alpha)");
  tt_cmd->add_option("--x0", so.x0, "query point")->capture_default_str();
  tt_cmd->callback([&] {
    action = [&] {
      std::vector<sim::TheoremTerms> rows;
      for (std::size_t n : parse_count_list(so.theorem_grid)) {
        sim::TheoremTermsConfig cfg;
        cfg.dgp = common.dgp();
        cfg.n = n;
        cfg.h = so.h >= 0 ? static_cast<std::size_t>(so.h) : std::min(sim::rounded_power(n, so.alpha), n);
        cfg.replicates = common.replicates;
        cfg.x0 = so.x0;
        cfg.seed = common.seed;
        cfg.threads = common.threads;
        rows.push_back(sim::decompose_theorem_terms(cfg));
      }
      Manifest m;
      common.describe(m, "theorem-terms");
      m.add("n_grid", so.theorem_grid);
      if (so.h >= 0) {
        m.add("h", std::to_string(so.h));
      } else {
        m.add("alpha", format_number(so.alpha));
      }
      m.add("x0", format_number(so.x0));
      emit(common, "theorem_terms", sim::theorem_terms_table(rows), m, out);
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << version << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help("", CLI::AppFormatMode::All);
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  if (!action) {
    err << app.help();
    return 2;
  }
  try {
    action();
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace subag::cli
