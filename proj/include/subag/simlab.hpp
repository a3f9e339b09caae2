#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "subag/data.hpp"
#include "subag/ensemble.hpp"
#include "subag/error.hpp"
#include "subag/oracle.hpp"
#include "subag/parallel.hpp"
#include "subag/rng.hpp"
#include "subag/stats.hpp"
#include "subag/table.hpp"
#include "subag/tree.hpp"

namespace subag::sim {

/// 100 points 0.005, 0.015, ..., 0.995.
inline std::vector<double> default_x0_grid() {
  std::vector<double> grid(100);
  for (std::size_t j = 0; j < grid.size(); ++j) grid[j] = (static_cast<double>(j) + 0.5) / 100.0;
  return grid;
}

/// Stream layout shared by every experiment. Covariates come from one stream
/// so all replicates see the same X; replicate r owns a subtree of streams
/// whose child 0 draws the noise and whose later children feed ensembles.
struct SeedStreams {
  std::uint64_t seed = 0;

  [[nodiscard]] RngStream covariates() const noexcept { return derive_stream(seed, 0); }
  [[nodiscard]] RngStream replicate(std::size_t r) const noexcept { return derive_stream(seed, 1).child(r); }
  /// Independent seed for the i-th member of a family of runs.
  [[nodiscard]] std::uint64_t sub_seed(std::size_t i) const noexcept { return derive_stream(seed, 2).child(i).key(); }
};

inline std::vector<double> point_at(const Dgp& dgp, double x0) { return std::vector<double>(dgp.dim(), x0); }

inline std::size_t rounded_power(std::size_t n, double alpha) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(n), alpha))));
}

// ---------------------------------------------------------------------------
// Tree-size scenarios

enum class Scenario { small, consistent, large };

inline Scenario parse_scenario(std::string_view name) {
  if (name == "small") return Scenario::small;
  if (name == "consistent") return Scenario::consistent;
  if (name == "large") return Scenario::large;
  throw Error("unknown scenario '" + std::string(name) + "'");
}

inline std::string_view to_string(Scenario s) noexcept {
  switch (s) {
    case Scenario::small: return "small";
    case Scenario::consistent: return "consistent";
    case Scenario::large: return "large";
  }
  return "?";
}

/// h_n = n/3, n^0.65 or 4, rounded and clamped to [1, n].
inline std::size_t min_cell_size_for(Scenario s, std::size_t n) {
  std::size_t h = 1;
  switch (s) {
    case Scenario::small: h = static_cast<std::size_t>(std::llround(static_cast<double>(n) / 3.0)); break;
    case Scenario::consistent: h = rounded_power(n, 0.65); break;
    case Scenario::large: h = 4; break;
  }
  return std::clamp<std::size_t>(h, 1, n);
}

// ---------------------------------------------------------------------------
// Consistency (minimum-cell-size trees on nested prefixes of shared X)

struct ConsistencyConfig {
  Dgp dgp{RegressionFn::square, 0.2};
  std::vector<std::size_t> n_grid;
  std::vector<Scenario> scenarios{Scenario::small, Scenario::consistent, Scenario::large};
  std::size_t replicates = 200;
  double x0 = 0.5;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct ConsistencyRow {
  Scenario scenario;
  std::size_t n;
  ReplicateStats stats;
};

inline std::vector<ConsistencyRow> run_consistency(const ConsistencyConfig& cfg) {
  require(cfg.replicates >= 2, "need at least two replicates");
  require(!cfg.n_grid.empty(), "empty n grid");
  require(cfg.x0 > 0.0 && cfg.x0 < 1.0, "x0 must be interior");
  const std::size_t n_max = *std::max_element(cfg.n_grid.begin(), cfg.n_grid.end());
  const SeedStreams streams{cfg.seed};
  const auto x = sample_covariates(cfg.dgp.dim(), n_max, streams.covariates());
  const auto point = point_at(cfg.dgp, cfg.x0);
  const std::size_t ns = cfg.scenarios.size(), nn = cfg.n_grid.size();
  std::vector<double> preds(cfg.replicates * ns * nn);

  parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
    const Dataset master = attach_responses(cfg.dgp, x, streams.replicate(r).child(0));
    for (std::size_t ni = 0; ni < nn; ++ni) {
      const Dataset data = nested_prefix(master, cfg.n_grid[ni]);
      for (std::size_t si = 0; si < ns; ++si) {
        const auto h = min_cell_size_for(cfg.scenarios[si], data.size());
        try {
          preds[(r * ns + si) * nn + ni] = grow(data, StoppingRule::min_cell_size(h)).predict(point);
        } catch (const GrowthError& e) {
          throw GrowthError("replicate " + std::to_string(r) + ", n=" + std::to_string(data.size()) + ": " + e.what());
        }
      }
    }
  });

  const double truth = cfg.dgp.f(point);
  std::vector<ConsistencyRow> rows;
  std::vector<double> column(cfg.replicates);
  for (std::size_t si = 0; si < ns; ++si) {
    for (std::size_t ni = 0; ni < nn; ++ni) {
      for (std::size_t r = 0; r < cfg.replicates; ++r) column[r] = preds[(r * ns + si) * nn + ni];
      rows.push_back({cfg.scenarios[si], cfg.n_grid[ni], ReplicateStats::from(column, truth)});
    }
  }
  return rows;
}

inline Table consistency_table(const std::vector<ConsistencyRow>& rows) {
  Table t{{"scenario", "n", "mean", "sd", "bias2", "var", "mse"}, {}};
  for (const auto& row : rows) {
    t.add({std::string(to_string(row.scenario)), static_cast<std::int64_t>(row.n), row.stats.mean,
           std::sqrt(row.stats.variance), row.stats.bias2, row.stats.variance, row.stats.mse});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Subagging consistent trees

struct SubagConsistencyConfig {
  Dgp dgp{RegressionFn::square, 0.2};
  std::vector<std::size_t> n_grid;
  double alpha = 0.65;
  std::size_t replicates = 200;
  std::size_t resamples = 50;
  double k_frac = 0.5;
  double x0 = 0.5;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct MethodRow {
  std::string method;
  std::size_t n;
  ReplicateStats stats;
};

inline std::vector<MethodRow> run_subag_consistency(const SubagConsistencyConfig& cfg) {
  require(cfg.alpha > 0.5, "alpha must exceed 1/2");
  require(cfg.replicates >= 2, "need at least two replicates");
  require(cfg.k_frac > 0.0 && cfg.k_frac <= 1.0, "k fraction must lie in (0, 1]");
  require(!cfg.n_grid.empty(), "empty n grid");
  const std::size_t n_max = *std::max_element(cfg.n_grid.begin(), cfg.n_grid.end());
  const SeedStreams streams{cfg.seed};
  const auto x = sample_covariates(cfg.dgp.dim(), n_max, streams.covariates());
  const auto point = point_at(cfg.dgp, cfg.x0);
  const std::size_t nn = cfg.n_grid.size();
  std::vector<double> tree_preds(cfg.replicates * nn), subag_preds(cfg.replicates * nn);

  parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
    const RngStream rep = streams.replicate(r);
    const Dataset master = attach_responses(cfg.dgp, x, rep.child(0));
    for (std::size_t ni = 0; ni < nn; ++ni) {
      const Dataset data = nested_prefix(master, cfg.n_grid[ni]);
      const std::size_t n = data.size();
      const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.k_frac * static_cast<double>(n))));
      try {
        tree_preds[r * nn + ni] = grow(data, StoppingRule::min_cell_size(std::min(rounded_power(n, cfg.alpha), n)))
                                      .predict(point);
        const auto ens = fit_ensemble(data, ResamplePlan::subagging(k, cfg.resamples),
                                      StoppingRule::min_cell_size(std::min(rounded_power(k, cfg.alpha), k)),
                                      rep.child(1 + ni));
        subag_preds[r * nn + ni] = ens.predict(point);
      } catch (const GrowthError& e) {
        throw GrowthError("replicate " + std::to_string(r) + ", n=" + std::to_string(n) + ": " + e.what());
      }
    }
  });

  const double truth = cfg.dgp.f(point);
  std::vector<MethodRow> rows;
  std::vector<double> column(cfg.replicates);
  for (const auto* source : {&tree_preds, &subag_preds}) {
    const std::string method = source == &tree_preds ? "tree" : "subag";
    for (std::size_t ni = 0; ni < nn; ++ni) {
      for (std::size_t r = 0; r < cfg.replicates; ++r) column[r] = (*source)[r * nn + ni];
      rows.push_back({method, cfg.n_grid[ni], ReplicateStats::from(column, truth)});
    }
  }
  return rows;
}

inline Table subag_consistency_table(const std::vector<MethodRow>& rows) {
  Table t{{"method", "n", "bias2", "var", "mse"}, {}};
  for (const auto& row : rows) {
    t.add({row.method, static_cast<std::int64_t>(row.n), row.stats.bias2, row.stats.variance, row.stats.mse});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Stump weights on one realization

struct StumpWeightsConfig {
  Dgp dgp{RegressionFn::square, 0.2};
  std::size_t n = 100;
  std::size_t resamples = 50;
  std::size_t k = 50;
  std::vector<double> x0_list{0.1, 0.5, 0.6};
  std::uint64_t seed = 1;
};

struct StumpWeightRow {
  double x0;
  std::size_t i;
  double x_i;
  double w_tree;
  double w_subag;
};

struct StumpWeights {
  /// Threshold of the full-sample stump.
  double split = 0.0;
  Dataset data;
  std::vector<StumpWeightRow> rows;
};

inline StumpWeights run_stump_weights(const StumpWeightsConfig& cfg) {
  const SeedStreams streams{cfg.seed};
  StumpWeights out;
  out.data = attach_responses(cfg.dgp, sample_covariates(cfg.dgp.dim(), cfg.n, streams.covariates()),
                              streams.replicate(0).child(0));
  const auto stump = StoppingRule::exact_splits(1);
  const Tree tree = grow(out.data, stump);
  out.split = tree.nodes()[0].split.threshold;
  const Ensemble ens =
      fit_ensemble(out.data, ResamplePlan::subagging(cfg.k, cfg.resamples), stump, streams.replicate(0).child(1));
  for (double x0 : cfg.x0_list) {
    const auto point = point_at(cfg.dgp, x0);
    const auto wt = tree.weights(point);
    const auto ws = ens.weights(point);
    for (std::size_t i = 0; i < cfg.n; ++i) out.rows.push_back({x0, i, out.data.x(i, 0), wt[i], ws[i]});
  }
  return out;
}

inline Table stump_weights_table(const StumpWeights& result) {
  Table t{{"x0", "i", "x_i", "w_tree", "w_subag"}, {}};
  for (const auto& row : result.rows) {
    t.add({row.x0, static_cast<std::int64_t>(row.i), row.x_i, row.w_tree, row.w_subag});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Split-count curves with X held fixed across replicates

/// Ensemble flavour evaluated alongside the single tree. `tag` selects the
/// replicate sub-stream, so a flavour's resamples do not depend on which
/// other flavours run with it.
struct EnsembleSpec {
  std::string name;
  ResamplePlan plan;
  std::vector<std::size_t> n_splits;
  std::size_t tag = 1;
};

/// Grid-averaged summaries for one split count.
struct CurvePoint {
  std::size_t n_splits = 0;
  double bias2 = 0.0;
  double variance = 0.0;
  double mse = 0.0;
};

struct PointwiseCell {
  std::size_t n_splits;
  double x0;
  ReplicateStats stats;
};

struct SweepOutput {
  std::vector<PointwiseCell> tree;
  std::vector<std::vector<PointwiseCell>> ensembles;
};

/// Each tree (and every subtree) is grown once to the largest requested split
/// count; smaller trees are read off the best-first growth prefix.
inline SweepOutput sweep_pointwise(const Dgp& dgp, std::size_t n, std::size_t replicates,
                                   const std::vector<std::size_t>& tree_splits, const std::vector<EnsembleSpec>& specs,
                                   const std::vector<double>& x0_grid, std::uint64_t seed, std::size_t threads) {
  require(replicates >= 2, "need at least two replicates");
  require(!x0_grid.empty(), "empty x0 grid");
  for (double x0 : x0_grid) require(x0 > 0.0 && x0 < 1.0, "x0 grid points must be interior");
  const SeedStreams streams{seed};
  const auto x = sample_covariates(dgp.dim(), n, streams.covariates());
  const std::size_t g = x0_grid.size();
  auto max_of = [](const std::vector<std::size_t>& v) { return v.empty() ? 0 : *std::max_element(v.begin(), v.end()); };

  // preds[method][r][N index * g + x0 index]; method 0 is the single tree.
  std::vector<const std::vector<std::size_t>*> splits{&tree_splits};
  for (const auto& spec : specs) splits.push_back(&spec.n_splits);
  std::vector<std::vector<std::vector<double>>> preds(splits.size(), std::vector<std::vector<double>>(replicates));

  parallel_for(replicates, threads, [&](std::size_t r) {
    const RngStream rep = streams.replicate(r);
    const Dataset data = attach_responses(dgp, x, rep.child(0));
    std::vector<double> prefix;
    auto record = [&](std::size_t method, auto&& predict_prefixes) {
      const auto& wanted = *splits[method];
      auto& out = preds[method][r];
      out.assign(wanted.size() * g, 0.0);
      prefix.assign(max_of(wanted) + 1, 0.0);
      for (std::size_t xi = 0; xi < g; ++xi) {
        predict_prefixes(point_at(dgp, x0_grid[xi]), prefix);
        for (std::size_t ni = 0; ni < wanted.size(); ++ni) out[ni * g + xi] = prefix[wanted[ni]];
      }
    };
    try {
      if (!tree_splits.empty()) {
        const Tree tree = grow(data, StoppingRule::exact_splits(max_of(tree_splits)));
        record(0, [&](const std::vector<double>& p, std::vector<double>& o) { tree.predict_prefixes(p, o); });
      }
      for (std::size_t s = 0; s < specs.size(); ++s) {
        if (specs[s].n_splits.empty()) continue;
        const Ensemble ens = fit_ensemble(data, specs[s].plan, StoppingRule::exact_splits(max_of(specs[s].n_splits)),
                                          rep.child(specs[s].tag));
        record(s + 1, [&](const std::vector<double>& p, std::vector<double>& o) { ens.predict_prefixes(p, o); });
      }
    } catch (const GrowthError& e) {
      throw GrowthError("replicate " + std::to_string(r) + ": " + e.what());
    }
  });

  auto reduce = [&](std::size_t method) {
    std::vector<PointwiseCell> cells;
    const auto& wanted = *splits[method];
    std::vector<double> column(replicates);
    for (std::size_t ni = 0; ni < wanted.size(); ++ni) {
      for (std::size_t xi = 0; xi < g; ++xi) {
        for (std::size_t r = 0; r < replicates; ++r) column[r] = preds[method][r][ni * g + xi];
        const double truth = dgp.f(point_at(dgp, x0_grid[xi]));
        cells.push_back({wanted[ni], x0_grid[xi], ReplicateStats::from(column, truth)});
      }
    }
    return cells;
  };
  SweepOutput out;
  out.tree = reduce(0);
  for (std::size_t s = 0; s < specs.size(); ++s) out.ensembles.push_back(reduce(s + 1));
  return out;
}

/// Averages pointwise cells over x0 for each split count (cells are N-major).
inline std::vector<CurvePoint> grid_average(const std::vector<PointwiseCell>& cells) {
  std::vector<CurvePoint> curve;
  for (std::size_t start = 0; start < cells.size();) {
    std::size_t end = start;
    CurvePoint p{cells[start].n_splits, 0.0, 0.0, 0.0};
    while (end < cells.size() && cells[end].n_splits == p.n_splits) {
      p.bias2 += cells[end].stats.bias2;
      p.variance += cells[end].stats.variance;
      p.mse += cells[end].stats.mse;
      ++end;
    }
    const double count = static_cast<double>(end - start);
    p.bias2 /= count;
    p.variance /= count;
    p.mse /= count;
    curve.push_back(p);
    start = end;
  }
  return curve;
}

/// Split count with the smallest mse; ties go to the smaller count.
inline CurvePoint optimum(const std::vector<CurvePoint>& curve) {
  require(!curve.empty(), "empty curve");
  CurvePoint best = curve.front();
  for (const auto& p : curve) {
    if (p.mse < best.mse || (p.mse == best.mse && p.n_splits < best.n_splits)) best = p;
  }
  return best;
}

inline const CurvePoint& at_splits(const std::vector<CurvePoint>& curve, std::size_t n_splits) {
  for (const auto& p : curve) {
    if (p.n_splits == n_splits) return p;
  }
  throw Error("curve has no point at N=" + std::to_string(n_splits));
}

inline std::vector<std::size_t> split_range(std::size_t first, std::size_t last) {
  std::vector<std::size_t> out;
  for (std::size_t n = first; n <= last; ++n) out.push_back(n);
  return out;
}

// Pointwise bias/variance for a fixed split count ---------------------------

struct PointwiseConfig {
  Dgp dgp{RegressionFn::square, 0.2};
  std::size_t n = 100;
  std::size_t n_splits = 1;
  std::size_t replicates = 200;
  std::size_t resamples = 50;
  std::size_t k = 50;
  std::vector<double> x0_grid = default_x0_grid();
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct PointwiseRow {
  std::string method;
  std::size_t n_splits;
  double x0;
  ReplicateStats stats;
};

inline std::vector<PointwiseRow> run_pointwise_bias_variance(const PointwiseConfig& cfg) {
  const EnsembleSpec subag{"subag", ResamplePlan::subagging(cfg.k, cfg.resamples), {cfg.n_splits}, 1};
  const auto out = sweep_pointwise(cfg.dgp, cfg.n, cfg.replicates, {cfg.n_splits}, {subag}, cfg.x0_grid, cfg.seed,
                                   cfg.threads);
  std::vector<PointwiseRow> rows;
  for (const auto& c : out.tree) rows.push_back({"tree", c.n_splits, c.x0, c.stats});
  for (const auto& c : out.ensembles[0]) rows.push_back({"subag", c.n_splits, c.x0, c.stats});
  return rows;
}

inline Table pointwise_table(const std::vector<PointwiseRow>& rows) {
  Table t{{"method", "N", "x0", "bias2", "var", "mse"}, {}};
  for (const auto& row : rows) {
    t.add({row.method, static_cast<std::int64_t>(row.n_splits), row.x0, row.stats.bias2, row.stats.variance,
           row.stats.mse});
  }
  return t;
}

// Global performance versus number of splits ---------------------------------

struct SweepConfig {
  std::size_t n = 100;
  std::size_t replicates = 200;
  std::size_t resamples = 50;
  std::size_t k = 50;
  std::vector<std::size_t> n_splits = split_range(1, 49);
  std::vector<double> x0_grid = default_x0_grid();
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct SweepResult {
  std::vector<CurvePoint> tree;
  std::vector<CurvePoint> subag;
};

inline SweepResult run_split_sweep(const SweepConfig& cfg, const Dgp& dgp) {
  for (std::size_t n_splits : cfg.n_splits) {
    require(n_splits + 1 <= cfg.k, "N=" + std::to_string(n_splits) + " is infeasible for subsample size " +
                                       std::to_string(cfg.k));
  }
  const EnsembleSpec subag{"subag", ResamplePlan::subagging(cfg.k, cfg.resamples), cfg.n_splits, 1};
  const auto out =
      sweep_pointwise(dgp, cfg.n, cfg.replicates, cfg.n_splits, {subag}, cfg.x0_grid, cfg.seed, cfg.threads);
  return {grid_average(out.tree), grid_average(out.ensembles[0])};
}

/// mse and its parts in percent.
inline Table sweep_table(const SweepResult& result) {
  Table t{{"method", "N", "bias2_pct", "var_pct", "mse_pct"}, {}};
  for (const auto* curve : {&result.tree, &result.subag}) {
    const std::string method = curve == &result.tree ? "tree" : "subag";
    for (const auto& p : *curve) {
      t.add({method, static_cast<std::int64_t>(p.n_splits), 100.0 * p.bias2, 100.0 * p.variance, 100.0 * p.mse});
    }
  }
  return t;
}

// Optimal number of splits versus n -------------------------------------------

struct OptimalConfig {
  Dgp dgp{RegressionFn::square, 0.2};
  std::vector<std::size_t> n_grid{50, 100, 200, 400, 800};
  std::size_t replicates = 200;
  std::size_t resamples = 50;
  double k_frac = 0.5;
  /// Largest split count searched, further capped at k - 1.
  std::size_t max_splits = 40;
  std::vector<double> x0_grid = default_x0_grid();
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct OptimalRow {
  std::size_t n;
  std::string method;
  std::size_t n_opt;
  double mse_opt;
};

inline std::vector<OptimalRow> run_optimal_splits_vs_n(const OptimalConfig& cfg) {
  const SeedStreams streams{cfg.seed};
  std::vector<OptimalRow> rows;
  for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
    const std::size_t n = cfg.n_grid[i];
    const std::size_t k = static_cast<std::size_t>(std::floor(cfg.k_frac * static_cast<double>(n)));
    require(k >= 2, "n=" + std::to_string(n) + " leaves subsamples too small for a stump");
    SweepConfig sweep;
    sweep.n = n;
    sweep.replicates = cfg.replicates;
    sweep.resamples = cfg.resamples;
    sweep.k = k;
    sweep.n_splits = split_range(1, std::min(cfg.max_splits, k - 1));
    sweep.x0_grid = cfg.x0_grid;
    sweep.seed = streams.sub_seed(n);
    sweep.threads = cfg.threads;
    const auto result = run_split_sweep(sweep, cfg.dgp);
    const auto tree_best = optimum(result.tree);
    const auto subag_best = optimum(result.subag);
    rows.push_back({n, "tree", tree_best.n_splits, tree_best.mse});
    rows.push_back({n, "subag", subag_best.n_splits, subag_best.mse});
  }
  return rows;
}

inline Table optimal_table(const std::vector<OptimalRow>& rows) {
  Table t{{"n", "method", "N_opt", "mse_opt_pct"}, {}};
  for (const auto& row : rows) {
    t.add({static_cast<std::int64_t>(row.n), row.method, static_cast<std::int64_t>(row.n_opt), 100.0 * row.mse_opt});
  }
  return t;
}

// Robustness to subsample size and replacement ---------------------------------

enum class Variant { k20, k50, k95, bagging };

inline Variant parse_variant(std::string_view name) {
  if (name == "k20") return Variant::k20;
  if (name == "k50") return Variant::k50;
  if (name == "k95") return Variant::k95;
  if (name == "bagging") return Variant::bagging;
  throw Error("unknown robustness variant '" + std::string(name) + "'");
}

inline std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::k20: return "k20";
    case Variant::k50: return "k50";
    case Variant::k95: return "k95";
    case Variant::bagging: return "bagging";
  }
  return "?";
}

struct RobustnessConfig {
  Dgp dgp{RegressionFn::square, 0.2};
  std::size_t n = 100;
  std::size_t replicates = 200;
  std::size_t resamples = 50;
  std::vector<Variant> variants{Variant::k20, Variant::k50, Variant::k95, Variant::bagging};
  /// Largest split count; subsampling variants are further capped at k - 1.
  std::size_t max_splits = 49;
  std::vector<double> x0_grid = default_x0_grid();
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct RobustnessResult {
  std::vector<CurvePoint> tree;
  std::vector<std::pair<Variant, std::vector<CurvePoint>>> variants;

  [[nodiscard]] const std::vector<CurvePoint>& curve(Variant v) const {
    for (const auto& [variant, c] : variants) {
      if (variant == v) return c;
    }
    throw Error("variant not evaluated");
  }
};

inline ResamplePlan plan_for(Variant v, std::size_t n, std::size_t resamples) {
  auto frac = [&](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n))); };
  switch (v) {
    case Variant::k20: return ResamplePlan::subagging(frac(0.2), resamples);
    case Variant::k50: return ResamplePlan::subagging(frac(0.5), resamples);
    case Variant::k95: return ResamplePlan::subagging(frac(0.95), resamples);
    case Variant::bagging: return ResamplePlan::bagging(n, resamples);
  }
  throw Error("unknown variant");
}

inline RobustnessResult run_robustness(const RobustnessConfig& cfg) {
  std::vector<EnsembleSpec> specs;
  for (Variant v : cfg.variants) {
    const ResamplePlan plan = plan_for(v, cfg.n, cfg.resamples);
    const std::size_t cap = plan.mode == Resampling::with_replacement ? cfg.max_splits
                                                                      : std::min(cfg.max_splits, plan.draw_count - 1);
    require(cap >= 1, "variant " + std::string(to_string(v)) + " cannot hold a single split");
    // k50 shares its streams with the sweep's subagging curve.
    const std::size_t tag = v == Variant::k50 ? 1 : 2 + static_cast<std::size_t>(v);
    specs.push_back({std::string(to_string(v)), plan, split_range(1, cap), tag});
  }
  const auto out = sweep_pointwise(cfg.dgp, cfg.n, cfg.replicates, split_range(1, cfg.max_splits), specs,
                                   cfg.x0_grid, cfg.seed, cfg.threads);
  RobustnessResult result;
  result.tree = grid_average(out.tree);
  for (std::size_t s = 0; s < specs.size(); ++s) {
    result.variants.emplace_back(cfg.variants[s], grid_average(out.ensembles[s]));
  }
  return result;
}

inline Table robustness_table(const RobustnessResult& result) {
  Table t{{"variant", "N", "mse_pct"}, {}};
  for (const auto& p : result.tree) t.add({std::string("tree"), static_cast<std::int64_t>(p.n_splits), 100.0 * p.mse});
  for (const auto& [variant, curve] : result.variants) {
    for (const auto& p : curve) {
      t.add({std::string(to_string(variant)), static_cast<std::int64_t>(p.n_splits), 100.0 * p.mse});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Honest trees: the three terms of the pointwise mse

struct TheoremTermsConfig {
  Dgp dgp{RegressionFn::square, 0.2};
  std::size_t n = 100;
  /// Minimum cell size of the partitioning tree.
  std::size_t h = 20;
  std::size_t replicates = 200;
  double x0 = 0.5;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct TheoremTerms {
  std::size_t n = 0;
  /// (E[E[f | C_n]] - f(x0))^2.
  double bias2_term = 0.0;
  /// sigma^2 E[1 / count of estimation points in C_n].
  double error_var_term = 0.0;
  /// Variance of the regression part: E[V[f | C_n] / count] + V[E[f | C_n]].
  double regression_var_term = 0.0;
  /// Monte Carlo mse of the honest prediction.
  double total_mse = 0.0;
  double total_mse_se = 0.0;
  std::size_t dropped = 0;

  [[nodiscard]] double term_sum() const noexcept { return bias2_term + error_var_term + regression_var_term; }
};

/// Each replicate draws a fresh partitioning set and an independent
/// estimation set of the same size. Replicates whose cell receives no
/// estimation point are dropped; more than 1% dropped is an error.
inline TheoremTerms decompose_theorem_terms(const TheoremTermsConfig& cfg) {
  require(cfg.replicates >= 2, "need at least two replicates");
  const SeedStreams streams{cfg.seed};
  const auto point = point_at(cfg.dgp, cfg.x0);
  const auto f = as_point_function(cfg.dgp);
  struct Draw {
    bool kept = false;
    double prediction = 0.0;
    double inverse_count = 0.0;
    double cell_mean = 0.0;
    double cell_var = 0.0;
  };
  std::vector<Draw> draws(cfg.replicates);
  parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
    const RngStream rep = streams.replicate(r);
    const Dataset partition = sample_dataset(cfg.dgp, cfg.n, rep.child(0));
    Tree tree;
    try {
      tree = grow(partition, StoppingRule::min_cell_size(cfg.h));
    } catch (const GrowthError& e) {
      throw GrowthError("replicate " + std::to_string(r) + ": " + e.what());
    }
    const auto x = sample_covariates(cfg.dgp.dim(), cfg.n, rep.child(1));
    auto noise = rep.child(2).engine();
    const std::size_t leaf = tree.leaf_index(point);
    std::size_t count = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < cfg.n; ++i) {
      const std::span<const double> xi(x.data() + i * cfg.dgp.dim(), cfg.dgp.dim());
      const double eps = cfg.dgp.noise_sd() * noise.normal();
      if (tree.leaf_index(xi) != leaf) continue;
      ++count;
      sum += cfg.dgp.f(xi) + eps;
    }
    if (count == 0) return;
    const auto moments = cell_moments(f, tree.bounds(leaf));
    draws[r] = {true, sum / static_cast<double>(count), 1.0 / static_cast<double>(count), moments.mean,
                moments.variance()};
  });

  TheoremTerms out;
  out.n = cfg.n;
  std::vector<double> sq_err, inv, means, scaled_var;
  for (const auto& d : draws) {
    if (!d.kept) {
      ++out.dropped;
      continue;
    }
    const double truth = cfg.dgp.f(point);
    sq_err.push_back((d.prediction - truth) * (d.prediction - truth));
    inv.push_back(d.inverse_count);
    means.push_back(d.cell_mean);
    scaled_var.push_back(d.cell_var * d.inverse_count);
  }
  if (static_cast<double>(out.dropped) > 0.01 * static_cast<double>(cfg.replicates)) {
    throw Error("empty honest cell in " + std::to_string(out.dropped) + " of " + std::to_string(cfg.replicates) +
                " replicates");
  }
  require(sq_err.size() >= 2, "too few replicates kept");
  const double truth = cfg.dgp.f(point);
  const double mean_cell = mean_of(means);
  out.bias2_term = (mean_cell - truth) * (mean_cell - truth);
  out.error_var_term = cfg.dgp.noise_sd() * cfg.dgp.noise_sd() * mean_of(inv);
  out.regression_var_term = mean_of(scaled_var) + variance_of(means, 0);
  out.total_mse = mean_of(sq_err);
  out.total_mse_se = standard_error(sq_err);
  return out;
}

inline Table theorem_terms_table(const std::vector<TheoremTerms>& rows) {
  Table t{{"n", "bias2_term", "error_var_term", "regression_var_term", "total_mse", "dropped"}, {}};
  for (const auto& row : rows) {
    t.add({static_cast<std::int64_t>(row.n), row.bias2_term, row.error_var_term, row.regression_var_term,
           row.total_mse, static_cast<std::int64_t>(row.dropped)});
  }
  return t;
}

/// Honest-estimation moments for one fixed partition: fresh estimation sets are
/// drawn repeatedly while the tree stays put.
struct HonestLemmaCheck {
  std::size_t cell_count_mean_n = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  /// Noise term: MC variance against E[sigma^2 / count].
  double noise_var = 0.0, noise_var_target = 0.0, noise_var_z = 0.0;
  /// Regression term: MC mean against E[f | C] by quadrature.
  double regression_mean = 0.0, regression_mean_target = 0.0, regression_mean_z = 0.0;
  /// Regression term: MC variance against E[V[f | C] / count].
  double regression_var = 0.0, regression_var_target = 0.0, regression_var_z = 0.0;
  /// V[f | C] itself.
  double cell_variance = 0.0;
};

inline HonestLemmaCheck run_honest_lemmas(const Dgp& dgp, const Tree& tree, double x0, std::size_t n_estimation,
                                          std::size_t sets, std::uint64_t seed, std::size_t threads = 1) {
  require(sets >= 3, "need at least three estimation sets");
  const auto point = point_at(dgp, x0);
  const std::size_t leaf = tree.leaf_index(point);
  const auto moments = cell_moments(as_point_function(dgp), tree.bounds(leaf));
  struct Draw {
    bool kept = false;
    double noise = 0.0, regression = 0.0, inverse_count = 0.0;
  };
  std::vector<Draw> draws(sets);
  const SeedStreams streams{seed};
  parallel_for(sets, threads, [&](std::size_t r) {
    const RngStream rep = streams.replicate(r);
    const auto x = sample_covariates(dgp.dim(), n_estimation, rep.child(0));
    auto engine = rep.child(1).engine();
    std::size_t count = 0;
    double noise = 0.0, regression = 0.0;
    for (std::size_t i = 0; i < n_estimation; ++i) {
      const std::span<const double> xi(x.data() + i * dgp.dim(), dgp.dim());
      const double eps = dgp.noise_sd() * engine.normal();
      if (tree.leaf_index(xi) != leaf) continue;
      ++count;
      noise += eps;
      regression += dgp.f(xi);
    }
    if (count == 0) return;
    const double c = static_cast<double>(count);
    draws[r] = {true, noise / c, regression / c, 1.0 / c};
  });

  HonestLemmaCheck out;
  out.cell_variance = moments.variance();
  std::vector<double> d_noise, regression, d_reg, inv;
  const double sigma2 = dgp.noise_sd() * dgp.noise_sd();
  for (const auto& d : draws) {
    if (!d.kept) {
      ++out.dropped;
      continue;
    }
    d_noise.push_back(d.noise * d.noise - sigma2 * d.inverse_count);
    regression.push_back(d.regression);
    const double dev = d.regression - moments.mean;
    d_reg.push_back(dev * dev - moments.variance() * d.inverse_count);
    inv.push_back(d.inverse_count);
  }
  out.kept = regression.size();
  require(out.kept >= 3, "too few estimation sets reached the cell");
  auto z = [](const std::vector<double>& v, double centre) {
    const double se = standard_error(v);
    return se > 0.0 ? (mean_of(v) - centre) / se : (mean_of(v) == centre ? 0.0 : INFINITY);
  };
  std::vector<double> noise_sq;
  for (const auto& d : draws) {
    if (d.kept) noise_sq.push_back(d.noise * d.noise);
  }
  out.noise_var = mean_of(noise_sq);
  out.noise_var_target = sigma2 * mean_of(inv);
  out.noise_var_z = z(d_noise, 0.0);
  out.regression_mean = mean_of(regression);
  out.regression_mean_target = moments.mean;
  out.regression_mean_z = z(regression, moments.mean);
  std::vector<double> reg_sq;
  for (double v : regression) reg_sq.push_back((v - moments.mean) * (v - moments.mean));
  out.regression_var = mean_of(reg_sq);
  out.regression_var_target = moments.variance() * mean_of(inv);
  out.regression_var_z = z(d_reg, 0.0);
  return out;
}

}  // namespace subag::sim
