#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "subag/data.hpp"
#include "subag/error.hpp"
#include "subag/parallel.hpp"
#include "subag/rng.hpp"
#include "subag/stats.hpp"
#include "subag/tree.hpp"

namespace subag {

enum class Resampling { without_replacement, with_replacement };

struct ResamplePlan {
  Resampling mode = Resampling::without_replacement;
  std::size_t draw_count = 1;
  std::size_t resamples = 50;

  /// k rows without replacement, B times.
  static ResamplePlan subagging(std::size_t k, std::size_t b) {
    return {Resampling::without_replacement, k, b};
  }
  /// n rows with replacement, B times.
  static ResamplePlan bagging(std::size_t n, std::size_t b) { return {Resampling::with_replacement, n, b}; }
  /// Half-sample subagging with 50 trees.
  static ResamplePlan half_sample(std::size_t n) { return subagging(std::max<std::size_t>(1, n / 2), 50); }

  void validate(std::size_t n) const {
    require(resamples >= 1, "number of resamples must be at least 1");
    require(draw_count >= 1, "resample size must be at least 1");
    if (mode == Resampling::without_replacement) {
      require(draw_count <= n, "subsample size " + std::to_string(draw_count) + " exceeds sample size " +
                                   std::to_string(n));
    } else {
      require(draw_count == n, "bootstrap samples must have the sample size");
    }
  }
};

/// Row indices of one resample, sorted ascending (repeats kept for bootstrap).
inline std::vector<std::size_t> draw_resample(std::size_t n, const ResamplePlan& plan, RngStream rng) {
  auto engine = rng.engine();
  std::vector<std::size_t> rows;
  if (plan.mode == Resampling::without_replacement) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < plan.draw_count; ++i) {
      const auto j = i + static_cast<std::size_t>(engine.below(n - i));
      std::swap(pool[i], pool[j]);
    }
    rows.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(plan.draw_count));
  } else {
    rows.resize(plan.draw_count);
    for (auto& r : rows) r = static_cast<std::size_t>(engine.below(n));
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

/// B trees grown on resamples of one dataset, plus how often each row was drawn.
class Ensemble {
 public:
  Ensemble(std::vector<Tree> trees, std::vector<std::uint32_t> multiplicity, std::size_t n, ResamplePlan plan,
           StoppingRule stopping)
      : trees_(std::move(trees)),
        multiplicity_(std::move(multiplicity)),
        n_(n),
        plan_(plan),
        stopping_(stopping) {}

  [[nodiscard]] std::span<const Tree> trees() const noexcept { return trees_; }
  [[nodiscard]] std::size_t size() const noexcept { return trees_.size(); }
  [[nodiscard]] std::size_t n_rows() const noexcept { return n_; }
  [[nodiscard]] const ResamplePlan& plan() const noexcept { return plan_; }
  [[nodiscard]] const StoppingRule& stopping() const noexcept { return stopping_; }

  /// Times row i was drawn into resample b.
  [[nodiscard]] std::uint32_t multiplicity(std::size_t b, std::size_t i) const noexcept {
    return multiplicity_[b * n_ + i];
  }
  [[nodiscard]] const std::vector<std::uint32_t>& multiplicity_matrix() const noexcept { return multiplicity_; }

  [[nodiscard]] double predict(std::span<const double> x0, std::size_t max_splits = no_limit) const {
    double s = 0.0;
    for (const Tree& t : trees_) s += t.predict(x0, max_splits);
    return s / static_cast<double>(trees_.size());
  }

  /// out[N] = prediction with every tree truncated to N splits.
  void predict_prefixes(std::span<const double> x0, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> one(out.size());
    for (const Tree& t : trees_) {
      t.predict_prefixes(x0, one);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += one[i];
    }
    for (double& v : out) v /= static_cast<double>(trees_.size());
  }

  /// W*_i(x0): per-tree leaf weights over the original rows, averaged over trees.
  [[nodiscard]] WeightVector weights(std::span<const double> x0, std::size_t max_splits = no_limit) const {
    WeightVector w(n_, 0.0);
    const double scale = 1.0 / static_cast<double>(trees_.size());
    for (const Tree& t : trees_) t.add_weights(x0, w, scale, max_splits);
    return w;
  }

 private:
  std::vector<Tree> trees_;
  std::vector<std::uint32_t> multiplicity_;
  std::size_t n_;
  ResamplePlan plan_;
  StoppingRule stopping_;
};

/// Resample b is drawn from rng.child(b), so the fit does not depend on the
/// number of threads.
inline Ensemble fit_ensemble(const Dataset& data, const ResamplePlan& plan, const StoppingRule& stopping,
                             RngStream rng, std::size_t threads = 1) {
  const std::size_t n = data.size();
  plan.validate(n);
  std::vector<Tree> trees(plan.resamples);
  std::vector<std::uint32_t> multiplicity(plan.resamples * n, 0);
  parallel_for(plan.resamples, threads, [&](std::size_t b) {
    const auto rows = draw_resample(n, plan, rng.child(b));
    for (std::size_t r : rows) ++multiplicity[b * n + r];
    try {
      trees[b] = grow(data, rows, stopping);
    } catch (const GrowthError& e) {
      throw GrowthError("resample " + std::to_string(b) + ": " + e.what());
    }
  });
  return Ensemble(std::move(trees), std::move(multiplicity), n, plan, stopping);
}

inline double ensemble_predict(const Ensemble& ens, std::span<const double> x0) { return ens.predict(x0); }

inline WeightVector ensemble_weights(const Ensemble& ens, std::span<const double> x0) { return ens.weights(x0); }

/// Monte Carlo estimates of the terms in V[ens] = V E[T|D] + (1/B) E V[T|D] for
/// a single subtree prediction T at x0.
struct VarianceDecomposition {
  /// Variance across datasets of the B_inner-tree ensemble prediction.
  double total_var = 0.0;
  /// V E[T|D], from the covariance of two disjoint half-ensembles.
  double var_of_cond_mean = 0.0;
  /// E V[T|D], from within-dataset sample variances of the subtrees.
  double mean_of_cond_var = 0.0;
  /// Variance across datasets of one subtree prediction.
  double single_tree_var = 0.0;
  /// Standard error of total_var - (var_of_cond_mean + mean_of_cond_var / B_inner).
  double residual_se = 0.0;
  /// Standard error of single_tree_var - (var_of_cond_mean + mean_of_cond_var).
  double single_residual_se = 0.0;
  std::size_t inner = 0;
  std::size_t outer = 0;

  [[nodiscard]] double residual() const noexcept {
    return total_var - (var_of_cond_mean + mean_of_cond_var / static_cast<double>(inner));
  }
  [[nodiscard]] double single_residual() const noexcept {
    return single_tree_var - (var_of_cond_mean + mean_of_cond_var);
  }
};

/// Outer loop draws fresh datasets of size n from `dgp`; the inner loop fits
/// `inner` subtrees per dataset using `plan.mode` and `plan.draw_count`.
inline VarianceDecomposition conditional_variance_decomposition(const Dgp& dgp, std::size_t n, ResamplePlan plan,
                                                                const StoppingRule& stopping,
                                                                std::span<const double> x0, std::size_t inner,
                                                                std::size_t outer, RngStream rng,
                                                                std::size_t threads = 1) {
  require(inner >= 2, "need at least two inner resamples");
  require(outer >= 3, "need at least three outer datasets");
  plan.resamples = inner;
  plan.validate(n);
  const std::size_t half = inner / 2;
  std::vector<double> full(outer), first(outer), second(outer), within(outer), single(outer);
  parallel_for(outer, threads, [&](std::size_t r) {
    const RngStream stream = rng.child(r);
    const Dataset data = sample_dataset(dgp, n, stream.child(0));
    const Ensemble ens = fit_ensemble(data, plan, stopping, stream.child(1));
    std::vector<double> t(inner);
    for (std::size_t b = 0; b < inner; ++b) t[b] = ens.trees()[b].predict(x0);
    full[r] = mean_of(t);
    first[r] = mean_of(std::span<const double>(t).first(half));
    second[r] = mean_of(std::span<const double>(t).subspan(half));
    within[r] = variance_of(t, 1);
    single[r] = t[0];
  });

  VarianceDecomposition out;
  out.inner = inner;
  out.outer = outer;
  out.total_var = variance_of(full, 1);
  out.var_of_cond_mean = covariance_of(first, second, 1);
  out.mean_of_cond_var = mean_of(within);
  out.single_tree_var = variance_of(single, 1);

  const double mf = mean_of(full), m1 = mean_of(first), m2 = mean_of(second), ms = mean_of(single);
  std::vector<double> d(outer), ds(outer);
  for (std::size_t r = 0; r < outer; ++r) {
    const double cross = (first[r] - m1) * (second[r] - m2);
    d[r] = (full[r] - mf) * (full[r] - mf) - cross - within[r] / static_cast<double>(inner);
    ds[r] = (single[r] - ms) * (single[r] - ms) - cross - within[r];
  }
  out.residual_se = standard_error(d);
  out.single_residual_se = standard_error(ds);
  return out;
}

}  // namespace subag
