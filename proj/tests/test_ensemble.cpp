#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "subag/ensemble.hpp"
#include "subag/oracle.hpp"

using namespace subag;

namespace {

Dataset noisy_square(std::size_t n, std::uint64_t seed) {
  return sample_dataset(Dgp(RegressionFn::square, 0.2), n, derive_stream(seed, 0));
}

}  // namespace

TEST(ResamplePlan, Validation) {
  EXPECT_THROW(ResamplePlan::subagging(11, 5).validate(10), Error);
  EXPECT_THROW(ResamplePlan::subagging(5, 0).validate(10), Error);
  EXPECT_THROW(ResamplePlan::subagging(0, 5).validate(10), Error);
  EXPECT_THROW(ResamplePlan::bagging(9, 5).validate(10), Error);
  EXPECT_NO_THROW(ResamplePlan::bagging(10, 5).validate(10));
  const auto half = ResamplePlan::half_sample(101);
  EXPECT_EQ(half.draw_count, 50u);
  EXPECT_EQ(half.resamples, 50u);
  EXPECT_EQ(half.mode, Resampling::without_replacement);
}

TEST(Resample, SubsamplesAreDistinctAndSorted) {
  const auto plan = ResamplePlan::subagging(50, 1);
  for (std::uint64_t b = 0; b < 50; ++b) {
    const auto rows = draw_resample(100, plan, derive_stream(1, b));
    ASSERT_EQ(rows.size(), 50u);
    EXPECT_TRUE(std::is_sorted(rows.begin(), rows.end()));
    EXPECT_EQ(std::set<std::size_t>(rows.begin(), rows.end()).size(), 50u);
    EXPECT_LT(rows.back(), 100u);
  }
}

TEST(Resample, SubsamplingIsUniform) {
  // Each row is included with probability k/n = 0.3.
  std::vector<int> hits(10, 0);
  const auto plan = ResamplePlan::subagging(3, 1);
  constexpr int draws = 30000;
  for (int b = 0; b < draws; ++b) {
    for (std::size_t r : draw_resample(10, plan, derive_stream(2, static_cast<std::uint64_t>(b)))) ++hits[r];
  }
  const double se = std::sqrt(0.3 * 0.7 / draws);
  for (int h : hits) EXPECT_NEAR(h / static_cast<double>(draws), 0.3, 4.5 * se);
}

TEST(Ensemble, MultiplicityInvariants) {
  const auto d = noisy_square(100, 3);
  const auto sub = fit_ensemble(d, ResamplePlan::subagging(50, 50), StoppingRule::exact_splits(3), derive_stream(4, 0));
  const auto bag = fit_ensemble(d, ResamplePlan::bagging(100, 50), StoppingRule::exact_splits(3), derive_stream(4, 0));
  for (std::size_t b = 0; b < 50; ++b) {
    std::size_t s = 0, t = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      EXPECT_LE(sub.multiplicity(b, i), 1u);
      s += sub.multiplicity(b, i);
      t += bag.multiplicity(b, i);
    }
    EXPECT_EQ(s, 50u);
    EXPECT_EQ(t, 100u);
    EXPECT_EQ(sub.trees()[b].n_train(), 50u);
  }
}

TEST(Ensemble, FullSampleSingleTreeEqualsTree) {
  const auto d = noisy_square(60, 5);
  for (const auto& stopping : {StoppingRule::exact_splits(7), StoppingRule::min_cell_size(4)}) {
    const Tree t = grow(d, stopping);
    const auto ens = fit_ensemble(d, ResamplePlan::subagging(60, 1), stopping, derive_stream(6, 0));
    auto e = derive_stream(7, 0).engine();
    for (int q = 0; q < 100; ++q) {
      const double x0[1] = {e.uniform()};
      EXPECT_EQ(ens.predict(x0), t.predict(x0));
      EXPECT_EQ(ensemble_weights(ens, x0), t.weights(x0));
    }
  }
}

TEST(Ensemble, Deterministic) {
  const auto d = noisy_square(100, 8);
  const auto plan = ResamplePlan::subagging(50, 40);
  const auto a = fit_ensemble(d, plan, StoppingRule::exact_splits(5), derive_stream(9, 0), 1);
  const auto b = fit_ensemble(d, plan, StoppingRule::exact_splits(5), derive_stream(9, 0), 4);
  EXPECT_EQ(a.multiplicity_matrix(), b.multiplicity_matrix());
  const double x0[1] = {0.37};
  EXPECT_EQ(a.predict(x0), b.predict(x0));
  const auto c = fit_ensemble(d, plan, StoppingRule::exact_splits(5), derive_stream(9, 1), 1);
  EXPECT_NE(a.multiplicity_matrix(), c.multiplicity_matrix());
}

TEST(Ensemble, PredictIsWeightedSum) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = noisy_square(80, 10 + seed);
    for (const auto& plan : {ResamplePlan::subagging(40, 25), ResamplePlan::bagging(80, 25)}) {
      const auto ens = fit_ensemble(d, plan, StoppingRule::exact_splits(1 + seed), derive_stream(11, seed));
      auto e = derive_stream(12, seed).engine();
      for (int q = 0; q < 20; ++q) {
        const double x0[1] = {e.uniform()};
        const auto w = ensemble_weights(ens, x0);
        double dot = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
          EXPECT_GE(w[i], 0.0);
          dot += w[i] * d.y(i);
        }
        EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
        EXPECT_NEAR(dot, ensemble_predict(ens, x0), 1e-12);
      }
    }
  }
}

TEST(Ensemble, BaggingLeafMeansUseMultiplicity) {
  const auto d = noisy_square(30, 13);
  const auto ens = fit_ensemble(d, ResamplePlan::bagging(30, 5), StoppingRule::exact_splits(2), derive_stream(14, 0));
  const double x0[1] = {0.5};
  for (std::size_t b = 0; b < ens.size(); ++b) {
    const Tree& t = ens.trees()[b];
    const auto box = t.bounds(t.leaf_index(x0));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.x(i, 0) > box[0].lo && d.x(i, 0) <= box[0].hi) {
        num += ens.multiplicity(b, i) * d.y(i);
        den += ens.multiplicity(b, i);
      }
    }
    EXPECT_NEAR(t.predict(x0), num / den, 1e-12);
  }
}

TEST(Ensemble, FourPointExhaustiveStumps) {
  const Dataset d({0.2, 0.4, 0.6, 0.8}, {1.0, 10.0, 100.0, 1000.0}, 1);
  const double x0[1] = {0.1};
  // Each pair predicts its smaller-x member: (3*1 + 2*10 + 100) / 6.
  EXPECT_NEAR(exhaustive_subagging(d, 2, StoppingRule::exact_splits(1), x0), 123.0 / 6.0, 1e-12);
  std::vector<Tree> trees;
  for (const auto& s : enumerate_subsamples(4, 2)) trees.push_back(grow(d, s, StoppingRule::exact_splits(1)));
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x0);
  EXPECT_NEAR(sum / 6.0, 123.0 / 6.0, 1e-12);
}

TEST(Ensemble, InfeasibleResampleNamed) {
  const auto d = noisy_square(20, 15);
  try {
    (void)fit_ensemble(d, ResamplePlan::subagging(5, 3), StoppingRule::exact_splits(5), derive_stream(16, 0));
    FAIL();
  } catch (const GrowthError& e) {
    EXPECT_NE(std::string(e.what()).find("resample 0"), std::string::npos);
  }
}

TEST(Ensemble, SubtreeUnbiasedness) {
  // The ensemble and its first subtree share the same expectation over datasets.
  const Dgp dgp(RegressionFn::square, 0.2);
  const auto plan = ResamplePlan::subagging(25, 10);
  const double x0[1] = {0.5};
  std::vector<double> diff;
  for (std::uint64_t r = 0; r < 400; ++r) {
    const auto d = sample_dataset(dgp, 50, derive_stream(17, r));
    const auto ens = fit_ensemble(d, plan, StoppingRule::exact_splits(1), derive_stream(18, r));
    diff.push_back(ens.predict(x0) - ens.trees()[0].predict(x0));
  }
  EXPECT_LT(std::abs(mean_of(diff)), 4.0 * standard_error(diff));
}

TEST(Ensemble, MonteCarloApproachesExhaustive) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto d = noisy_square(10, 19 + seed);
    const auto stopping = StoppingRule::exact_splits(1);
    const double x0[1] = {0.55};
    const double exact = exhaustive_subagging(d, 5, stopping, x0);
    const auto ens = fit_ensemble(d, ResamplePlan::subagging(5, 2000), stopping, derive_stream(20, seed));
    std::vector<double> preds;
    for (const Tree& t : ens.trees()) preds.push_back(t.predict(x0));
    EXPECT_LT(std::abs(mean_of(preds) - exact), 4.0 * standard_error(preds));
  }
}

TEST(VarianceDecomposition, ConstantNoiseless) {
  const Dgp dgp(RegressionFn::constant, 0.0, 1, 1.0);
  const double x0[1] = {0.5};
  const auto v = conditional_variance_decomposition(dgp, 30, ResamplePlan::subagging(15, 1),
                                                    StoppingRule::exact_splits(1), x0, 6, 20, derive_stream(21, 0));
  EXPECT_NEAR(v.total_var, 0.0, 1e-28);
  EXPECT_NEAR(v.var_of_cond_mean, 0.0, 1e-28);
  EXPECT_NEAR(v.mean_of_cond_var, 0.0, 1e-28);
}

TEST(VarianceDecomposition, TermsAddUp) {
  const Dgp dgp(RegressionFn::square, 0.2);
  const double x0[1] = {0.6};
  const auto v = conditional_variance_decomposition(dgp, 50, ResamplePlan::subagging(25, 1),
                                                    StoppingRule::exact_splits(1), x0, 20, 300, derive_stream(22, 0));
  EXPECT_LT(std::abs(v.residual()), 4.0 * v.residual_se);
  EXPECT_LT(std::abs(v.single_residual()), 4.0 * v.single_residual_se);
  // Averaging 20 subtrees removes most of the within-dataset variance.
  EXPECT_LT(v.total_var, v.single_tree_var);
}

TEST(VarianceDecomposition, LargeEnsembleApproachesConditionalMean) {
  const Dgp dgp(RegressionFn::square, 0.2);
  const double x0[1] = {0.6};
  const auto v = conditional_variance_decomposition(dgp, 50, ResamplePlan::subagging(25, 1),
                                                    StoppingRule::exact_splits(1), x0, 200, 100, derive_stream(23, 0));
  EXPECT_LT(v.mean_of_cond_var / 200.0, 0.1 * v.var_of_cond_mean);
  EXPECT_LT(std::abs(v.residual()), 4.0 * v.residual_se);
}
