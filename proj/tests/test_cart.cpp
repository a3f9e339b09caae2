#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "subag/criterion.hpp"
#include "subag/oracle.hpp"
#include "subag/tree.hpp"

using namespace subag;

namespace {

std::vector<std::size_t> all_rows(const Dataset& d) {
  std::vector<std::size_t> r(d.size());
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

Dataset four_points() { return Dataset({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}, 1); }

Dataset noisy_square(std::size_t n, std::uint64_t seed, std::size_t dim = 1) {
  return sample_dataset(Dgp(RegressionFn::square, 0.2, dim), n, derive_stream(seed, 0));
}

}  // namespace

TEST(Criterion, HandValues) {
  const auto d = four_points();
  const auto rows = all_rows(d);
  const Split s{0, 0.5};
  EXPECT_DOUBLE_EQ(criterion_decrease_form(d, rows, s), 0.25);
  EXPECT_DOUBLE_EQ(criterion_product_form(d, rows, s), 0.25);
  // 1|3 split: (1*3/16) * (0 - 2/3)^2 = 1/12.
  EXPECT_NEAR(criterion_product_form(d, rows, Split{0, 0.15}), 1.0 / 12.0, 1e-15);
  EXPECT_NEAR(criterion_decrease_form(d, rows, Split{0, 0.15}), 1.0 / 12.0, 1e-15);
}

TEST(Criterion, ConstantResponseIsZero) {
  const Dataset d({0.1, 0.3, 0.6, 0.7}, {2, 2, 2, 2}, 1);
  const auto rows = all_rows(d);
  for (const Split& s : candidate_splits(d, rows)) {
    EXPECT_EQ(criterion_product_form(d, rows, s), 0.0);
    EXPECT_NEAR(criterion_decrease_form(d, rows, s), 0.0, 1e-15);
  }
}

TEST(Criterion, DegenerateSplit) {
  const auto d = four_points();
  const auto rows = all_rows(d);
  EXPECT_THROW((void)criterion_product_form(d, rows, Split{0, 0.95}), Error);
  EXPECT_THROW((void)criterion_decrease_form(d, rows, Split{0, 0.05}), Error);
  try {
    (void)criterion_product_form(d, rows, Split{0, 0.95});
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "degenerate split");
  }
}

TEST(Criterion, FormsAgreeAndAreNonnegative) {
  auto rng = derive_stream(21, 0);
  for (std::uint64_t t = 0; t < 1000; ++t) {
    auto e = rng.child(t).engine();
    const std::size_t n = 2 + e.below(199);
    const auto d = noisy_square(n, 1000 + t, 1 + e.below(3));
    const auto rows = all_rows(d);
    const auto cands = candidate_splits(d, rows);
    ASSERT_FALSE(cands.empty());
    const Split s = cands[e.below(cands.size())];
    const double a = criterion_decrease_form(d, rows, s);
    const double b = criterion_product_form(d, rows, s);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(std::abs(a - b), 1e-10 * std::max(std::abs(a), std::abs(b)));
  }
}

TEST(Candidates, Midpoints) {
  const Dataset a({0.2, 0.4}, {0, 1}, 1);
  auto c = candidate_splits(a, all_rows(a));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_DOUBLE_EQ(c[0].threshold, 0.30000000000000004);

  const Dataset b({0.1, 0.1, 0.9}, {0, 1, 2}, 1);
  c = candidate_splits(b, all_rows(b));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_DOUBLE_EQ(c[0].threshold, 0.5);

  const Dataset p2({0.1, 0.7, 0.5, 0.2, 0.9, 0.4}, {0, 1, 2}, 2);
  c = candidate_splits(p2, all_rows(p2));
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c[0].feature, 0u);
  EXPECT_DOUBLE_EQ(c[0].threshold, 0.3);
  EXPECT_DOUBLE_EQ(c[1].threshold, 0.7);
  EXPECT_EQ(c[2].feature, 1u);
  EXPECT_DOUBLE_EQ(c[2].threshold, 0.5 * (0.2 + 0.4));
  EXPECT_DOUBLE_EQ(c[3].threshold, 0.55);

  const Dataset same({0.3, 0.3, 0.3}, {0, 1, 2}, 1);
  EXPECT_TRUE(candidate_splits(same, all_rows(same)).empty());
}

TEST(Candidates, RoutingLessOrEqualGoesLeft) {
  const Split s{0, 0.5};
  const double at[1] = {0.5};
  const double above[1] = {std::nextafter(0.5, 1.0)};
  EXPECT_TRUE(s.goes_left(at));
  EXPECT_FALSE(s.goes_left(above));
}

TEST(BestSplit, FourPoints) {
  const auto d = four_points();
  const auto best = best_split(d, all_rows(d), 1);
  ASSERT_TRUE(best);
  EXPECT_DOUBLE_EQ(best->split.threshold, 0.5);
  EXPECT_DOUBLE_EQ(best->value, 0.25);
  EXPECT_EQ(best->left_count, 2u);
}

TEST(BestSplit, MedianWhenHalfRequired) {
  const auto d = noisy_square(100, 31);
  const auto best = best_split(d, all_rows(d), 50);
  ASSERT_TRUE(best);
  std::vector<double> x = d.covariates();
  std::sort(x.begin(), x.end());
  EXPECT_DOUBLE_EQ(best->split.threshold, 0.5 * (x[49] + x[50]));
  EXPECT_EQ(best->left_count, 50u);
  EXPECT_FALSE(best_split(d, all_rows(d), 51));
}

TEST(BestSplit, ConstantResponseTakesFirstCandidate) {
  const Dataset d({0.1, 0.7, 0.5, 0.2, 0.9, 0.4}, {3, 3, 3}, 2);
  const auto best = best_split(d, all_rows(d), 1);
  ASSERT_TRUE(best);
  EXPECT_EQ(best->split.feature, 0u);
  EXPECT_DOUBLE_EQ(best->split.threshold, 0.3);
}

TEST(BestSplit, TiesGoToSmallestThreshold) {
  // Symmetric responses: splits at 0.25 and 0.75 have equal value.
  const Dataset d({0.1, 0.4, 0.6, 0.9}, {1, 0, 0, 1}, 1);
  const auto best = best_split(d, all_rows(d), 1);
  ASSERT_TRUE(best);
  EXPECT_DOUBLE_EQ(best->split.threshold, 0.25);
}

TEST(BestSplit, MatchesExhaustiveSearch) {
  auto rng = derive_stream(22, 0);
  for (std::uint64_t t = 0; t < 1000; ++t) {
    auto e = rng.child(t).engine();
    const std::size_t n = 2 + e.below(60);
    const auto d = noisy_square(n, 2000 + t, 1 + e.below(3));
    auto rows = all_rows(d);
    // Random sub-cell and admissibility constraint.
    std::shuffle(rows.begin(), rows.end(), e);
    rows.resize(2 + e.below(n - 1));
    const std::size_t min_child = 1 + e.below(rows.size() / 2 + 1);
    const auto a = best_split(d, rows, min_child);
    const auto b = exhaustive_best_split(d, rows, min_child);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (!a) continue;
    EXPECT_EQ(a->split.feature, b->split.feature);
    EXPECT_EQ(a->split.threshold, b->split.threshold);
    EXPECT_EQ(a->left_count, b->left_count);
    EXPECT_NEAR(a->value, b->value, 1e-12 * std::max(1.0, b->value));
  }
}

TEST(Grow, ExactSplitsZeroIsMean) {
  const auto d = noisy_square(30, 41);
  const Tree t = grow(d, StoppingRule::exact_splits(0));
  EXPECT_EQ(t.n_leaves(), 1u);
  const double mean = std::accumulate(d.responses().begin(), d.responses().end(), 0.0) / 30.0;
  const double x0[1] = {0.3};
  EXPECT_NEAR(t.predict(x0), mean, 1e-15);
  const auto w = t.weights(x0);
  for (double v : w) EXPECT_DOUBLE_EQ(v, 1.0 / 30.0);
  const auto cell = t.cell_of(x0);
  EXPECT_DOUBLE_EQ(cell.diameter, 1.0);
  EXPECT_EQ(cell.member_count, 30u);
}

TEST(Grow, MinCellSizeSingleLeafWhenSmall) {
  const auto d = noisy_square(9, 42);
  EXPECT_EQ(grow(d, StoppingRule::min_cell_size(5)).n_leaves(), 1u);
  EXPECT_EQ(grow(d, StoppingRule::min_cell_size(9)).n_leaves(), 1u);
  EXPECT_THROW((void)grow(d, StoppingRule::min_cell_size(10)), GrowthError);
}

TEST(Grow, MinCellSizeLeafBounds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = noisy_square(500, 50 + seed, 1 + seed % 3);
    for (std::size_t h : {1, 4, 17, 40, 167}) {
      const Tree t = grow(d, StoppingRule::min_cell_size(h));
      std::size_t total = 0;
      for (const auto& node : t.nodes()) {
        if (!node.is_leaf()) continue;
        EXPECT_GE(node.count, h);
        EXPECT_LE(node.count, 2 * h - 1);
        total += node.count;
      }
      EXPECT_EQ(total, 500u);
    }
  }
}

TEST(Grow, ExactSplitsLeafCount) {
  const auto d = noisy_square(60, 43, 2);
  for (std::size_t n_splits : {1, 2, 5, 20, 59}) {
    const Tree t = grow(d, StoppingRule::exact_splits(n_splits));
    EXPECT_EQ(t.n_splits(), n_splits);
    EXPECT_EQ(t.n_leaves(), n_splits + 1);
  }
}

TEST(Grow, FullyGrownIsSingletons) {
  const auto d = noisy_square(40, 44);
  const Tree t = grow(d, StoppingRule::exact_splits(39));
  for (const auto& node : t.nodes()) {
    if (node.is_leaf()) EXPECT_EQ(node.count, 1u);
  }
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_DOUBLE_EQ(t.predict(d.row(i)), d.y(i));
}

TEST(Grow, CannotReachSplits) {
  const auto d = noisy_square(10, 45);
  try {
    (void)grow(d, StoppingRule::exact_splits(10));
    FAIL();
  } catch (const GrowthError& e) {
    EXPECT_NE(std::string(e.what()).find("cannot reach"), std::string::npos);
  }
  const Dataset dup({0.5, 0.5, 0.5}, {1, 2, 3}, 1);
  EXPECT_THROW((void)grow(dup, StoppingRule::exact_splits(1)), GrowthError);
  EXPECT_THROW((void)grow(dup, StoppingRule::min_cell_size(1)), GrowthError);
}

TEST(Grow, BestFirstPicksGlobalBest) {
  // Root split separates the two clusters; the right cluster has a larger
  // internal jump and must be split second.
  const Dataset d({0.05, 0.1, 0.15, 0.2, 0.6, 0.65, 0.8, 0.85}, {0, 0, 0.1, 0.1, 5, 5, 9, 9}, 1);
  const Tree t = grow(d, StoppingRule::exact_splits(2));
  const auto nodes = t.nodes();
  EXPECT_DOUBLE_EQ(nodes[0].split.threshold, 0.4);
  const auto& right = nodes[static_cast<std::size_t>(nodes[0].right)];
  ASSERT_FALSE(right.is_leaf());
  EXPECT_DOUBLE_EQ(right.split.threshold, 0.725);
  EXPECT_EQ(right.split_order, 1u);
}

TEST(Grow, StumpSplitNearPopulationArgmax) {
  std::vector<double> s;
  for (std::uint64_t r = 0; r < 200; ++r) {
    const auto d = noisy_square(100, 7000 + r);
    s.push_back(grow(d, StoppingRule::exact_splits(1)).nodes()[0].split.threshold);
  }
  std::nth_element(s.begin(), s.begin() + 100, s.end());
  EXPECT_NEAR(s[100], 0.64, 0.05);
}

TEST(Tree, PrefixesMatchSmallerTrees) {
  const auto d = noisy_square(80, 46, 2);
  const Tree big = grow(d, StoppingRule::exact_splits(30));
  std::vector<double> prefix(31);
  auto e = derive_stream(47, 0).engine();
  for (int q = 0; q < 50; ++q) {
    const double x0[2] = {e.uniform(), e.uniform()};
    big.predict_prefixes(x0, prefix);
    for (std::size_t n_splits = 0; n_splits <= 30; ++n_splits) {
      const Tree small = grow(d, StoppingRule::exact_splits(n_splits));
      EXPECT_EQ(small.predict(x0), prefix[n_splits]);
      EXPECT_EQ(big.predict(x0, n_splits), prefix[n_splits]);
      EXPECT_EQ(small.weights(x0), big.weights(x0, n_splits));
    }
  }
}

TEST(Tree, PredictIsWeightedSum) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = noisy_square(120, 60 + seed, 2);
    const Tree t = grow(d, StoppingRule::min_cell_size(1 + seed));
    auto e = derive_stream(61, seed).engine();
    for (int q = 0; q < 20; ++q) {
      const double x0[2] = {e.uniform(), e.uniform()};
      const auto w = t.weights(x0);
      double dot = 0.0, sum = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        EXPECT_GE(w[i], 0.0);
        dot += w[i] * d.y(i);
        sum += w[i];
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      EXPECT_NEAR(dot, t.predict(x0), 1e-12);
    }
  }
}

TEST(Tree, StumpWeights) {
  const auto d = noisy_square(100, 62);
  const Tree t = grow(d, StoppingRule::exact_splits(1));
  const auto& root = t.nodes()[0];
  const auto& left = t.nodes()[static_cast<std::size_t>(root.left)];
  const double x0[1] = {root.split.threshold / 2};
  const auto w = t.weights(x0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_DOUBLE_EQ(w[i], d.x(i, 0) <= root.split.threshold ? 1.0 / static_cast<double>(left.count) : 0.0);
  }
}

TEST(Tree, LeavesPartitionSpace) {
  const auto d = noisy_square(200, 63, 3);
  const Tree t = grow(d, StoppingRule::min_cell_size(7));
  auto e = derive_stream(64, 0).engine();
  for (int q = 0; q < 1000; ++q) {
    const double x0[3] = {e.uniform(), e.uniform(), e.uniform()};
    std::size_t containing = 0;
    for (std::size_t i = 0; i < t.nodes().size(); ++i) {
      if (!t.nodes()[i].is_leaf()) continue;
      bool inside = true;
      const auto box = t.bounds(i);
      for (std::size_t f = 0; f < 3; ++f) {
        const bool lower_ok = box[f].lo == 0.0 ? x0[f] >= 0.0 : x0[f] > box[f].lo;
        inside = inside && lower_ok && x0[f] <= box[f].hi;
      }
      containing += inside ? 1 : 0;
    }
    EXPECT_EQ(containing, 1u);
    const auto leaf = t.leaf_index(x0);
    const auto box = t.bounds(leaf);
    for (std::size_t f = 0; f < 3; ++f) EXPECT_LE(x0[f], box[f].hi);
  }
}

TEST(Tree, MembersMatchBounds) {
  const auto d = noisy_square(150, 65, 2);
  const Tree t = grow(d, StoppingRule::min_cell_size(6));
  for (std::size_t i = 0; i < t.nodes().size(); ++i) {
    if (!t.nodes()[i].is_leaf()) continue;
    const auto box = t.bounds(i);
    std::size_t inside = 0;
    for (std::size_t r = 0; r < d.size(); ++r) {
      bool in = true;
      for (std::size_t f = 0; f < 2; ++f) in = in && d.x(r, f) > box[f].lo && d.x(r, f) <= box[f].hi;
      inside += in ? 1 : 0;
    }
    EXPECT_EQ(inside, t.members(i).size());
    for (std::size_t r : t.members(i)) {
      for (std::size_t f = 0; f < 2; ++f) {
        EXPECT_GT(d.x(r, f), box[f].lo);
        EXPECT_LE(d.x(r, f), box[f].hi);
      }
    }
  }
}

TEST(Tree, CellDiameterShrinks) {
  // Median diameter at x0 = 0.5 across replicates, h = n^0.65.
  auto median_diameter = [](std::size_t n) {
    std::vector<double> diam;
    const double x0[1] = {0.5};
    for (std::uint64_t r = 0; r < 41; ++r) {
      const auto d = noisy_square(n, 9000 + r);
      const auto h = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(n), 0.65)));
      diam.push_back(grow(d, StoppingRule::min_cell_size(h)).cell_of(x0).diameter);
    }
    std::nth_element(diam.begin(), diam.begin() + 20, diam.end());
    return diam[20];
  };
  EXPECT_GT(median_diameter(50), median_diameter(2000));
}

TEST(Honest, SameSetEqualsPredict) {
  const auto d = noisy_square(100, 66);
  const Tree t = grow(d, StoppingRule::min_cell_size(8));
  for (double x : {0.05, 0.3, 0.5, 0.77, 0.99}) {
    const double x0[1] = {x};
    EXPECT_NEAR(honest_predict(t, d, x0), t.predict(x0), 1e-15);
  }
  const auto constant = sample_dataset(Dgp(RegressionFn::constant, 0.0, 1, 1.5), 100, derive_stream(67, 0));
  const double x0[1] = {0.42};
  EXPECT_DOUBLE_EQ(honest_predict(t, constant, x0), 1.5);
}

TEST(Honest, EmptyCell) {
  const auto d = noisy_square(100, 68);
  const Tree t = grow(d, StoppingRule::exact_splits(40));
  const Dataset far({0.999}, {1.0}, 1);
  const double x0[1] = {0.01};
  try {
    (void)honest_predict(t, far, x0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "empty honest cell");
  }
}

TEST(TreeText, RoundTrip) {
  const auto d = noisy_square(70, 69, 2);
  const Tree t = grow(d, StoppingRule::exact_splits(12));
  const std::string text = write_tree_text(t);
  const Tree back = read_tree_text("# comment\n" + text, 2);
  EXPECT_EQ(back.n_leaves(), 13u);
  EXPECT_EQ(write_tree_text(back), text);
  auto e = derive_stream(70, 0).engine();
  for (int q = 0; q < 200; ++q) {
    const double x0[2] = {e.uniform(), e.uniform()};
    EXPECT_EQ(back.predict(x0), t.predict(x0));
  }
}

TEST(TreeText, Format) {
  const Tree t = grow(four_points(), StoppingRule::exact_splits(1));
  EXPECT_EQ(write_tree_text(t), "I 0 0.5\nL 2 0\nL 2 1\n");
  EXPECT_THROW((void)read_tree_text("I 0 0.5\nL 2 0\n", 1), Error);
  EXPECT_THROW((void)read_tree_text("L 2 0\nL 2 1\n", 1), Error);
  EXPECT_THROW((void)read_tree_text("X 1\n", 1), Error);
  EXPECT_THROW((void)read_tree_text("I 3 0.5\nL 1 0\nL 1 1\n", 1), Error);
}
