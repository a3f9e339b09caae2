#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "subag/criterion.hpp"
#include "subag/data.hpp"
#include "subag/error.hpp"
#include "subag/tree.hpp"

namespace subag {

/// Regression function of a point in [0,1]^p.
using PointFunction = std::function<double(std::span<const double>)>;

inline PointFunction as_point_function(const Dgp& dgp) {
  return [dgp](std::span<const double> x) { return dgp.f(x); };
}

/// Axis-aligned box with nonempty interior.
struct PopulationCell {
  std::vector<Interval> bounds;

  explicit PopulationCell(std::vector<Interval> box) : bounds(std::move(box)) {
    require(!bounds.empty(), "population cell needs at least one dimension");
    for (const Interval& side : bounds) {
      require(side.lo < side.hi, "population cell has an empty interior");
    }
  }

  static PopulationCell unit(std::size_t dim) { return PopulationCell(std::vector<Interval>(dim)); }
  static PopulationCell interval(double lo, double hi) { return PopulationCell({Interval{lo, hi}}); }

  [[nodiscard]] std::size_t dim() const noexcept { return bounds.size(); }
  [[nodiscard]] double volume() const noexcept {
    double v = 1.0;
    for (const Interval& side : bounds) v *= side.hi - side.lo;
    return v;
  }
};

namespace detail {

inline double integrate_dims(const PointFunction& f, const std::vector<Interval>& box, std::vector<double>& point,
                             std::size_t dim) {
  using Quadrature = boost::math::quadrature::gauss_kronrod<double, 15>;
  auto inner = [&](double v) {
    point[dim] = v;
    return dim + 1 == box.size() ? f(point) : integrate_dims(f, box, point, dim + 1);
  };
  return Quadrature::integrate(inner, box[dim].lo, box[dim].hi, 12, 1e-12);
}

}  // namespace detail

/// Integral of f over a box by nested adaptive Gauss-Kronrod.
inline double integrate_box(const PointFunction& f, const std::vector<Interval>& box) {
  std::vector<double> point(box.size(), 0.0);
  return detail::integrate_dims(f, box, point, 0);
}

/// E[f(X) | X in box] and E[f(X)^2 | X in box] for X uniform.
struct CellMoments {
  double mean = 0.0;
  double second = 0.0;
  [[nodiscard]] double variance() const noexcept { return std::max(0.0, second - mean * mean); }
};

inline CellMoments cell_moments(const PointFunction& f, const std::vector<Interval>& box) {
  const double volume = PopulationCell(box).volume();
  const double first = integrate_box(f, box) / volume;
  const double second =
      integrate_box([&](std::span<const double> x) { const double v = f(x); return v * v; }, box) / volume;
  return {first, second};
}

/// P(L) P(R) / P(C) (E[f|L] - E[f|R])^2 under uniform X, probabilities as volumes.
inline double population_criterion(const PointFunction& f, const PopulationCell& cell, const Split& split) {
  require(split.feature < cell.dim(), "split feature outside the cell's dimensions");
  const Interval side = cell.bounds[split.feature];
  if (!(split.threshold > side.lo && split.threshold < side.hi)) throw Error("split on or outside cell boundary");
  auto left = cell.bounds;
  auto right = cell.bounds;
  left[split.feature].hi = split.threshold;
  right[split.feature].lo = split.threshold;
  const double vl = PopulationCell(left).volume();
  const double vr = PopulationCell(right).volume();
  const double gap = integrate_box(f, left) / vl - integrate_box(f, right) / vr;
  return vl * vr / cell.volume() * gap * gap;
}

/// Closed form of the population criterion for f(x) = x^2 on [a, b], p = 1.
inline double square_criterion_closed_form(double a, double b, double s) {
  const double mean_left = (s * s + s * a + a * a) / 3.0;
  const double mean_right = (b * b + b * s + s * s) / 3.0;
  const double gap = mean_left - mean_right;
  return (s - a) * (b - s) / (b - a) * gap * gap;
}

/// Maximizer of the population criterion over thresholds in a 1-D cell:
/// 10^4-point grid, then golden-section refinement to 1e-6.
inline Split population_argmax(const PointFunction& f, const PopulationCell& cell) {
  require(cell.dim() == 1, "population argmax is one-dimensional");
  const double lo = cell.bounds[0].lo;
  const double hi = cell.bounds[0].hi;
  constexpr std::size_t grid = 10000;
  const double step = (hi - lo) / static_cast<double>(grid);
  auto value = [&](double s) { return population_criterion(f, cell, Split{0, s}); };

  std::size_t best = 0;
  double best_value = -1.0;
  double worst_value = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < grid; ++j) {
    const double v = value(lo + (static_cast<double>(j) + 0.5) * step);
    if (v > best_value) {
      best_value = v;
      best = j;
    }
    worst_value = std::min(worst_value, v);
  }
  const double scale = integrate_box([&](std::span<const double> x) { const double v = f(x); return v * v; },
                                     cell.bounds);
  if (best_value - worst_value <= 1e-14 * std::max(scale, 1e-300)) throw Error("no unique argmax");

  // Golden section on the bracket around the best grid point.
  double a = lo + static_cast<double>(best) * step;
  double b = a + step;
  if (best > 0) a -= step;
  if (best + 1 < grid) b += step;
  a = std::max(a, lo + 1e-12);
  b = std::min(b, hi - 1e-12);
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = value(c), fd = value(d);
  while (b - a > 1e-7) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = value(d);
    }
  }
  return Split{0, 0.5 * (a + b)};
}

/// Reference split search: evaluates the product-form criterion directly on
/// every candidate, with the same admissibility and tie rules as best_split.
inline std::optional<ScoredSplit> exhaustive_best_split(const Dataset& data, std::span<const std::size_t> rows,
                                                        std::size_t min_child) {
  require(min_child >= 1, "min_child must be at least 1");
  if (rows.size() < 2) return std::nullopt;
  const double tolerance = tie_tolerance(data, rows);
  std::optional<ScoredSplit> best;
  for (const Split& split : candidate_splits(data, rows)) {
    std::size_t left = 0;
    for (std::size_t r : rows) left += split.goes_left(data.row(r)) ? 1 : 0;
    if (left < min_child || rows.size() - left < min_child) continue;
    const double value = criterion_product_form(data, rows, split);
    if (improves(value, best, tolerance)) best = ScoredSplit{split, value, left};
  }
  return best;
}

/// C(n, k), saturating at the largest representable value.
inline std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 c = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;
    if (c > std::numeric_limits<std::size_t>::max()) return std::numeric_limits<std::size_t>::max();
  }
  return static_cast<std::size_t>(c);
}

inline constexpr std::size_t enumeration_limit = 1'000'000;

/// All k-subsets of {0..n-1} in lexicographic order.
inline std::vector<std::vector<std::size_t>> enumerate_subsamples(std::size_t n, std::size_t k) {
  require(k >= 1 && k <= n, "subset size must lie in [1, n]");
  const std::size_t total = binomial(n, k);
  if (total > enumeration_limit) throw Error("enumeration too large");
  std::vector<std::vector<std::size_t>> out;
  out.reserve(total);
  std::vector<std::size_t> current(k);
  for (std::size_t i = 0; i < k; ++i) current[i] = i;
  while (true) {
    out.push_back(current);
    std::size_t i = k;
    while (i > 0 && current[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++current[i - 1];
    for (std::size_t j = i; j < k; ++j) current[j] = current[j - 1] + 1;
  }
  return out;
}

/// Average prediction over trees grown on every k-subset: E[T*_k(x0) | D_n].
inline double exhaustive_subagging(const Dataset& data, std::size_t k, const StoppingRule& stopping,
                                   std::span<const double> x0) {
  const auto subsets = enumerate_subsamples(data.size(), k);
  double sum = 0.0;
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    try {
      sum += grow(data, subsets[s], stopping).predict(x0);
    } catch (const GrowthError& e) {
      throw GrowthError("subset " + std::to_string(s) + ": " + e.what());
    }
  }
  return sum / static_cast<double>(subsets.size());
}

/// True iff the criterion takes at least two distinct values over the cell's
/// candidate splits: relative tolerance 1e-12 of the largest value, floored at
/// the rounding scale of the cell's second moment of y.
inline bool check_criterion_nonconstant(const Dataset& data, std::span<const std::size_t> rows) {
  require(rows.size() >= 3, "non-constancy check needs at least three rows");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const Split& split : candidate_splits(data, rows)) {
    const double v = criterion_product_form(data, rows, split);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi >= lo)) return false;
  return hi - lo > std::max(1e-12 * std::abs(hi), 1e-2 * tie_tolerance(data, rows));
}

}  // namespace subag
