#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "subag/data.hpp"
#include "subag/error.hpp"

namespace subag {

/// Axis-aligned split. A point goes left iff x[feature] <= threshold.
struct Split {
  std::size_t feature = 0;
  double threshold = 0.5;

  [[nodiscard]] bool goes_left(std::span<const double> point) const noexcept {
    return point[feature] <= threshold;
  }

  friend bool operator==(const Split&, const Split&) = default;
};

/// A split together with its criterion value (within-cell fractions) and the
/// number of cell rows routed left.
struct ScoredSplit {
  Split split;
  double value = 0.0;
  std::size_t left_count = 0;
};

namespace detail {

struct SideMoments {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;  // divisor count
};

inline std::pair<SideMoments, SideMoments> side_moments(const Dataset& data, std::span<const std::size_t> rows,
                                                        const Split& split) {
  SideMoments left, right;
  double left_sum = 0.0, right_sum = 0.0;
  for (std::size_t r : rows) {
    if (split.goes_left(data.row(r))) {
      ++left.count;
      left_sum += data.y(r);
    } else {
      ++right.count;
      right_sum += data.y(r);
    }
  }
  if (left.count == 0 || right.count == 0) throw Error("degenerate split");
  left.mean = left_sum / static_cast<double>(left.count);
  right.mean = right_sum / static_cast<double>(right.count);
  for (std::size_t r : rows) {
    if (split.goes_left(data.row(r))) {
      const double d = data.y(r) - left.mean;
      left.variance += d * d;
    } else {
      const double d = data.y(r) - right.mean;
      right.variance += d * d;
    }
  }
  left.variance /= static_cast<double>(left.count);
  right.variance /= static_cast<double>(right.count);
  return {left, right};
}

/// Midpoint strictly inside (lo, hi]; falls back to lo for adjacent doubles.
inline double midpoint(double lo, double hi) noexcept {
  const double mid = 0.5 * (lo + hi);
  return mid < hi ? mid : lo;
}

}  // namespace detail

/// Within-cell variance reduction V[C] - (n_L/n_C) V[L] - (n_R/n_C) V[R].
/// The three variances nearly cancel when the split barely helps, so they
/// are accumulated in extended precision.
inline double criterion_decrease_form(const Dataset& data, std::span<const std::size_t> rows, const Split& split) {
  using Wide = long double;
  Wide sum[3] = {0, 0, 0};
  std::size_t count[3] = {0, 0, 0};
  for (std::size_t r : rows) {
    const std::size_t side = split.goes_left(data.row(r)) ? 1 : 2;
    sum[0] += data.y(r);
    sum[side] += data.y(r);
    ++count[0];
    ++count[side];
  }
  if (count[1] == 0 || count[2] == 0) throw Error("degenerate split");
  Wide mean[3], ss[3] = {0, 0, 0};
  for (int s = 0; s < 3; ++s) mean[s] = sum[s] / static_cast<Wide>(count[s]);
  for (std::size_t r : rows) {
    const std::size_t side = split.goes_left(data.row(r)) ? 1 : 2;
    const Wide d0 = data.y(r) - mean[0];
    const Wide ds = data.y(r) - mean[side];
    ss[0] += d0 * d0;
    ss[side] += ds * ds;
  }
  // (n_s/n) * (ss_s/n_s) = ss_s/n.
  const Wide n = static_cast<Wide>(count[0]);
  return static_cast<double>(ss[0] / n - ss[1] / n - ss[2] / n);
}

/// Within-cell (n_L n_R / n_C^2) (mean_L - mean_R)^2.
inline double criterion_product_form(const Dataset& data, std::span<const std::size_t> rows, const Split& split) {
  const auto [left, right] = detail::side_moments(data, rows, split);
  const double n = static_cast<double>(rows.size());
  const double gap = left.mean - right.mean;
  return static_cast<double>(left.count) * static_cast<double>(right.count) / (n * n) * gap * gap;
}

/// Midpoints between consecutive distinct values of each feature, feature-major
/// and ascending within a feature.
inline std::vector<Split> candidate_splits(const Dataset& data, std::span<const std::size_t> rows) {
  std::vector<Split> out;
  std::vector<double> values;
  values.reserve(rows.size());
  for (std::size_t f = 0; f < data.dim(); ++f) {
    values.clear();
    for (std::size_t r : rows) values.push_back(data.x(r, f));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      out.push_back({f, detail::midpoint(values[i], values[i + 1])});
    }
  }
  return out;
}

/// Scale below which two criterion values count as tied. Criterion values are
/// bounded by the within-cell second moment of y, and both search routes
/// round at about 1e-16 of it.
inline double tie_tolerance(const Dataset& data, std::span<const std::size_t> rows) {
  double second_moment = 0.0;
  for (std::size_t r : rows) second_moment += data.y(r) * data.y(r);
  second_moment /= static_cast<double>(rows.size());
  return 1e-11 * std::max(second_moment, 1e-300);
}

/// Scan-order tie rule shared by the search and its oracle: a later candidate
/// replaces the incumbent only if it is better by more than the tolerance.
inline bool improves(double candidate, const std::optional<ScoredSplit>& best, double tolerance) noexcept {
  return !best || candidate > best->value + tolerance;
}

/// Best admissible split (each side >= min_child rows) by the product-form
/// criterion, using sorted prefix sums per feature. Ties go to the lowest
/// feature, then the smallest threshold.
inline std::optional<ScoredSplit> best_split(const Dataset& data, std::span<const std::size_t> rows,
                                             std::size_t min_child) {
  require(min_child >= 1, "min_child must be at least 1");
  const std::size_t m = rows.size();
  if (m < 2 || m < 2 * min_child) return std::nullopt;

  const double tolerance = tie_tolerance(data, rows);
  double total = 0.0;
  for (std::size_t r : rows) total += data.y(r);

  std::optional<ScoredSplit> best;
  std::vector<std::pair<double, double>> sorted(m);
  const double md = static_cast<double>(m);
  for (std::size_t f = 0; f < data.dim(); ++f) {
    for (std::size_t i = 0; i < m; ++i) sorted[i] = {data.x(rows[i], f), data.y(rows[i])};
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double left_sum = 0.0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      left_sum += sorted[i].second;
      if (!(sorted[i].first < sorted[i + 1].first)) continue;
      const std::size_t nl = i + 1;
      const std::size_t nr = m - nl;
      if (nl < min_child || nr < min_child) continue;
      const double gap = left_sum / static_cast<double>(nl) - (total - left_sum) / static_cast<double>(nr);
      const double value = static_cast<double>(nl) * static_cast<double>(nr) / (md * md) * gap * gap;
      if (improves(value, best, tolerance)) {
        best = ScoredSplit{{f, detail::midpoint(sorted[i].first, sorted[i + 1].first)}, value, nl};
      }
    }
  }
  return best;
}

}  // namespace subag
