#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "subag/error.hpp"

namespace subag {

inline double mean_of(std::span<const double> v) {
  require(!v.empty(), "mean of an empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample variance with divisor size - ddof.
inline double variance_of(std::span<const double> v, std::size_t ddof = 1) {
  require(v.size() > ddof, "variance needs more observations than ddof");
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - ddof);
}

inline double covariance_of(std::span<const double> a, std::span<const double> b, std::size_t ddof = 1) {
  require(a.size() == b.size() && a.size() > ddof, "covariance needs paired samples");
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size() - ddof);
}

/// Standard error of the mean.
inline double standard_error(std::span<const double> v) {
  return std::sqrt(variance_of(v, 1) / static_cast<double>(v.size()));
}

/// Monte Carlo summary of an estimator at one point. The variance uses divisor
/// R, so mse = bias2 + variance holds up to rounding.
struct ReplicateStats {
  double mean = 0.0;
  double variance = 0.0;
  double bias2 = 0.0;
  double mse = 0.0;
  std::size_t replicates = 0;

  static ReplicateStats from(std::span<const double> estimates, double truth) {
    ReplicateStats s;
    s.replicates = estimates.size();
    s.mean = mean_of(estimates);
    s.variance = variance_of(estimates, 0);
    s.bias2 = (s.mean - truth) * (s.mean - truth);
    double sq = 0.0;
    for (double e : estimates) sq += (e - truth) * (e - truth);
    s.mse = sq / static_cast<double>(estimates.size());
    return s;
  }
};

/// Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && a.size() >= 2, "spearman needs paired samples");
  auto ranks = [](std::span<const double> v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double below = 0.0, equal = 0.0;
      for (double w : v) {
        if (w < v[i]) below += 1.0;
        if (w == v[i]) equal += 1.0;
      }
      r[i] = below + (equal + 1.0) / 2.0;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double c = covariance_of(ra, rb, 0);
  const double va = variance_of(ra, 0);
  const double vb = variance_of(rb, 0);
  require(va > 0.0 && vb > 0.0, "spearman of a constant sample");
  return c / std::sqrt(va * vb);
}

}  // namespace subag
