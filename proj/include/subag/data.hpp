#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "subag/error.hpp"
#include "subag/rng.hpp"

namespace subag {

/// Row-major n x p covariates in [0,1]^p paired with n responses.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<double> x, std::vector<double> y, std::size_t dim)
      : x_(std::move(x)), y_(std::move(y)), dim_(dim) {
    require(dim_ >= 1, "dataset dimension must be at least 1");
    require(!y_.empty(), "dataset must hold at least one row");
    require(x_.size() == y_.size() * dim_, "covariate and response lengths differ");
    for (double v : x_) {
      require(v >= 0.0 && v <= 1.0, "covariate outside [0,1]");
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return y_.size(); }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }

  [[nodiscard]] double x(std::size_t row, std::size_t feature) const noexcept {
    return x_[row * dim_ + feature];
  }
  [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
    return {x_.data() + i * dim_, dim_};
  }
  [[nodiscard]] double y(std::size_t row) const noexcept { return y_[row]; }

  [[nodiscard]] const std::vector<double>& covariates() const noexcept { return x_; }
  [[nodiscard]] const std::vector<double>& responses() const noexcept { return y_; }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::size_t dim_ = 1;
};

enum class RegressionFn { square, linear, constant };

inline RegressionFn parse_regression_fn(std::string_view name) {
  if (name == "square") return RegressionFn::square;
  if (name == "linear") return RegressionFn::linear;
  if (name == "constant") return RegressionFn::constant;
  throw Error("unknown regression function '" + std::string(name) + "'");
}

inline std::string_view to_string(RegressionFn fn) noexcept {
  switch (fn) {
    case RegressionFn::square: return "square";
    case RegressionFn::linear: return "linear";
    case RegressionFn::constant: return "constant";
  }
  return "?";
}

/// Data-generating process Y = f(X) + eps, X ~ U([0,1]^p), eps ~ N(0, sd^2).
/// The builtin regression functions depend on the first coordinate only.
class Dgp {
 public:
  Dgp(RegressionFn fn, double noise_sd, std::size_t dim = 1, double constant = 0.0)
      : fn_(fn), noise_sd_(noise_sd), dim_(dim), constant_(constant) {
    require(noise_sd_ >= 0.0, "noise sd must be non-negative");
    require(dim_ >= 1, "dimension must be at least 1");
  }

  [[nodiscard]] RegressionFn regression_fn() const noexcept { return fn_; }
  [[nodiscard]] double noise_sd() const noexcept { return noise_sd_; }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] double constant() const noexcept { return constant_; }

  [[nodiscard]] double f(std::span<const double> point) const noexcept { return f1(point[0]); }

  /// f as a function of the first coordinate.
  [[nodiscard]] double f1(double x1) const noexcept {
    switch (fn_) {
      case RegressionFn::square: return x1 * x1;
      case RegressionFn::linear: return x1;
      case RegressionFn::constant: return constant_;
    }
    return 0.0;
  }

 private:
  RegressionFn fn_;
  double noise_sd_;
  std::size_t dim_;
  double constant_;
};

/// n*p uniform draws, row-major.
inline std::vector<double> sample_covariates(std::size_t dim, std::size_t n, RngStream rng) {
  auto engine = rng.engine();
  std::vector<double> x(n * dim);
  for (double& v : x) v = engine.uniform();
  return x;
}

/// Responses f(x_i) + eps_i for fixed covariates; the noise comes from `rng`.
inline Dataset attach_responses(const Dgp& dgp, std::vector<double> x, RngStream rng) {
  require(x.size() % dgp.dim() == 0, "covariate buffer is not a multiple of the dimension");
  const std::size_t n = x.size() / dgp.dim();
  auto engine = rng.engine();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double noise = dgp.noise_sd() == 0.0 ? 0.0 : dgp.noise_sd() * engine.normal();
    y[i] = dgp.f1(x[i * dgp.dim()]) + noise;
  }
  return Dataset(std::move(x), std::move(y), dgp.dim());
}

/// n i.i.d. draws from the process. Covariates use child 0 of `rng`, noise child 1.
inline Dataset sample_dataset(const Dgp& dgp, std::size_t n, RngStream rng) {
  require(n >= 1, "sample size must be at least 1");
  return attach_responses(dgp, sample_covariates(dgp.dim(), n, rng.child(0)), rng.child(1));
}

/// First m rows of a dataset, order preserved.
inline Dataset nested_prefix(const Dataset& data, std::size_t m) {
  if (m > data.size()) throw Error("prefix exceeds dataset");
  require(m >= 1, "prefix must hold at least one row");
  const auto& x = data.covariates();
  const auto& y = data.responses();
  return Dataset(std::vector<double>(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(m * data.dim())),
                 std::vector<double>(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(m)), data.dim());
}

}  // namespace subag
