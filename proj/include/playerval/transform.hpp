#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "playerval/error.hpp"

namespace playerval {

/// Fitted Box-Cox parameters. `shift` is added to raw values before the
/// power transform.
struct BoxCoxParams {
  double lambda = 1.0;
  double shift = 0.0;
  double log_likelihood = 0.0;
};

namespace boxcox {

inline constexpr double kLogBranchEpsilon = 1e-9;

inline double forward_one(double x, double lambda) {
  if (std::fabs(lambda) < kLogBranchEpsilon) return std::log(x);
  return std::expm1(lambda * std::log(x)) / lambda;
}

/// Profile log-likelihood of `lambda` for already-shifted positive values,
/// given the precomputed sum of their logs. Uses the biased variance.
///
/// Evaluated in centred log space: with c = mean(ln x) and u = ln x - c,
/// Var((x^l - 1)/l) = e^(2lc) Var(expm1(l u)/l), and the e^(2lc) factor
/// cancels against l * sum(ln x). This stays finite for values in the
/// millions where x^l itself under- or overflows.
inline double profile_log_likelihood(std::span<const double> shifted, double lambda, double sum_log) {
  const auto n = static_cast<double>(shifted.size());
  const double c = sum_log / n;
  const auto centred = [&](double x) {
    const double u = std::log(x) - c;
    return std::fabs(lambda) < kLogBranchEpsilon ? u : std::expm1(lambda * u) / lambda;
  };
  double mean = 0.0;
  for (double x : shifted) mean += centred(x);
  mean /= n;
  double ss = 0.0;
  for (double x : shifted) {
    const double d = centred(x) - mean;
    ss += d * d;
  }
  const double variance = ss / n;
  return -0.5 * n * std::log(variance) - sum_log;
}

inline double sum_of_logs(std::span<const double> shifted) {
  double s = 0.0;
  for (double x : shifted) s += std::log(x);
  return s;
}

}  // namespace boxcox

struct BoxCoxFitOptions {
  double lower = -5.0;
  double upper = 5.0;
  double tol = 1e-6;
  // When a value + shift is not strictly positive: false throws
  // NonPositiveInput, true picks shift = 1 - min(values).
  bool auto_shift = false;
  double shift = 0.0;
};

/// Maximum-likelihood lambda over [lower, upper]. A coarse scan at step 0.1
/// brackets the best grid point and golden-section search refines inside the
/// neighbouring cells until the bracket is narrower than `tol`.
inline BoxCoxParams fit_lambda(std::span<const double> values, const BoxCoxFitOptions& options = {}) {
  if (values.size() < 3) fail(ErrorCode::DegenerateInput, "Box-Cox fit needs at least 3 values");
  double shift = options.shift;
  double min_value = values[0];
  bool all_equal = true;
  for (double v : values) {
    if (std::isnan(v)) fail(ErrorCode::NonPositiveInput, "Box-Cox input contains NaN");
    min_value = std::min(min_value, v);
    all_equal = all_equal && v == values[0];
  }
  if (!(min_value + shift > 0.0)) {
    if (!options.auto_shift) fail(ErrorCode::NonPositiveInput, "Box-Cox input must be strictly positive");
    shift = 1.0 - min_value;
  }
  if (all_equal) fail(ErrorCode::DegenerateInput, "all Box-Cox inputs are equal");

  std::vector<double> shifted(values.begin(), values.end());
  for (double& x : shifted) x += shift;
  const double sum_log = boxcox::sum_of_logs(shifted);
  const auto ll = [&](double lambda) { return boxcox::profile_log_likelihood(shifted, lambda, sum_log); };

  const double step = 0.1;
  const int cells = static_cast<int>(std::ceil((options.upper - options.lower) / step - 1e-9));
  int best = 0;
  double best_ll = -INFINITY;
  for (int i = 0; i <= cells; ++i) {
    const double lam = std::min(options.lower + step * i, options.upper);
    const double v = ll(lam);
    if (v > best_ll) {
      best_ll = v;
      best = i;
    }
  }
  double a = std::max(options.lower, options.lower + step * (best - 1));
  double b = std::min(options.upper, options.lower + step * (best + 1));

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = ll(c);
  double fd = ll(d);
  while (b - a > options.tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = ll(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = ll(d);
    }
  }
  const double lambda = 0.5 * (a + b);
  return {lambda, shift, ll(lambda)};
}

/// Recomputes the profile log-likelihood of `params.lambda` on `values`.
inline double log_likelihood(std::span<const double> values, const BoxCoxParams& params) {
  std::vector<double> shifted(values.begin(), values.end());
  for (double& x : shifted) x += params.shift;
  return boxcox::profile_log_likelihood(shifted, params.lambda, boxcox::sum_of_logs(shifted));
}

inline double forward(double x, const BoxCoxParams& params) {
  const double s = x + params.shift;
  if (!(s > 0.0)) fail(ErrorCode::NonPositiveInput, "Box-Cox forward needs value + shift > 0");
  return boxcox::forward_one(s, params.lambda);
}

inline std::vector<double> forward(std::span<const double> values, const BoxCoxParams& params) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double x : values) out.push_back(forward(x, params));
  return out;
}

/// True when `y` lies in the image of the forward transform.
inline bool in_domain(double y, const BoxCoxParams& params) {
  if (std::fabs(params.lambda) < boxcox::kLogBranchEpsilon) return std::isfinite(y);
  return params.lambda * y + 1.0 > 0.0;
}

inline double inverse(double y, const BoxCoxParams& params) {
  const double lambda = params.lambda;
  if (std::fabs(lambda) < boxcox::kLogBranchEpsilon) return std::exp(y) - params.shift;
  const double base = lambda * y + 1.0;
  if (!(base > 0.0)) fail(ErrorCode::OutOfDomain, "lambda * y + 1 <= 0; prediction outside the transform's image");
  return std::exp(std::log1p(lambda * y) / lambda) - params.shift;
}

inline std::vector<double> inverse(std::span<const double> values, const BoxCoxParams& params) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double y : values) out.push_back(inverse(y, params));
  return out;
}

}  // namespace playerval
