#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "playerval/model.hpp"
#include "playerval/transform.hpp"

using namespace playerval;

namespace {

BoxCoxParams with_lambda(double lambda, double shift = 0.0) { return {lambda, shift, 0.0}; }

std::vector<double> log_normal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = std::exp(z(rng));
  return v;
}

}  // namespace

TEST(BoxCoxForward, WorkedValues) {
  EXPECT_DOUBLE_EQ(forward(5.0, with_lambda(1.0)), 4.0);
  EXPECT_NEAR(forward(std::exp(1.0), with_lambda(0.0)), 1.0, 1e-15);
  EXPECT_NEAR(forward(9.0, with_lambda(0.5)), 4.0, 1e-14);
}

TEST(BoxCoxForward, NonPositiveInputThrows) {
  try {
    forward(0.0, with_lambda(0.5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveInput);
  }
  EXPECT_NO_THROW(forward(0.0, with_lambda(0.5, 1.0)));
}

TEST(BoxCoxInverse, WorkedValues) {
  EXPECT_DOUBLE_EQ(inverse(4.0, with_lambda(1.0)), 5.0);
  EXPECT_NEAR(inverse(1.0, with_lambda(0.0)), std::exp(1.0), 1e-15);
  EXPECT_NEAR(inverse(4.0, with_lambda(0.5)), 9.0, 1e-13);
  try {
    inverse(-3.0, with_lambda(0.5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfDomain);
  }
  EXPECT_FALSE(in_domain(-3.0, with_lambda(0.5)));
  EXPECT_TRUE(in_domain(-3.0, with_lambda(0.0)));
}

// x^lambda underflows against 1 once x^|lambda| nears 1/epsilon, so x stays
// in a range where forward() keeps enough digits for every lambda in [-2, 2].
TEST(BoxCoxInverse, RoundTripOverRandomPairs) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> log_x(std::log(1e-2), std::log(1e3));
  std::uniform_real_distribution<double> lam(-2.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = std::exp(log_x(rng));
    const auto p = with_lambda(i % 50 == 0 ? 0.0 : lam(rng));
    const double back = inverse(forward(x, p), p);
    EXPECT_LE(std::fabs(back - x) / x, 1e-9) << "x=" << x << " lambda=" << p.lambda;
  }
}

TEST(BoxCoxForward, IsStrictlyIncreasing) {
  for (double lambda : {-1.5, -0.3, 0.0, 0.4, 1.0, 2.5}) {
    double prev = -INFINITY;
    for (double x = 0.05; x < 50.0; x *= 1.3) {
      const double y = forward(x, with_lambda(lambda));
      EXPECT_GT(y, prev);
      prev = y;
    }
  }
}

TEST(BoxCoxForward, LogBranchIsTheSmallLambdaLimit) {
  for (double x : {0.1, 0.5, 2.0, 30.0, 1e4}) {
    const double eps = 1e-6;
    const double power = (std::pow(x, eps) - 1.0) / eps;
    EXPECT_NEAR(power, std::log(x), 1e-4);
    EXPECT_NEAR(forward(x, with_lambda(eps)), std::log(x), 1e-4);
  }
}

TEST(FitLambda, LogNormalSampleIsNearZero) {
  const auto v = log_normal(5000, 3);
  const auto p = fit_lambda(v);
  EXPECT_GE(p.lambda, -0.1);
  EXPECT_LE(p.lambda, 0.1);
}

// One N(100, 5) sample pins lambda only loosely, so the closeness to 1 is
// checked on the mean over 20 samples and each fit against the grid scan.
TEST(FitLambda, NormalSampleIsNearOne) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(100.0, 5.0);
  double sum = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> v(5000);
    for (double& x : v) x = std::max(1e-3, z(rng));
    const double fitted = fit_lambda(v).lambda;
    if (rep < 3) {
      EXPECT_NEAR(fitted, oracle::boxcox_grid_argmax(v, -5.0, 5.0, 0.001), 0.002);
    }
    sum += fitted;
  }
  EXPECT_NEAR(sum / 20.0, 1.0, 0.15);
}

TEST(FitLambda, MatchesDenseGridScan) {
  std::mt19937_64 rng(9);
  std::gamma_distribution<double> gamma(2.0, 3.0);
  std::vector<std::vector<double>> samples{log_normal(2000, 11)};
  std::vector<double> g(1500);
  for (double& x : g) x = gamma(rng);
  samples.push_back(g);
  std::vector<double> sq(1500);
  for (double& x : sq) x = std::pow(1.0 + gamma(rng), 2.0);
  samples.push_back(sq);
  for (const auto& s : samples) {
    const double oracle_lambda = oracle::boxcox_grid_argmax(s, -5.0, 5.0, 0.001);
    EXPECT_NEAR(fit_lambda(s).lambda, oracle_lambda, 0.002);
  }
}

TEST(FitLambda, ReportedLikelihoodMatchesDefinition) {
  const auto v = log_normal(500, 17);
  const auto p = fit_lambda(v);
  EXPECT_NEAR(p.log_likelihood, oracle::boxcox_ll(v, p.lambda), 1e-6 * std::fabs(p.log_likelihood));
  EXPECT_NEAR(log_likelihood(v, with_lambda(0.7)), oracle::boxcox_ll(v, 0.7), 1e-6);
}

TEST(FitLambda, EuroScaleValuesStayFinite) {
  // Log-normal market values in the 1e4..2e8 range.
  auto v = log_normal(3000, 21);
  for (double& x : v) x = std::round(1e6 * std::pow(x, 1.5));
  const auto p = fit_lambda(v);
  EXPECT_TRUE(std::isfinite(p.log_likelihood));
  EXPECT_GT(p.lambda, -0.1);
  EXPECT_LT(p.lambda, 0.1);
  // Scaling the data must not move the maximiser.
  std::vector<double> small(v);
  for (double& x : small) x /= 1e6;
  EXPECT_NEAR(fit_lambda(small).lambda, p.lambda, 1e-4);
}

TEST(FitLambda, DegenerateAndNonPositiveInputs) {
  const std::vector<double> same(10, 4.0);
  try {
    fit_lambda(same);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateInput);
  }
  const std::vector<double> with_zero{0.0, 1.0, 2.0, 3.0};
  try {
    fit_lambda(with_zero);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveInput);
  }
  BoxCoxFitOptions opts;
  opts.auto_shift = true;
  const auto p = fit_lambda(with_zero, opts);
  EXPECT_DOUBLE_EQ(p.shift, 1.0);
}

TEST(FitTargetTransform, ConstantTargetFallsBackToIdentityShape) {
  const std::vector<double> y(6, 7.0);
  const auto p = fit_target_transform(y, false);
  EXPECT_DOUBLE_EQ(p.lambda, 1.0);
  EXPECT_DOUBLE_EQ(forward(7.0, p), 6.0);
}
