#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "playerval/selection.hpp"
#include "playerval/synth.hpp"

using namespace playerval;

namespace {

BorutaConfig config_with_seed(std::uint64_t seed) {
  BorutaConfig c;
  c.seed = seed;
  return c;
}

// P(X >= k) for X ~ Binomial(n, 1/2) by direct summation of exact binomial coefficients.
double naive_upper(int n, int k) {
  double total = 0.0;
  for (int j = k; j <= n; ++j) {
    double c = 1.0;
    for (int i = 1; i <= j; ++i) c = c * (n - j + i) / i;
    total += c;
  }
  return total / std::pow(2.0, n);
}

}  // namespace

TEST(Boruta, PlantedCopyIsAcceptedQuickly) {
  const auto table = synth::planted_copy(500, 9, 31);
  const auto v = run_boruta(table, config_with_seed(1));
  EXPECT_EQ(v.decisions[0], FeatureDecision::Accepted);
  EXPECT_GT(v.decided_at[0], 0);
  EXPECT_LE(v.decided_at[0], 25);
}

TEST(Boruta, PureNoiseIsNotAccepted) {
  const auto table = synth::pure_noise(500, 10, 13);
  const auto v = run_boruta(table, config_with_seed(2));
  EXPECT_TRUE(v.accepted().empty());
  EXPECT_GE(v.rejected().size(), 8u);
  EXPECT_LE(v.iterations_run, 100);
}

TEST(Boruta, DeterministicForSeed) {
  const auto table = synth::friedman1(300, 5);
  BorutaConfig c = config_with_seed(4);
  c.max_iterations = 20;
  const auto a = run_boruta(table, c);
  const auto b = run_boruta(table, c);
  EXPECT_EQ(a.decisions, b.decisions);
  EXPECT_EQ(a.hit_counts, b.hit_counts);
  ASSERT_EQ(a.importance_history.size(), b.importance_history.size());
  for (std::size_t t = 0; t < a.importance_history.size(); ++t) {
    for (std::size_t f = 0; f < table.cols(); ++f) {
      const double x = a.importance_history[t][f], y = b.importance_history[t][f];
      EXPECT_TRUE(x == y || (std::isnan(x) && std::isnan(y))) << t << "," << f;
    }
  }
}

TEST(Boruta, VerdictInvariants) {
  const auto table = synth::friedman1(400, 6);
  BorutaConfig c = config_with_seed(8);
  c.max_iterations = 30;
  const auto v = run_boruta(table, c);
  const auto acc = v.accepted(), rej = v.rejected(), ten = v.tentative();
  EXPECT_EQ(acc.size() + rej.size() + ten.size(), table.cols());
  std::vector<std::string> all(acc);
  all.insert(all.end(), rej.begin(), rej.end());
  all.insert(all.end(), ten.begin(), ten.end());
  std::sort(all.begin(), all.end());
  auto names = table.feature_names();
  std::sort(names.begin(), names.end());
  EXPECT_EQ(all, names);
  for (std::size_t f = 0; f < table.cols(); ++f) {
    EXPECT_LE(v.hit_counts[f], v.iterations_run);
    EXPECT_GE(v.hit_counts[f], 0);
    if (v.decisions[f] == FeatureDecision::Tentative) {
      EXPECT_EQ(v.decided_at[f], 0);
    } else {
      EXPECT_GE(v.decided_at[f], c.min_iterations);
    }
  }
  EXPECT_EQ(v.importance_history.size(), static_cast<std::size_t>(v.iterations_run));
  EXPECT_EQ(v.selected(false).size(), acc.size());
  EXPECT_EQ(v.selected(true).size(), acc.size() + ten.size());
}

TEST(Boruta, GainImportanceSourceAlsoFindsSignal) {
  const auto table = synth::planted_copy(300, 5, 3);
  BorutaConfig c = config_with_seed(5);
  c.importance_source = ImportanceSource::Gain;
  const auto v = run_boruta(table, c);
  EXPECT_EQ(v.decisions[0], FeatureDecision::Accepted);
}

TEST(Boruta, InputValidation) {
  const auto small = synth::pure_noise(10, 4, 1);
  try {
    run_boruta(small, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewRows);
  }
  BorutaConfig bad;
  bad.alpha = 1.5;
  EXPECT_THROW(run_boruta(synth::pure_noise(50, 3, 1), bad), Error);
}

TEST(Shadow, ShufflePreservesTheMarginal) {
  std::vector<double> column(200);
  for (std::size_t i = 0; i < column.size(); ++i) column[i] = std::sin(static_cast<double>(i)) * 10.0;
  auto shuffled = column;
  Rng rng(12);
  shuffle(std::span<double>(shuffled), rng);
  EXPECT_NE(shuffled, column);
  std::sort(shuffled.begin(), shuffled.end());
  std::sort(column.begin(), column.end());
  EXPECT_EQ(shuffled, column);
}

TEST(BinomialTails, MatchDirectSummation) {
  for (int n : {1, 5, 17, 40, 100}) {
    for (int k = 0; k <= n; k += std::max(1, n / 7)) {
      EXPECT_NEAR(binomial_upper_tail(n, k), naive_upper(n, k), 1e-12) << n << "," << k;
      EXPECT_NEAR(binomial_lower_tail(n, k), naive_upper(n, n - k), 1e-12) << n << "," << k;
    }
  }
  EXPECT_NEAR(binomial_upper_tail(10, 10), 1.0 / 1024.0, 1e-15);
}
