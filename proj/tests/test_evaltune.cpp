#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "playerval/evaltune.hpp"
#include "playerval/synth.hpp"

using namespace playerval;

namespace {

ModelSpec small_gbdt(int trees = 20, int depth = 2) {
  ModelSpec s;
  s.gbdt.n_estimators = trees;
  s.gbdt.tree.max_depth = depth;
  return s;
}

// Positive-target table with a few missing cells in column 0.
FeatureTable marker_table(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> m(n * 3), y(n);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 3; ++j) m[i * 3 + j] = z(rng);
    if (i % 7 == 3) m[i * 3] = std::numeric_limits<double>::quiet_NaN();
    y[i] = std::exp(1.0 + 0.5 * m[i * 3 + 1] + 0.2 * z(rng));
    ids.push_back("r" + std::to_string(i));
  }
  return {{"marker", "b", "c"}, m, y, ids};
}

}  // namespace

TEST(Metrics, RSquaredFixtures) {
  const std::vector<double> y{1, 2, 3};
  EXPECT_EQ(r_squared(y, y), 1.0);
  EXPECT_EQ(r_squared(y, std::vector<double>{2, 2, 2}), 0.0);
  EXPECT_EQ(r_squared(y, std::vector<double>{1, 2, 4}), 0.5);
}

TEST(Metrics, RmseFixtures) {
  const std::vector<double> y{1, 2, 3};
  EXPECT_EQ(rmse(y, y), 0.0);
  EXPECT_EQ(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}), std::sqrt(12.5));
}

TEST(Metrics, ConstantTargetAndShapeErrors) {
  try {
    r_squared(std::vector<double>{2, 2}, std::vector<double>{1, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVariance);
  }
  EXPECT_TRUE(std::isnan(score(std::vector<double>{2, 2}, std::vector<double>{2, 2}, OutputScale::Euro).r_squared));
  EXPECT_THROW(rmse(std::vector<double>{1}, std::vector<double>{1, 2}), Error);
}

TEST(Metrics, ScaleEquivariance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::vector<double> y(50), p(50);
  for (std::size_t i = 0; i < 50; ++i) {
    y[i] = z(rng);
    p[i] = y[i] + 0.3 * z(rng);
  }
  std::vector<double> ys(y), ps(p);
  for (auto& v : ys) v = 7.0 * v + 3.0;
  for (auto& v : ps) v = 7.0 * v + 3.0;
  EXPECT_NEAR(r_squared(ys, ps), r_squared(y, p), 1e-12);
  EXPECT_NEAR(rmse(ys, ps), 7.0 * rmse(y, p), 1e-12);
}

TEST(KFold, SizesAndPartition) {
  auto sizes = [](std::size_t n, int k) {
    const auto f = kfold_split(n, k, 1);
    std::vector<std::size_t> s(static_cast<std::size_t>(k), 0);
    for (int v : f) ++s[static_cast<std::size_t>(v)];
    return s;
  };
  EXPECT_EQ(sizes(10, 5), (std::vector<std::size_t>{2, 2, 2, 2, 2}));
  EXPECT_EQ(sizes(11, 5), (std::vector<std::size_t>{3, 2, 2, 2, 2}));
  EXPECT_EQ(kfold_split(30, 3, 9), kfold_split(30, 3, 9));
  for (int k : {1, 0, 12}) {
    try {
      kfold_split(11, k, 1);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::BadK);
    }
  }
}

TEST(CrossValidate, ConstantTargetPredictsTheConstant) {
  auto table = synth::friedman1(40, 2);
  table = table.with_target(std::vector<double>(40, 5.0));
  const auto cv = cross_validate(small_gbdt(), table, 4, 1);
  for (double p : cv.oof_euro) EXPECT_NEAR(p, 5.0, 1e-12);
  EXPECT_NEAR(cv.mean_rmse_euro, 0.0, 1e-12);
  EXPECT_NEAR(cv.mean_rmse_transformed, 0.0, 1e-12);
  EXPECT_TRUE(std::isnan(cv.mean_r_squared));
}

TEST(CrossValidate, LeaveOneOutMatchesHandRolledLoop) {
  const FeatureTable table({"a", "b"}, {1, 5, 2, 3, 3, 8, 4, 1, 5, 9, 6, 2}, {2.0, 3.5, 3.0, 6.0, 5.5, 9.0},
                           {"r0", "r1", "r2", "r3", "r4", "r5"});
  const auto spec = small_gbdt(10, 1);
  const std::vector<int> folds{0, 1, 2, 3, 4, 5};
  const std::uint64_t seed = 17;
  const auto cv = cross_validate(spec, table, folds, seed);

  double abs_sum = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < 6; ++j) {
      if (j != i) keep.push_back(j);
    }
    const auto model = fit_model(spec, table.select_rows(keep), derive_seed(seed, i));
    const std::vector<std::size_t> one{i};
    const double pred = model.predict_euro(table.select_rows(one))[0];
    EXPECT_NEAR(cv.oof_euro[i], pred, 1e-12);
    const double err = pred - table.target()[i];
    EXPECT_NEAR(cv.folds[i].euro.rmse, std::fabs(err), 1e-12);
    abs_sum += std::fabs(err);
  }
  EXPECT_NEAR(cv.mean_rmse_euro, abs_sum / 6.0, 1e-12);
}

TEST(CrossValidate, HeldOutFoldDoesNotLeakIntoFittedStatistics) {
  const auto table = marker_table(60, 4);
  ModelSpec spec = small_gbdt(5, 2);
  spec.impute = true;
  const auto folds = kfold_split(table.rows(), 5, 8);
  const auto base = cross_validate(spec, table, folds, 3);

  for (int f = 0; f < 5; ++f) {
    auto matrix = table.matrix();
    auto target = table.target();
    for (std::size_t i = 0; i < table.rows(); ++i) {
      if (folds[i] != f) continue;
      if (!std::isnan(matrix[i * 3])) matrix[i * 3] += 1000.0;
      target[i] *= 50.0;
    }
    const auto perturbed = table.with_matrix(matrix).with_target(target);
    const auto cv = cross_validate(spec, perturbed, folds, 3);
    const auto& a = base.folds[static_cast<std::size_t>(f)];
    const auto& b = cv.folds[static_cast<std::size_t>(f)];
    EXPECT_EQ(a.imputation_means, b.imputation_means) << "fold " << f;
    ASSERT_TRUE(a.box_cox && b.box_cox);
    EXPECT_EQ(a.box_cox->lambda, b.box_cox->lambda) << "fold " << f;
    // the marker edit is visible to every other fold's statistics
    const auto& other = cv.folds[static_cast<std::size_t>((f + 1) % 5)];
    EXPECT_NE(other.imputation_means[0], base.folds[static_cast<std::size_t>((f + 1) % 5)].imputation_means[0]);
  }
}

TEST(CrossValidate, FriedmanDefaults) {
  auto table = synth::friedman1(1000, 30);
  auto y = table.target();
  for (double& v : y) v += 10.0;  // keep the Box-Cox input positive
  table = table.with_target(y);
  const auto cv = cross_validate(ModelSpec{}, table, 5, 2);
  EXPECT_GE(cv.mean_r_squared, 0.85);
}

TEST(GridSearch, SingletonGrid) {
  const auto table = synth::friedman1(80, 3).with_target(std::vector<double>(80, 1.0));
  GridSpec grid{ModelFamily::Gbdt, {{"max_depth", {2}}}};
  const auto r = grid_search(grid, small_gbdt(), table, 3, 1);
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_EQ(r.best_index, 0u);
  EXPECT_EQ(r.best_spec.gbdt.tree.max_depth, 2);
}

TEST(GridSearch, DominantConfigurationWins) {
  auto table = synth::friedman1(300, 12);
  auto y = table.target();
  for (double& v : y) v += 10.0;
  table = table.with_target(y);
  GridSpec grid{ModelFamily::Gbdt, {{"max_depth", {0, 3}}}};
  const auto r = grid_search(grid, small_gbdt(50, 1), table, 3, 4);
  EXPECT_EQ(r.best_index, 1u);
  EXPECT_EQ(r.best_spec.gbdt.tree.max_depth, 3);
  EXPECT_GT(r.points[1].cv.mean_r_squared, r.points[0].cv.mean_r_squared);
}

TEST(GridSearch, DuplicateBestReportsFirstOccurrence) {
  auto table = synth::friedman1(200, 13);
  auto y = table.target();
  for (double& v : y) v += 10.0;
  table = table.with_target(y);
  GridSpec grid{ModelFamily::Gbdt, {{"max_depth", {1, 3, 3}}}};
  const auto r = grid_search(grid, small_gbdt(40, 1), table, 3, 4);
  EXPECT_EQ(r.points[1].cv.mean_r_squared, r.points[2].cv.mean_r_squared);
  EXPECT_EQ(r.best_index, 1u);
}

TEST(GridSearch, PointEnumerationIsLexicographic) {
  GridSpec grid{ModelFamily::Gbdt, {{"learning_rate", {0.1, 0.2}}, {"max_depth", {2, 3, 4}}}};
  ASSERT_EQ(grid.size(), 6u);
  EXPECT_EQ(grid.point(0), (std::vector<double>{0.1, 2}));
  EXPECT_EQ(grid.point(2), (std::vector<double>{0.1, 4}));
  EXPECT_EQ(grid.point(3), (std::vector<double>{0.2, 2}));
  GridSpec rf{ModelFamily::RandomForest, {{"learning_rate", {0.1}}}};
  EXPECT_THROW(apply_grid_point(ModelSpec{}, rf, {0.1}), Error);
}
