#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "playerval/explain.hpp"
#include "playerval/synth.hpp"

using namespace playerval;

namespace {

MatrixView view(const FeatureTable& t) { return {t.matrix(), t.rows(), t.cols()}; }

// One split on `feature` at 0.5 with the given leaves and equal covers.
RegressionTree stump(int feature, double left, double right, std::size_t m, double cover = 50.0) {
  RegressionTree t;
  t.n_features = m;
  t.nodes = {{.feature = feature, .threshold = 0.5, .left = 1, .right = 2, .value = 0.5 * (left + right), .cover = 2 * cover},
             {.value = left, .cover = cover},
             {.value = right, .cover = cover}};
  return t;
}

GbdtModel single_leaf_model(double v, std::size_t m) {
  GbdtModel g;
  g.learning_rate = 1.0;
  g.n_features = m;
  g.trees.push_back(RegressionTree{{TreeNode{.value = v, .cover = 10.0}}, m});
  return g;
}

Explanation fixture_explanation() {
  Explanation e;
  e.n_rows = 3;
  e.n_features = 2;
  e.shap_values = {1.0, -2.0, -3.0, 0.5, 2.0, 0.5};
  e.feature_values = {1.0, 10.0, 2.0, 20.0, 3.0, 30.0};
  e.predictions = {0, 0, 0};
  e.feature_names = {"a", "b"};
  e.row_ids = {"x", "y", "z"};
  return e;
}

}  // namespace

TEST(TreeShap, MatchesSubsetEnumerationOnRandomEnsembles) {
  std::mt19937_64 rng(2718);
  std::uniform_int_distribution<std::size_t> m_dist(1, 6), tree_dist(1, 5);
  std::uniform_int_distribution<int> depth_dist(1, 3), xval(0, 5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int e = 0; e < 50; ++e) {
    const auto m = m_dist(rng);
    std::vector<RegressionTree> trees;
    const auto n_trees = tree_dist(rng);
    for (std::size_t k = 0; k < n_trees; ++k) trees.push_back(oracle::random_tree(rng, m, depth_dist(rng)));
    const double offset = unit(rng) * 4.0 - 2.0;
    const double scale = 0.1 + unit(rng);
    const AdditiveForm form{offset, scale, trees, m};
    for (int r = 0; r < 5; ++r) {
      std::vector<double> x(m);
      for (double& v : x) v = xval(rng);
      const auto expected = oracle::shapley(trees, offset, scale, m, x);
      const auto got = tree_shap(form, MatrixView(x, 1, m));
      const auto brute = brute_force_shap(form, x);
      for (std::size_t j = 0; j < m; ++j) {
        EXPECT_NEAR(got.shap(0, j), expected[j], 1e-9) << "ensemble " << e << " feature " << j;
        EXPECT_NEAR(brute[j], expected[j], 1e-9);
      }
    }
  }
}

TEST(TreeShap, LocalAccuracyOnTrainedGbdt) {
  const auto train = synth::friedman1(600, 40);
  const auto rows = synth::friedman1(200, 41);
  const Regressor model = fit_gbdt(view(train), train.target(), GbdtParams{.n_estimators = 300});
  const auto e = tree_shap(model, rows);
  for (std::size_t i = 0; i < e.n_rows; ++i) {
    double sum = e.base_value;
    for (std::size_t j = 0; j < e.n_features; ++j) sum += e.shap(i, j);
    EXPECT_NEAR(sum, predict(model, rows.row(i)), 1e-8);
  }
}

TEST(TreeShap, DepthOneStumpWorkedExample) {
  const std::vector<RegressionTree> trees{stump(0, 2.0, 4.0, 3)};
  const AdditiveForm form{0.0, 1.0, trees, 3};
  const std::vector<double> x{1.0, 7.0, -3.0};  // routed right
  const auto e = tree_shap(form, MatrixView(x, 1, 3));
  EXPECT_DOUBLE_EQ(e.base_value, 3.0);
  EXPECT_NEAR(e.shap(0, 0), 1.0, 1e-15);
  EXPECT_EQ(e.shap(0, 1), 0.0);
  EXPECT_EQ(e.shap(0, 2), 0.0);
}

TEST(TreeShap, SingleFeatureIsTwoTermDifference) {
  std::mt19937_64 rng(5);
  const std::vector<RegressionTree> trees{oracle::random_tree(rng, 1, 3), oracle::random_tree(rng, 1, 2)};
  const AdditiveForm form{1.0, 0.5, trees, 1};
  for (double x : {0.0, 2.0, 4.0}) {
    const std::vector<double> row{x};
    const double f_full = form.offset + form.scale * (trees[0].predict(row) + trees[1].predict(row));
    EXPECT_NEAR(brute_force_shap(form, row)[0], f_full - expected_value(form), 1e-12);
  }
}

TEST(TreeShap, UnusedFeatureGetsZero) {
  const auto train = synth::friedman1(300, 3);
  auto matrix = train.matrix();
  for (std::size_t i = 0; i < train.rows(); ++i) matrix[i * train.cols() + 7] = 0.25;  // constant column
  const auto table = train.with_matrix(matrix);
  const Regressor model = fit_gbdt(view(table), table.target(), GbdtParams{.n_estimators = 50});
  const auto e = tree_shap(model, table);
  for (std::size_t i = 0; i < e.n_rows; ++i) EXPECT_EQ(e.shap(i, 7), 0.0);
}

TEST(TreeShap, AdditiveAcrossTrees) {
  std::mt19937_64 rng(8);
  const std::vector<RegressionTree> a{oracle::random_tree(rng, 4, 3)};
  const std::vector<RegressionTree> b{oracle::random_tree(rng, 4, 3)};
  const std::vector<RegressionTree> both{a[0], b[0]};
  const std::vector<double> x{1, 3, 0, 5};
  const auto pa = tree_shap(AdditiveForm{0.0, 2.0, a, 4}, MatrixView(x, 1, 4));
  const auto pb = tree_shap(AdditiveForm{0.0, 2.0, b, 4}, MatrixView(x, 1, 4));
  const auto pab = tree_shap(AdditiveForm{0.0, 2.0, both, 4}, MatrixView(x, 1, 4));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(pab.shap(0, j), pa.shap(0, j) + pb.shap(0, j), 1e-12);
  EXPECT_NEAR(pab.base_value, pa.base_value + pb.base_value, 1e-12);
}

TEST(TreeShap, SymmetryAndEfficiency) {
  const std::vector<RegressionTree> trees{stump(0, 0.0, 1.0, 2), stump(1, 0.0, 1.0, 2)};
  const AdditiveForm form{0.0, 1.0, trees, 2};
  const std::vector<double> x{1.0, 1.0};
  const auto phi = brute_force_shap(form, x);
  EXPECT_NEAR(phi[0], phi[1], 1e-15);
  EXPECT_NEAR(phi[0] + phi[1], 2.0 - expected_value(form), 1e-15);

  std::mt19937_64 rng(19);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<RegressionTree> ts{oracle::random_tree(rng, 5, 3), oracle::random_tree(rng, 5, 2)};
    const AdditiveForm f{0.3, 0.7, ts, 5};
    const std::vector<double> row{0, 1, 2, 3, 4};
    const auto p = brute_force_shap(f, row);
    double sum = 0.0;
    for (double v : p) sum += v;
    const double full = f.offset + f.scale * (ts[0].predict(row) + ts[1].predict(row));
    EXPECT_NEAR(sum, full - expected_value(f), 1e-12);
  }
}

TEST(ExpectedValue, EqualsMeanTrainingPrediction) {
  const auto train = synth::friedman1(250, 9);
  const Regressor model = fit_gbdt(view(train), train.target(), GbdtParams{.n_estimators = 40});
  double mean = 0.0;
  for (double p : predict(model, view(train))) mean += p;
  mean /= static_cast<double>(train.rows());
  EXPECT_NEAR(expected_value(model), mean, 1e-9);

  const std::vector<RegressionTree> one{stump(0, 2.0, 4.0, 1)};
  EXPECT_DOUBLE_EQ(expected_value(AdditiveForm{0.0, 1.0, one, 1}), 3.0);
}

TEST(TreeShap, SingleLeafHasNoAttribution) {
  const Regressor model = single_leaf_model(6.5, 3);
  const auto table = synth::friedman1(5, 1, 5).select_features({"x0", "x1", "x2"});
  const auto e = tree_shap(model, table);
  EXPECT_DOUBLE_EQ(e.base_value, 6.5);
  for (double v : e.shap_values) EXPECT_EQ(v, 0.0);
  const auto rec = force_data(e, 2);
  EXPECT_TRUE(rec.contributions.empty());
  EXPECT_EQ(rec.prediction, rec.base_value);
  for (const auto& p : shap_dependence(e, "x1")) EXPECT_EQ(p.shap_value, 0.0);
}

TEST(TreeShap, ErrorCases) {
  const std::vector<RegressionTree> wide{stump(0, 1, 2, 13)};
  try {
    brute_force_shap(AdditiveForm{0.0, 1.0, wide, 13}, std::vector<double>(13, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooManyFeatures);
  }
  auto no_cover = stump(0, 1, 2, 1);
  no_cover.nodes[1].cover = 0.0;
  const std::vector<RegressionTree> bad{no_cover};
  try {
    expected_value(AdditiveForm{0.0, 1.0, bad, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingCover);
  }
}

TEST(MeanAbsImportance, FixtureMeansAndOrder) {
  const auto ranking = mean_abs_importance(fixture_explanation());
  ASSERT_EQ(ranking.size(), 2u);
  EXPECT_EQ(ranking[0].feature, "a");
  EXPECT_DOUBLE_EQ(ranking[0].score, 2.0);  // (1 + 3 + 2) / 3
  EXPECT_EQ(ranking[1].feature, "b");
  EXPECT_DOUBLE_EQ(ranking[1].score, 1.0);  // (2 + 0.5 + 0.5) / 3
}

TEST(MeanAbsImportance, ZerosAndSingleColumn) {
  auto e = fixture_explanation();
  std::fill(e.shap_values.begin(), e.shap_values.end(), 0.0);
  const auto zero = mean_abs_importance(e);
  EXPECT_EQ(zero[0].score, 0.0);
  EXPECT_EQ(zero[0].feature, "a");  // tie broken by name
  e.shap_values[1] = 0.1;
  EXPECT_EQ(mean_abs_importance(e)[0].feature, "b");
}

TEST(Beeswarm, CountsAndPercentiles) {
  const auto e = fixture_explanation();
  const auto top1 = beeswarm_data(e, 1);
  ASSERT_EQ(top1.size(), 3u);
  for (const auto& p : top1) EXPECT_EQ(p.feature, "a");
  EXPECT_EQ(top1[0].feature_value_percentile, 0.0);
  EXPECT_EQ(top1[1].feature_value_percentile, 0.5);
  EXPECT_EQ(top1[2].feature_value_percentile, 1.0);
  EXPECT_EQ(beeswarm_data(e, 9).size(), 6u);
}

TEST(ForceData, SumsToPredictionAndSortsByMagnitude) {
  const auto train = synth::friedman1(300, 14);
  const Regressor model = fit_gbdt(view(train), train.target(), GbdtParams{.n_estimators = 60});
  const auto e = tree_shap(model, train);
  for (std::size_t row : {0u, 17u, 299u}) {
    const auto rec = force_data(e, row);
    double sum = rec.base_value;
    for (std::size_t k = 0; k < rec.contributions.size(); ++k) {
      sum += rec.contributions[k].shap_value;
      if (k > 0) {
        EXPECT_GE(std::fabs(rec.contributions[k - 1].shap_value), std::fabs(rec.contributions[k].shap_value));
      }
    }
    EXPECT_NEAR(sum, rec.prediction, 1e-8);
  }
  try {
    force_data(e, 300);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::RowOutOfRange);
  }
}

TEST(ForceData, EuroValuesUseInverseTransform) {
  auto e = fixture_explanation();
  e.base_value = 2.0;
  e.predictions = {3.0, 4.0, -9.0};
  const BoxCoxParams p{0.5, 0.0, 0.0};
  const auto rec = force_data(e, 0, p);
  ASSERT_TRUE(rec.prediction_euro && rec.base_value_euro);
  EXPECT_NEAR(*rec.prediction_euro, 6.25, 1e-12);  // (0.5 * 3 + 1)^2
  EXPECT_NEAR(*rec.base_value_euro, 4.0, 1e-12);
  EXPECT_FALSE(force_data(e, 2, p).prediction_euro.has_value());
}

TEST(Pdp, IgnoredFeatureGivesFlatCurveAtMeanPrediction) {
  const auto table = synth::friedman1(40, 2, 5);
  GbdtModel g;
  g.learning_rate = 1.0;
  g.n_features = 5;
  g.trees = {stump(1, -1.0, 3.0, 5)};
  const Regressor model = g;
  const auto curve = pdp(model, table, "x0", 10);
  double mean = 0.0;
  for (double p : predict(model, view(table))) mean += p;
  mean /= static_cast<double>(table.rows());
  ASSERT_FALSE(curve.grid.empty());
  for (double v : curve.mean_prediction) EXPECT_NEAR(v, mean, 1e-12);
}

TEST(Pdp, AdditiveModelRecoversComponentShape) {
  const auto table = synth::friedman1(80, 6, 5);
  std::mt19937_64 rng(4);
  GbdtModel g;
  g.learning_rate = 1.0;
  g.n_features = 5;
  auto only_x2 = oracle::random_tree(rng, 1, 3);
  for (auto& n : only_x2.nodes) {
    if (!n.is_leaf()) {
      n.feature = 2;
      n.threshold = (n.threshold - 0.5) / 5.0;  // thresholds inside [0, 1)
    }
  }
  only_x2.n_features = 5;
  g.trees = {only_x2, stump(0, 1.0, 5.0, 5), stump(4, -2.0, 0.0, 5)};
  const Regressor model = g;
  const auto curve = pdp(model, table, "x2", 25);
  ASSERT_GT(curve.grid.size(), 5u);
  std::vector<double> row(5, 0.0);
  double offset = 0.0;
  for (std::size_t k = 0; k < curve.grid.size(); ++k) {
    row[2] = curve.grid[k];
    const double diff = curve.mean_prediction[k] - only_x2.predict(row);
    if (k == 0) offset = diff;
    EXPECT_NEAR(diff, offset, 1e-12);
  }
}

TEST(Pdp, StumpGivesStepAtThreshold) {
  const auto table = synth::friedman1(60, 8, 5);
  GbdtModel g;
  g.learning_rate = 1.0;
  g.n_features = 5;
  g.trees = {stump(3, 2.0, 4.0, 5)};
  const auto curve = pdp(Regressor{g}, table, "x3");
  EXPECT_LE(curve.grid.size(), 50u);
  for (std::size_t k = 0; k < curve.grid.size(); ++k) {
    if (k > 0) {
      EXPECT_GT(curve.grid[k], curve.grid[k - 1]);
    }
    EXPECT_DOUBLE_EQ(curve.mean_prediction[k], curve.grid[k] <= 0.5 ? 2.0 : 4.0);
  }
  EXPECT_EQ(curve.mean_prediction.front(), 2.0);
  EXPECT_EQ(curve.mean_prediction.back(), 4.0);
  try {
    pdp(Regressor{g}, table, "nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownFeature);
  }
}

TEST(Dependence, MonotoneSignalGivesHighSpearman) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z;
  const std::size_t n = 500;
  std::vector<double> m(n * 4), y(n);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 4; ++j) m[i * 4 + j] = z(rng);
    y[i] = m[i * 4] + 0.05 * z(rng);
    ids.push_back(std::to_string(i));
  }
  const FeatureTable table({"s", "n1", "n2", "n3"}, m, y, ids);
  const Regressor model = fit_gbdt(view(table), y, GbdtParams{.n_estimators = 200});
  const auto e = tree_shap(model, table);
  const auto points = shap_dependence(e, "s");
  std::vector<double> fv, sv;
  for (const auto& p : points) {
    fv.push_back(p.feature_value);
    sv.push_back(p.shap_value);
  }
  EXPECT_GE(oracle::spearman(fv, sv), 0.9);
  EXPECT_THROW(shap_dependence(e, "missing"), Error);
}
