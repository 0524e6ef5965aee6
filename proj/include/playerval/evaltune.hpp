#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "playerval/dataset.hpp"
#include "playerval/error.hpp"
#include "playerval/explain.hpp"
#include "playerval/model.hpp"
#include "playerval/rng.hpp"

namespace playerval {

inline void check_metric_inputs(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) fail(ErrorCode::ShapeMismatch, "metric inputs differ in length");
  if (y_true.empty()) fail(ErrorCode::ShapeMismatch, "metric inputs are empty");
}

/// 1 - SS_res / SS_tot.
inline double r_squared(std::span<const double> y_true, std::span<const double> y_pred) {
  check_metric_inputs(y_true, y_pred);
  double mean = 0.0;
  for (double v : y_true) mean += v;
  mean /= static_cast<double>(y_true.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (!(ss_tot > 0.0)) fail(ErrorCode::ZeroVariance, "R^2 is undefined for a constant target");
  return 1.0 - ss_res / ss_tot;
}

inline double rmse(std::span<const double> y_true, std::span<const double> y_pred) {
  check_metric_inputs(y_true, y_pred);
  double ss = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) ss += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
  return std::sqrt(ss / static_cast<double>(y_true.size()));
}

struct MetricReport {
  // NaN when the scored target is constant.
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  double rmse = 0.0;
  OutputScale scale = OutputScale::Euro;
};

inline MetricReport score(std::span<const double> y_true, std::span<const double> y_pred, OutputScale scale) {
  MetricReport m;
  m.scale = scale;
  m.rmse = rmse(y_true, y_pred);
  try {
    m.r_squared = r_squared(y_true, y_pred);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ZeroVariance) throw;
  }
  return m;
}

/// Fold index per row: a seeded permutation cut into k contiguous chunks, the
/// first n % k chunks one row larger.
inline std::vector<int> kfold_split(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2 || static_cast<std::size_t>(k) > n) {
    fail(ErrorCode::BadK, "k = " + std::to_string(k) + " needs 2 <= k <= n = " + std::to_string(n));
  }
  Rng rng(seed);
  const auto order = random_permutation(n, rng);
  std::vector<int> fold(n, 0);
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < static_cast<std::size_t>(k); ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) fold[order[pos++]] = static_cast<int>(f);
  }
  return fold;
}

struct FoldResult {
  int fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  MetricReport transformed;
  MetricReport euro;
  // Statistics fitted on the training folds.
  std::optional<BoxCoxParams> box_cox;
  std::vector<double> imputation_means;
};

struct CvResult {
  int k = 0;
  std::uint64_t seed = 0;
  OutputScale scale = OutputScale::Euro;
  std::vector<int> fold_assignments;
  std::vector<FoldResult> folds;
  std::vector<double> oof_transformed;  // out-of-fold predictions, per input row
  std::vector<double> oof_euro;
  // Fold means on `scale`; R^2 averages only the folds where it is defined.
  double mean_r_squared = std::numeric_limits<double>::quiet_NaN();
  double mean_rmse = 0.0;
  double mean_r_squared_transformed = std::numeric_limits<double>::quiet_NaN();
  double mean_rmse_transformed = 0.0;
  double mean_r_squared_euro = std::numeric_limits<double>::quiet_NaN();
  double mean_rmse_euro = 0.0;
};

namespace detail {

inline double mean_defined(const std::vector<double>& v) {
  double sum = 0.0;
  std::size_t count = 0;
  for (double x : v) {
    if (!std::isnan(x)) {
      sum += x;
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Cross-validation on precomputed fold assignments. Each fold fits the whole
/// ModelSpec (imputation, Box-Cox, regressor) on the other folds only, then
/// scores the held-out fold on both scales. The table's target is in euros.
inline CvResult cross_validate(const ModelSpec& spec, const FeatureTable& table, const std::vector<int>& folds,
                               std::uint64_t seed, OutputScale scale = OutputScale::Euro) {
  if (folds.size() != table.rows()) fail(ErrorCode::ShapeMismatch, "fold assignment length differs from table");
  const int k = folds.empty() ? 0 : *std::max_element(folds.begin(), folds.end()) + 1;
  if (k < 2) fail(ErrorCode::BadK, "cross-validation needs at least 2 folds");
  CvResult out;
  out.k = k;
  out.seed = seed;
  out.scale = scale;
  out.fold_assignments = folds;
  out.oof_transformed.assign(table.rows(), std::numeric_limits<double>::quiet_NaN());
  out.oof_euro.assign(table.rows(), std::numeric_limits<double>::quiet_NaN());
  std::vector<double> r2_t, rmse_t, r2_e, rmse_e;
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < folds.size(); ++i) (folds[i] == f ? test_idx : train_idx).push_back(i);
    if (test_idx.empty() || train_idx.empty()) fail(ErrorCode::BadK, "fold " + std::to_string(f) + " is empty");
    const auto train = table.select_rows(train_idx);
    const auto test = table.select_rows(test_idx);
    FittedModel model;
    std::vector<double> pred_t, y_t, pred_e;
    try {
      model = fit_model(spec, train, derive_seed(seed, static_cast<std::uint64_t>(f)));
      pred_t = model.predict_transformed(test);
      y_t.reserve(test.rows());
      for (double y : test.target()) y_t.push_back(model.to_transformed(y));
      for (double p : pred_t) pred_e.push_back(model.to_euro(p));
    } catch (const Error& e) {
      throw Error(e.code(), "fold " + std::to_string(f) + ": " + e.what());
    }
    FoldResult fr;
    fr.fold = f;
    fr.n_train = train.rows();
    fr.n_test = test.rows();
    fr.transformed = score(y_t, pred_t, OutputScale::Transformed);
    fr.euro = score(test.target(), pred_e, OutputScale::Euro);
    fr.box_cox = model.box_cox;
    if (model.imputer) fr.imputation_means = model.imputer->means;
    for (std::size_t i = 0; i < test_idx.size(); ++i) {
      out.oof_transformed[test_idx[i]] = pred_t[i];
      out.oof_euro[test_idx[i]] = pred_e[i];
    }
    r2_t.push_back(fr.transformed.r_squared);
    rmse_t.push_back(fr.transformed.rmse);
    r2_e.push_back(fr.euro.r_squared);
    rmse_e.push_back(fr.euro.rmse);
    out.folds.push_back(std::move(fr));
  }
  out.mean_r_squared_transformed = detail::mean_defined(r2_t);
  out.mean_rmse_transformed = detail::mean_defined(rmse_t);
  out.mean_r_squared_euro = detail::mean_defined(r2_e);
  out.mean_rmse_euro = detail::mean_defined(rmse_e);
  out.mean_r_squared = scale == OutputScale::Euro ? out.mean_r_squared_euro : out.mean_r_squared_transformed;
  out.mean_rmse = scale == OutputScale::Euro ? out.mean_rmse_euro : out.mean_rmse_transformed;
  return out;
}

inline CvResult cross_validate(const ModelSpec& spec, const FeatureTable& table, int k, std::uint64_t seed,
                               OutputScale scale = OutputScale::Euro) {
  return cross_validate(spec, table, kfold_split(table.rows(), k, seed), seed, scale);
}

struct GridAxis {
  std::string name;
  std::vector<double> values;
};

/// Hyperparameter axes for one model family. Recognised axis names:
/// learning_rate, n_estimators, max_depth, min_samples_split,
/// min_samples_leaf, feature_subsample.
struct GridSpec {
  ModelFamily family = ModelFamily::Gbdt;
  std::vector<GridAxis> axes;

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.values.size();
    return n;
  }

  /// Point `index` in lexicographic order, first axis varying slowest.
  std::vector<double> point(std::size_t index) const {
    std::vector<double> values(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
      const std::size_t len = axes[a].values.size();
      values[a] = axes[a].values[index % len];
      index /= len;
    }
    return values;
  }
};

inline ModelSpec apply_grid_point(ModelSpec spec, const GridSpec& grid, const std::vector<double>& values) {
  spec.family = grid.family;
  const bool gbdt = grid.family == ModelFamily::Gbdt;
  TreeParams& tree = gbdt ? spec.gbdt.tree : spec.forest.tree;
  for (std::size_t a = 0; a < grid.axes.size(); ++a) {
    const auto& name = grid.axes[a].name;
    const double v = values[a];
    if (name == "learning_rate") {
      if (!gbdt) fail(ErrorCode::Config, "learning_rate is not a random_forest hyperparameter");
      spec.gbdt.learning_rate = v;
    } else if (name == "n_estimators") {
      (gbdt ? spec.gbdt.n_estimators : spec.forest.n_estimators) = static_cast<int>(std::lround(v));
    } else if (name == "max_depth") {
      tree.max_depth = static_cast<int>(std::lround(v));
    } else if (name == "min_samples_split") {
      tree.min_samples_split = static_cast<int>(std::lround(v));
    } else if (name == "min_samples_leaf") {
      tree.min_samples_leaf = static_cast<int>(std::lround(v));
    } else if (name == "feature_subsample") {
      tree.feature_subsample = v;
      tree.sqrt_features = false;
    } else {
      fail(ErrorCode::Config, "unknown grid axis '" + name + "'");
    }
  }
  return spec;
}

enum class SelectionCriterion { MeanRSquared, MeanRmse };

struct GridPointResult {
  std::size_t index = 0;
  std::vector<double> values;
  CvResult cv;
};

struct GridSearchResult {
  GridSpec grid;
  SelectionCriterion criterion = SelectionCriterion::MeanRSquared;
  std::vector<GridPointResult> points;
  std::size_t best_index = 0;
  ModelSpec best_spec;
};

/// Exhaustive search: every grid point is cross-validated on the same fold
/// assignment. Best = highest mean R^2 (or lowest mean RMSE); the earliest
/// point wins ties.
inline GridSearchResult grid_search(const GridSpec& grid, const ModelSpec& base, const FeatureTable& table, int k,
                                    std::uint64_t seed, OutputScale scale = OutputScale::Euro,
                                    SelectionCriterion criterion = SelectionCriterion::MeanRSquared) {
  if (grid.size() == 0) fail(ErrorCode::Config, "grid has an empty axis");
  const auto folds = kfold_split(table.rows(), k, seed);
  GridSearchResult out;
  out.grid = grid;
  out.criterion = criterion;
  bool have_best = false;
  double best_score = 0.0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const auto values = grid.point(p);
    const auto spec = apply_grid_point(base, grid, values);
    auto cv = cross_validate(spec, table, folds, seed, scale);
    const double s = criterion == SelectionCriterion::MeanRSquared ? cv.mean_r_squared : -cv.mean_rmse;
    if (!std::isnan(s) && (!have_best || s > best_score)) {
      have_best = true;
      best_score = s;
      out.best_index = p;
      out.best_spec = spec;
    }
    out.points.push_back({p, values, std::move(cv)});
  }
  if (!have_best) {
    out.best_index = 0;
    out.best_spec = apply_grid_point(base, grid, grid.point(0));
  }
  return out;
}

}  // namespace playerval
