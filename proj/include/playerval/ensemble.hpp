#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "playerval/error.hpp"
#include "playerval/rng.hpp"
#include "playerval/tree.hpp"

namespace playerval {

struct ForestParams {
  int n_estimators = 700;
  bool bootstrap = true;
  TreeParams tree{.max_depth = 15, .min_samples_split = 3, .min_samples_leaf = 3, .sqrt_features = true};
};

struct GbdtParams {
  double learning_rate = 0.1;
  int n_estimators = 900;
  TreeParams tree{.max_depth = 3};
};

struct RandomForestModel {
  std::vector<RegressionTree> trees;
  int n_estimators = 0;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  std::size_t n_features = 0;

  double predict(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x);
    return trees.empty() ? 0.0 : sum / static_cast<double>(trees.size());
  }

  bool operator==(const RandomForestModel&) const = default;
};

struct GbdtModel {
  double base_score = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
  int n_estimators = 0;
  std::size_t n_features = 0;

  double predict(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x);
    return base_score + learning_rate * sum;
  }

  bool operator==(const GbdtModel&) const = default;
};

/// Any fitted tree ensemble. Both families predict
/// `offset + scale * sum_k tree_k(x)`.
using Regressor = std::variant<GbdtModel, RandomForestModel>;

struct AdditiveForm {
  double offset = 0.0;
  double scale = 1.0;
  std::span<const RegressionTree> trees;
  std::size_t n_features = 0;
};

inline AdditiveForm additive_form(const GbdtModel& m) {
  return {m.base_score, m.learning_rate, m.trees, m.n_features};
}

inline AdditiveForm additive_form(const RandomForestModel& m) {
  const double scale = m.trees.empty() ? 0.0 : 1.0 / static_cast<double>(m.trees.size());
  return {0.0, scale, m.trees, m.n_features};
}

inline AdditiveForm additive_form(const Regressor& r) {
  return std::visit([](const auto& m) { return additive_form(m); }, r);
}

inline std::size_t feature_count(const Regressor& r) { return additive_form(r).n_features; }

inline const char* family_name(const Regressor& r) {
  return std::holds_alternative<GbdtModel>(r) ? "gbdt" : "random_forest";
}

/// Bagged CART trees: each on a same-size bootstrap resample (when enabled)
/// with per-split feature subsampling. Tree k uses the seed stream
/// derive_seed(seed, k), so the result does not depend on fitting order.
inline RandomForestModel fit_forest(MatrixView x, std::span<const double> y, const ForestParams& params,
                                    std::uint64_t seed) {
  if (x.rows != y.size()) fail(ErrorCode::ShapeMismatch, "X rows and y length differ");
  if (x.rows == 0) fail(ErrorCode::ShapeMismatch, "cannot fit a forest on zero rows");
  if (params.n_estimators < 1) fail(ErrorCode::Config, "n_estimators must be >= 1");
  params.tree.validate();
  RandomForestModel model;
  model.n_estimators = params.n_estimators;
  model.bootstrap = params.bootstrap;
  model.seed = seed;
  model.n_features = x.cols;
  model.trees.reserve(static_cast<std::size_t>(params.n_estimators));
  const SortedColumns sorted(x);
  std::vector<std::size_t> samples(x.rows);
  for (int k = 0; k < params.n_estimators; ++k) {
    const std::uint64_t tree_seed = derive_seed(seed, static_cast<std::uint64_t>(k));
    Rng rng(tree_seed);
    for (std::size_t i = 0; i < x.rows; ++i) {
      samples[i] = params.bootstrap ? uniform_index(rng, x.rows) : i;
    }
    model.trees.push_back(fit_tree(x, y, samples, sorted, params.tree, rng()));
  }
  return model;
}

/// Squared-error gradient boosting. `on_iteration(k, training_sse)` is
/// called after each tree when provided.
template <typename Callback>
GbdtModel fit_gbdt(MatrixView x, std::span<const double> y, const GbdtParams& params, std::uint64_t seed,
                   Callback&& on_iteration) {
  if (x.rows != y.size()) fail(ErrorCode::ShapeMismatch, "X rows and y length differ");
  if (x.rows == 0) fail(ErrorCode::ShapeMismatch, "cannot fit a model on zero rows");
  if (!(params.learning_rate > 0.0)) fail(ErrorCode::Config, "learning_rate must be > 0");
  if (params.n_estimators < 0) fail(ErrorCode::Config, "n_estimators must be >= 0");
  params.tree.validate();

  GbdtModel model;
  model.learning_rate = params.learning_rate;
  model.n_estimators = params.n_estimators;
  model.n_features = x.cols;
  double sum = 0.0;
  for (double v : y) sum += v;
  model.base_score = sum / static_cast<double>(y.size());

  const SortedColumns sorted(x);
  std::vector<std::size_t> all(x.rows);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> prediction(y.size(), model.base_score);
  std::vector<double> residual(y.size());
  model.trees.reserve(static_cast<std::size_t>(params.n_estimators));
  for (int k = 0; k < params.n_estimators; ++k) {
    for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - prediction[i];
    auto tree = fit_tree(x, residual, all, sorted, params.tree, derive_seed(seed, static_cast<std::uint64_t>(k)));
    double sse = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      prediction[i] += params.learning_rate * tree.predict(x.row(i));
      const double r = y[i] - prediction[i];
      sse += r * r;
    }
    model.trees.push_back(std::move(tree));
    on_iteration(k, sse);
  }
  return model;
}

inline GbdtModel fit_gbdt(MatrixView x, std::span<const double> y, const GbdtParams& params,
                          std::uint64_t seed = 0) {
  return fit_gbdt(x, y, params, seed, [](int, double) {});
}

inline double predict(const Regressor& model, std::span<const double> x) {
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

inline std::vector<double> predict(const Regressor& model, MatrixView x) {
  if (x.cols != feature_count(model)) {
    fail(ErrorCode::ShapeMismatch, "model expects " + std::to_string(feature_count(model)) + " features, got " +
                                       std::to_string(x.cols));
  }
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = predict(model, x.row(i));
  return out;
}

inline std::vector<double> predict_gbdt(const GbdtModel& model, MatrixView x) {
  if (x.cols != model.n_features) fail(ErrorCode::ShapeMismatch, "feature count differs from training");
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = model.predict(x.row(i));
  return out;
}

/// Total SSE decrease per feature, summed over every split of every tree.
inline std::vector<double> gain_importance(const AdditiveForm& form) {
  std::vector<double> importance(form.n_features, 0.0);
  for (const auto& tree : form.trees) {
    for (const auto& node : tree.nodes) {
      if (!node.is_leaf()) importance[static_cast<std::size_t>(node.feature)] += node.gain;
    }
  }
  return importance;
}

inline std::vector<double> gain_importance(const Regressor& model) { return gain_importance(additive_form(model)); }
inline std::vector<double> gain_importance(const GbdtModel& model) { return gain_importance(additive_form(model)); }
inline std::vector<double> gain_importance(const RandomForestModel& model) {
  return gain_importance(additive_form(model));
}

}  // namespace playerval
