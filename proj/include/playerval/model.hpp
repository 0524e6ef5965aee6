#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "playerval/dataset.hpp"
#include "playerval/ensemble.hpp"
#include "playerval/error.hpp"
#include "playerval/transform.hpp"

namespace playerval {

enum class ModelFamily { Gbdt, RandomForest };

inline const char* family_name(ModelFamily f) { return f == ModelFamily::Gbdt ? "gbdt" : "random_forest"; }

inline ModelFamily parse_family(const std::string& name) {
  if (name == "gbdt") return ModelFamily::Gbdt;
  if (name == "random_forest" || name == "rf") return ModelFamily::RandomForest;
  fail(ErrorCode::Config, "unknown model family '" + name + "' (expected gbdt or random_forest)");
}

/// Everything needed to fit a model on a table: the regressor family and its
/// hyperparameters plus the per-fit preprocessing (mean imputation, Box-Cox
/// target transform). Preprocessing statistics are always fitted on the
/// table passed to fit_model and nothing else.
struct ModelSpec {
  ModelFamily family = ModelFamily::Gbdt;
  GbdtParams gbdt;
  ForestParams forest;
  bool box_cox = true;
  bool impute = false;
  bool auto_shift = false;
};

struct FittedModel {
  std::vector<std::string> feature_names;
  std::optional<MeanImputer> imputer;
  std::optional<BoxCoxParams> box_cox;
  Regressor regressor;
  std::uint64_t seed = 0;

  FeatureTable prepare_features(const FeatureTable& table) const {
    auto projected = table.select_features(feature_names);
    if (imputer) return imputer->apply(projected);
    if (has_missing_cells(projected)) {
      fail(ErrorCode::SchemaMismatch, "input has missing feature cells and the model was fitted without imputation");
    }
    return projected;
  }

  /// Model output on the transformed (modeling) scale.
  std::vector<double> predict_transformed(const FeatureTable& table) const {
    const auto x = prepare_features(table);
    return predict(regressor, MatrixView(x.matrix(), x.rows(), x.cols()));
  }

  double to_euro(double transformed) const { return box_cox ? inverse(transformed, *box_cox) : transformed; }

  double to_transformed(double euro) const { return box_cox ? forward(euro, *box_cox) : euro; }

  /// Euro-scale predictions; throws OutOfDomain when a prediction falls
  /// outside the Box-Cox image.
  std::vector<double> predict_euro(const FeatureTable& table) const {
    auto y = predict_transformed(table);
    for (double& v : y) v = to_euro(v);
    return y;
  }
};

/// Box-Cox fit for model training. A constant target has no likelihood
/// maximum; it gets lambda = 1 so the transform stays an exact shift.
inline BoxCoxParams fit_target_transform(std::span<const double> target, bool auto_shift) {
  bool constant = true;
  for (double v : target) constant = constant && v == target[0];
  if (constant && !target.empty()) {
    BoxCoxParams p;
    p.lambda = 1.0;
    p.shift = (target[0] > 0.0 || !auto_shift) ? 0.0 : 1.0 - target[0];
    if (!(target[0] + p.shift > 0.0)) fail(ErrorCode::NonPositiveInput, "Box-Cox input must be strictly positive");
    p.log_likelihood = std::numeric_limits<double>::quiet_NaN();
    return p;
  }
  BoxCoxFitOptions options;
  options.auto_shift = auto_shift;
  return fit_lambda(target, options);
}

inline Regressor fit_regressor(const ModelSpec& spec, MatrixView x, std::span<const double> y, std::uint64_t seed) {
  if (spec.family == ModelFamily::Gbdt) return fit_gbdt(x, y, spec.gbdt, seed);
  return fit_forest(x, y, spec.forest, seed);
}

/// Fits imputation (if enabled), the target transform (if enabled) and the
/// regressor, all on `table` alone. The table's target is on the euro scale.
inline FittedModel fit_model(const ModelSpec& spec, const FeatureTable& table, std::uint64_t seed) {
  if (table.empty()) fail(ErrorCode::EmptyResult, "cannot fit a model on an empty table");
  FittedModel model;
  model.feature_names = table.feature_names();
  model.seed = seed;
  FeatureTable x = table;
  if (spec.impute) {
    model.imputer = MeanImputer::fit(table);
    x = model.imputer->apply(table);
  } else if (has_missing_cells(table)) {
    fail(ErrorCode::DegenerateInput, "table has missing cells; enable imputation or drop incomplete rows");
  }
  std::vector<double> y = x.target();
  if (spec.box_cox) {
    model.box_cox = fit_target_transform(y, spec.auto_shift);
    y = forward(y, *model.box_cox);
  }
  model.regressor = fit_regressor(spec, MatrixView(x.matrix(), x.rows(), x.cols()), y, seed);
  return model;
}

// --- model artifact ---------------------------------------------------------

inline constexpr const char* kModelFormat = "playerval.model";
inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json tree_to_json(const RegressionTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& n = tree.nodes[i];
    nlohmann::json j;
    j["id"] = i;
    if (n.is_leaf()) {
      j["leaf"] = true;
    } else {
      j["feature"] = n.feature;
      j["threshold"] = n.threshold;
      j["left"] = n.left;
      j["right"] = n.right;
      j["gain"] = n.gain;
    }
    j["value"] = n.value;
    j["cover"] = n.cover;
    nodes.push_back(std::move(j));
  }
  return nlohmann::json{{"nodes", std::move(nodes)}};
}

inline RegressionTree tree_from_json(const nlohmann::json& j, std::size_t n_features) {
  RegressionTree tree;
  tree.n_features = n_features;
  const auto& nodes = j.at("nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& jn = nodes[i];
    if (jn.at("id").get<std::size_t>() != i) fail(ErrorCode::SchemaMismatch, "tree node ids must be 0..n-1 in order");
    TreeNode n;
    if (!jn.value("leaf", false)) {
      n.feature = jn.at("feature").get<int>();
      n.threshold = jn.at("threshold").get<double>();
      n.left = jn.at("left").get<int>();
      n.right = jn.at("right").get<int>();
      n.gain = jn.value("gain", 0.0);
      if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= n_features) {
        fail(ErrorCode::SchemaMismatch, "split feature index out of range");
      }
      if (n.left <= static_cast<int>(i) || n.right <= static_cast<int>(i) ||
          static_cast<std::size_t>(std::max(n.left, n.right)) >= nodes.size()) {
        fail(ErrorCode::SchemaMismatch, "child ids must point forward inside the node list");
      }
    }
    n.value = jn.at("value").get<double>();
    n.cover = jn.at("cover").get<double>();
    tree.nodes.push_back(n);
  }
  if (tree.nodes.empty()) fail(ErrorCode::SchemaMismatch, "tree without nodes");
  return tree;
}

}  // namespace detail

inline nlohmann::json tree_params_to_json(const TreeParams& p) {
  return {{"max_depth", p.max_depth},
          {"min_samples_split", p.min_samples_split},
          {"min_samples_leaf", p.min_samples_leaf},
          {"feature_subsample", p.feature_subsample},
          {"sqrt_features", p.sqrt_features}};
}

inline TreeParams tree_params_from_json(const nlohmann::json& j) {
  TreeParams p;
  p.max_depth = j.at("max_depth").get<int>();
  p.min_samples_split = j.at("min_samples_split").get<int>();
  p.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  p.feature_subsample = j.at("feature_subsample").get<double>();
  p.sqrt_features = j.at("sqrt_features").get<bool>();
  return p;
}

inline nlohmann::json box_cox_to_json(const BoxCoxParams& p) {
  nlohmann::json j{{"lambda", p.lambda}, {"shift", p.shift}};
  // NaN (constant-target fallback) is not representable in JSON.
  j["log_likelihood"] = std::isnan(p.log_likelihood) ? nlohmann::json(nullptr) : nlohmann::json(p.log_likelihood);
  return j;
}

inline BoxCoxParams box_cox_from_json(const nlohmann::json& j) {
  BoxCoxParams p;
  p.lambda = j.at("lambda").get<double>();
  p.shift = j.at("shift").get<double>();
  const auto& ll = j.at("log_likelihood");
  p.log_likelihood = ll.is_null() ? std::numeric_limits<double>::quiet_NaN() : ll.get<double>();
  return p;
}

/// Self-describing model artifact: format tag and version, feature names,
/// preprocessing, and every tree as a flat node list.
inline nlohmann::json model_to_json(const FittedModel& model) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelFormatVersion;
  j["family"] = family_name(model.regressor);
  j["seed"] = model.seed;
  j["feature_names"] = model.feature_names;
  j["box_cox"] = model.box_cox ? box_cox_to_json(*model.box_cox) : nlohmann::json(nullptr);
  j["imputation_means"] = model.imputer ? nlohmann::json(model.imputer->means) : nlohmann::json(nullptr);
  nlohmann::json trees = nlohmann::json::array();
  if (const auto* g = std::get_if<GbdtModel>(&model.regressor)) {
    j["base_score"] = g->base_score;
    j["learning_rate"] = g->learning_rate;
    j["n_estimators"] = g->n_estimators;
    for (const auto& t : g->trees) trees.push_back(detail::tree_to_json(t));
  } else {
    const auto& f = std::get<RandomForestModel>(model.regressor);
    j["n_estimators"] = f.n_estimators;
    j["bootstrap"] = f.bootstrap;
    j["forest_seed"] = f.seed;
    for (const auto& t : f.trees) trees.push_back(detail::tree_to_json(t));
  }
  j["trees"] = std::move(trees);
  return j;
}

inline FittedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) fail(ErrorCode::SchemaMismatch, "not a model artifact");
    if (j.at("version").get<int>() != kModelFormatVersion) {
      fail(ErrorCode::SchemaMismatch, "unsupported model artifact version");
    }
    FittedModel model;
    model.seed = j.at("seed").get<std::uint64_t>();
    model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    if (!j.at("box_cox").is_null()) model.box_cox = box_cox_from_json(j.at("box_cox"));
    if (!j.at("imputation_means").is_null()) {
      model.imputer = MeanImputer{j.at("imputation_means").get<std::vector<double>>()};
    }
    const std::size_t m = model.feature_names.size();
    std::vector<RegressionTree> trees;
    for (const auto& jt : j.at("trees")) trees.push_back(detail::tree_from_json(jt, m));
    const auto family = j.at("family").get<std::string>();
    if (family == "gbdt") {
      GbdtModel g;
      g.base_score = j.at("base_score").get<double>();
      g.learning_rate = j.at("learning_rate").get<double>();
      g.n_estimators = j.at("n_estimators").get<int>();
      g.n_features = m;
      g.trees = std::move(trees);
      model.regressor = std::move(g);
    } else if (family == "random_forest") {
      RandomForestModel f;
      f.n_estimators = j.at("n_estimators").get<int>();
      f.bootstrap = j.at("bootstrap").get<bool>();
      f.seed = j.at("forest_seed").get<std::uint64_t>();
      f.n_features = m;
      f.trees = std::move(trees);
      model.regressor = std::move(f);
    } else {
      fail(ErrorCode::SchemaMismatch, "unknown model family '" + family + "'");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaMismatch, std::string("malformed model artifact: ") + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
  out << j.dump(1) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaMismatch, path + ": " + e.what());
  }
}

inline void save_model(const std::string& path, const FittedModel& model) { write_json_file(path, model_to_json(model)); }

inline FittedModel load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

}  // namespace playerval
