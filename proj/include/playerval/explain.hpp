#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "playerval/dataset.hpp"
#include "playerval/ensemble.hpp"
#include "playerval/error.hpp"
#include "playerval/transform.hpp"
#include "playerval/tree.hpp"

namespace playerval {

/// Per-row, per-feature SHAP values of a tree ensemble on the model's own
/// (transformed) output scale.
struct Explanation {
  double base_value = 0.0;
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<double> shap_values;     // n_rows x n_features, row-major
  std::vector<double> feature_values;  // the explained rows
  std::vector<double> predictions;     // model output per row
  std::vector<std::string> feature_names;
  std::vector<std::string> row_ids;

  double shap(std::size_t row, std::size_t feature) const { return shap_values[row * n_features + feature]; }
  double value(std::size_t row, std::size_t feature) const { return feature_values[row * n_features + feature]; }

  std::size_t feature_index(const std::string& name) const {
    auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) fail(ErrorCode::UnknownFeature, "no feature named '" + name + "'");
    return static_cast<std::size_t>(it - feature_names.begin());
  }
};

namespace detail {

inline void check_covers(const AdditiveForm& form) {
  for (const auto& tree : form.trees) {
    if (tree.nodes.empty()) fail(ErrorCode::MissingCover, "tree without nodes");
    for (const auto& node : tree.nodes) {
      if (!(node.cover > 0.0)) fail(ErrorCode::MissingCover, "tree node without a positive cover");
    }
  }
}

inline double node_expectation(const RegressionTree& tree, std::size_t id) {
  const auto& node = tree.nodes[id];
  if (node.is_leaf()) return node.value;
  const auto l = static_cast<std::size_t>(node.left);
  const auto r = static_cast<std::size_t>(node.right);
  return (tree.nodes[l].cover * node_expectation(tree, l) + tree.nodes[r].cover * node_expectation(tree, r)) /
         node.cover;
}

// Path-dependent conditional expectation E[f(x) | x_S]: follow the split when
// its feature is in S, otherwise average both children by cover.
inline double conditional_expectation(const RegressionTree& tree, std::size_t id, std::span<const double> x,
                                      std::uint32_t subset) {
  const auto& node = tree.nodes[id];
  if (node.is_leaf()) return node.value;
  const auto l = static_cast<std::size_t>(node.left);
  const auto r = static_cast<std::size_t>(node.right);
  if (subset & (1u << node.feature)) {
    return conditional_expectation(tree, x[static_cast<std::size_t>(node.feature)] <= node.threshold ? l : r, x,
                                   subset);
  }
  return (tree.nodes[l].cover * conditional_expectation(tree, l, x, subset) +
          tree.nodes[r].cover * conditional_expectation(tree, r, x, subset)) /
         node.cover;
}

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;  // share of paths through here when the feature is absent
  double one_fraction = 0.0;   // 1 if x follows this branch when the feature is present
  double weight = 0.0;         // permutation weight
};

inline void extend_path(PathElement* path, int depth, double zero_fraction, double one_fraction, int feature) {
  path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  const double denom = depth + 1;
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].weight += one_fraction * path[i].weight * (i + 1) / denom;
    path[i].weight = zero_fraction * path[i].weight * (depth - i) / denom;
  }
}

inline void unwind_path(PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  const double denom = depth + 1;
  double next = path[depth].weight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next * denom / ((i + 1) * one);
      next = tmp - path[i].weight * zero * (depth - i) / denom;
    } else {
      path[i].weight = path[i].weight * denom / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total weight of the path with element `index` removed, without modifying it.
inline double unwound_path_sum(const PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  const double denom = depth + 1;
  double next = path[depth].weight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = next * denom / ((i + 1) * one);
      total += tmp;
      next = path[i].weight - tmp * zero * (depth - i) / denom;
    } else {
      total += path[i].weight * denom / (zero * (depth - i));
    }
  }
  return total;
}

class TreeShapWalker {
 public:
  TreeShapWalker(const RegressionTree& tree, std::span<const double> x, std::span<double> phi, double scale)
      : tree_(tree), x_(x), phi_(phi), scale_(scale) {
    const auto max_depth = static_cast<std::size_t>(tree.depth()) + 2;
    buffer_.resize((max_depth + 1) * (max_depth + 2) / 2);
  }

  void run() { recurse(0, 0, buffer_.data(), 1.0, 1.0, -1); }

 private:
  void recurse(std::size_t id, int depth, PathElement* parent_path, double zero_fraction, double one_fraction,
               int feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, zero_fraction, one_fraction, feature);

    const auto& node = tree_.nodes[id];
    if (node.is_leaf()) {
      for (int i = 1; i <= depth; ++i) {
        const double w = unwound_path_sum(path, depth, i);
        const auto& el = path[i];
        phi_[static_cast<std::size_t>(el.feature)] +=
            w * (el.one_fraction - el.zero_fraction) * node.value * scale_;
      }
      return;
    }

    const auto f = static_cast<std::size_t>(node.feature);
    const bool go_left = x_[f] <= node.threshold;
    const auto hot = static_cast<std::size_t>(go_left ? node.left : node.right);
    const auto cold = static_cast<std::size_t>(go_left ? node.right : node.left);

    double incoming_zero = 1.0;
    double incoming_one = 1.0;
    int k = 1;
    while (k <= depth && path[k].feature != node.feature) ++k;
    if (k <= depth) {
      incoming_zero = path[k].zero_fraction;
      incoming_one = path[k].one_fraction;
      unwind_path(path, depth, k);
      --depth;
    }
    recurse(hot, depth + 1, path, tree_.nodes[hot].cover / node.cover * incoming_zero, incoming_one, node.feature);
    recurse(cold, depth + 1, path, tree_.nodes[cold].cover / node.cover * incoming_zero, 0.0, node.feature);
  }

  const RegressionTree& tree_;
  std::span<const double> x_;
  std::span<double> phi_;
  double scale_;
  std::vector<PathElement> buffer_;
};

}  // namespace detail

/// Cover-weighted expected output of the ensemble: the SHAP base value.
inline double expected_value(const AdditiveForm& form) {
  detail::check_covers(form);
  double sum = 0.0;
  for (const auto& tree : form.trees) sum += detail::node_expectation(tree, 0);
  return form.offset + form.scale * sum;
}

inline double expected_value(const Regressor& model) { return expected_value(additive_form(model)); }

/// Exact path-dependent SHAP values for one row, accumulated into `phi`.
inline void tree_shap_row(const AdditiveForm& form, std::span<const double> x, std::span<double> phi) {
  for (const auto& tree : form.trees) detail::TreeShapWalker(tree, x, phi, form.scale).run();
}

/// Exact path-dependent SHAP values for every row of `x` (polynomial-time
/// path extension/unwinding over each tree).
inline Explanation tree_shap(const AdditiveForm& form, MatrixView x, std::vector<std::string> feature_names = {},
                             std::vector<std::string> row_ids = {}) {
  if (x.cols != form.n_features) {
    fail(ErrorCode::ShapeMismatch, "model expects " + std::to_string(form.n_features) + " features, got " +
                                       std::to_string(x.cols));
  }
  Explanation out;
  out.base_value = expected_value(form);
  out.n_rows = x.rows;
  out.n_features = x.cols;
  out.shap_values.assign(x.rows * x.cols, 0.0);
  out.feature_values.assign(x.data.begin(), x.data.end());
  out.predictions.resize(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    auto row = x.row(i);
    tree_shap_row(form, row, std::span<double>(out.shap_values).subspan(i * x.cols, x.cols));
    double sum = 0.0;
    for (const auto& tree : form.trees) sum += tree.predict(row);
    out.predictions[i] = form.offset + form.scale * sum;
  }
  if (feature_names.empty()) {
    for (std::size_t j = 0; j < x.cols; ++j) feature_names.push_back("f" + std::to_string(j));
  }
  if (row_ids.empty()) {
    for (std::size_t i = 0; i < x.rows; ++i) row_ids.push_back(std::to_string(i));
  }
  if (feature_names.size() != x.cols || row_ids.size() != x.rows) {
    fail(ErrorCode::ShapeMismatch, "feature names or row ids do not match the matrix");
  }
  out.feature_names = std::move(feature_names);
  out.row_ids = std::move(row_ids);
  return out;
}

inline Explanation tree_shap(const Regressor& model, const FeatureTable& table) {
  return tree_shap(additive_form(model), MatrixView(table.matrix(), table.rows(), table.cols()),
                   table.feature_names(), table.row_ids());
}

inline constexpr std::size_t kBruteForceMaxFeatures = 12;

/// Shapley values by enumerating every feature subset, using the same
/// path-dependent conditional expectation as tree_shap. Exponential in M.
inline std::vector<double> brute_force_shap(const AdditiveForm& form, std::span<const double> x) {
  const std::size_t m = form.n_features;
  if (m > kBruteForceMaxFeatures) {
    fail(ErrorCode::TooManyFeatures, "subset enumeration supports at most 12 features");
  }
  if (x.size() != m) fail(ErrorCode::ShapeMismatch, "row length differs from the model's feature count");
  detail::check_covers(form);
  const std::uint32_t n_subsets = 1u << m;
  std::vector<double> value(n_subsets);
  for (std::uint32_t s = 0; s < n_subsets; ++s) {
    double sum = 0.0;
    for (const auto& tree : form.trees) sum += detail::conditional_expectation(tree, 0, x, s);
    value[s] = form.offset + form.scale * sum;
  }
  // weight[k] = k! (M - k - 1)! / M!
  std::vector<double> weight(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    weight[k] = std::exp(std::lgamma(static_cast<double>(k) + 1.0) +
                         std::lgamma(static_cast<double>(m - k)) - std::lgamma(static_cast<double>(m) + 1.0));
  }
  std::vector<double> phi(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::uint32_t bit = 1u << i;
    for (std::uint32_t s = 0; s < n_subsets; ++s) {
      if (s & bit) continue;
      const auto size = static_cast<std::size_t>(std::popcount(s));
      phi[i] += weight[size] * (value[s | bit] - value[s]);
    }
  }
  return phi;
}

inline std::vector<double> brute_force_shap(const Regressor& model, std::span<const double> x) {
  return brute_force_shap(additive_form(model), x);
}

struct FeatureScore {
  std::string feature;
  double score = 0.0;
};

/// Mean |SHAP| per feature, highest first; ties ordered by feature name.
inline std::vector<FeatureScore> mean_abs_importance(const Explanation& e) {
  if (e.n_rows == 0) fail(ErrorCode::EmptyResult, "explanation has no rows");
  std::vector<FeatureScore> out;
  for (std::size_t j = 0; j < e.n_features; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < e.n_rows; ++i) sum += std::fabs(e.shap(i, j));
    out.push_back({e.feature_names[j], sum / static_cast<double>(e.n_rows)});
  }
  std::stable_sort(out.begin(), out.end(), [](const FeatureScore& a, const FeatureScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.feature < b.feature;
  });
  return out;
}

/// Dense-rank percentile of each value within its column: the smallest
/// distinct value maps to 0, the largest to 1; a constant column maps to 0.5.
inline std::vector<double> value_percentiles(std::span<const double> column) {
  std::vector<double> distinct(column.begin(), column.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> out(column.size(), 0.5);
  if (distinct.size() < 2) return out;
  const double top = static_cast<double>(distinct.size() - 1);
  for (std::size_t i = 0; i < column.size(); ++i) {
    const auto rank = std::lower_bound(distinct.begin(), distinct.end(), column[i]) - distinct.begin();
    out[i] = static_cast<double>(rank) / top;
  }
  return out;
}

struct BeeswarmPoint {
  std::string feature;
  std::string row_id;
  double shap_value = 0.0;
  double feature_value = 0.0;
  double feature_value_percentile = 0.0;
};

/// Long-format rows for the `top_n` features by mean |SHAP|, in rank order.
inline std::vector<BeeswarmPoint> beeswarm_data(const Explanation& e, std::size_t top_n) {
  const auto ranking = mean_abs_importance(e);
  std::vector<BeeswarmPoint> out;
  const std::size_t n_features = std::min(top_n, ranking.size());
  out.reserve(n_features * e.n_rows);
  for (std::size_t r = 0; r < n_features; ++r) {
    const std::size_t j = e.feature_index(ranking[r].feature);
    std::vector<double> column(e.n_rows);
    for (std::size_t i = 0; i < e.n_rows; ++i) column[i] = e.value(i, j);
    const auto pct = value_percentiles(column);
    for (std::size_t i = 0; i < e.n_rows; ++i) {
      out.push_back({ranking[r].feature, e.row_ids[i], e.shap(i, j), column[i], pct[i]});
    }
  }
  return out;
}

struct ForceContribution {
  std::string feature;
  double feature_value = 0.0;
  double shap_value = 0.0;
};

/// One row's additive decomposition. The euro fields are inverse Box-Cox of
/// the base and of the full prediction; individual SHAP values stay on the
/// transformed scale.
struct ForceRecord {
  std::string row_id;
  std::size_t row = 0;
  double base_value = 0.0;
  double prediction = 0.0;
  std::optional<double> base_value_euro;
  std::optional<double> prediction_euro;
  std::vector<ForceContribution> contributions;  // |phi| descending, zeros omitted
};

inline std::optional<double> try_inverse(double y, const BoxCoxParams& params) {
  if (!in_domain(y, params)) return std::nullopt;
  return inverse(y, params);
}

inline ForceRecord force_data(const Explanation& e, std::size_t row,
                              const std::optional<BoxCoxParams>& box_cox = std::nullopt) {
  if (row >= e.n_rows) {
    fail(ErrorCode::RowOutOfRange, "row " + std::to_string(row) + " outside [0, " + std::to_string(e.n_rows) + ")");
  }
  ForceRecord rec;
  rec.row_id = e.row_ids[row];
  rec.row = row;
  rec.base_value = e.base_value;
  rec.prediction = e.predictions[row];
  if (box_cox) {
    rec.base_value_euro = try_inverse(rec.base_value, *box_cox);
    rec.prediction_euro = try_inverse(rec.prediction, *box_cox);
  }
  for (std::size_t j = 0; j < e.n_features; ++j) {
    const double phi = e.shap(row, j);
    if (phi != 0.0) rec.contributions.push_back({e.feature_names[j], e.value(row, j), phi});
  }
  std::stable_sort(rec.contributions.begin(), rec.contributions.end(),
                   [](const ForceContribution& a, const ForceContribution& b) {
                     return std::fabs(a.shap_value) > std::fabs(b.shap_value);
                   });
  return rec;
}

struct DependencePoint {
  std::string row_id;
  double feature_value = 0.0;
  double shap_value = 0.0;
};

inline std::vector<DependencePoint> shap_dependence(const Explanation& e, const std::string& feature) {
  const std::size_t j = e.feature_index(feature);
  std::vector<DependencePoint> out;
  out.reserve(e.n_rows);
  for (std::size_t i = 0; i < e.n_rows; ++i) out.push_back({e.row_ids[i], e.value(i, j), e.shap(i, j)});
  return out;
}

enum class OutputScale { Transformed, Euro };

inline const char* scale_name(OutputScale s) { return s == OutputScale::Euro ? "euro" : "transformed"; }

struct PdpCurve {
  std::string feature;
  std::vector<double> grid;
  std::vector<double> mean_prediction;
  OutputScale scale = OutputScale::Transformed;
};

/// `count` quantiles (linear interpolation between order statistics) at
/// probabilities 0, 1/(count-1), ..., 1, with repeated values collapsed.
inline std::vector<double> quantile_grid(std::vector<double> values, std::size_t count) {
  if (values.empty() || count == 0) return {};
  std::sort(values.begin(), values.end());
  std::vector<double> grid;
  const double last = static_cast<double>(values.size() - 1);
  for (std::size_t g = 0; g < count; ++g) {
    const double p = count == 1 ? 0.5 : static_cast<double>(g) / static_cast<double>(count - 1);
    const double pos = p * last;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    const double q = values[lo] + frac * (values[hi] - values[lo]);
    if (grid.empty() || q > grid.back()) grid.push_back(q);
  }
  return grid;
}

/// Classic partial dependence: substitute each grid value into `feature` for
/// every row, predict, average. On the euro scale each prediction is inverse
/// transformed before averaging.
inline PdpCurve pdp(const Regressor& model, const FeatureTable& table, const std::string& feature,
                    std::size_t grid_size = 50, OutputScale scale = OutputScale::Transformed,
                    const std::optional<BoxCoxParams>& box_cox = std::nullopt) {
  const auto j = table.find_feature(feature);
  if (!j) fail(ErrorCode::UnknownFeature, "no feature named '" + feature + "'");
  if (table.empty()) fail(ErrorCode::EmptyResult, "partial dependence needs at least one row");
  if (table.cols() != feature_count(model)) fail(ErrorCode::ShapeMismatch, "table does not match the model");
  if (scale == OutputScale::Euro && !box_cox) fail(ErrorCode::Config, "euro-scale PDP needs Box-Cox parameters");
  PdpCurve curve;
  curve.feature = feature;
  curve.scale = scale;
  curve.grid = quantile_grid(table.column(*j), grid_size);
  std::vector<double> row(table.cols());
  for (double v : curve.grid) {
    double sum = 0.0;
    for (std::size_t i = 0; i < table.rows(); ++i) {
      auto src = table.row(i);
      std::copy(src.begin(), src.end(), row.begin());
      row[*j] = v;
      const double y = predict(model, row);
      sum += scale == OutputScale::Euro ? inverse(y, *box_cox) : y;
    }
    curve.mean_prediction.push_back(sum / static_cast<double>(table.rows()));
  }
  return curve;
}

}  // namespace playerval
