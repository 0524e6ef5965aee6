#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "playerval/dataset.hpp"
#include "playerval/ensemble.hpp"
#include "playerval/error.hpp"
#include "playerval/explain.hpp"
#include "playerval/rng.hpp"

namespace playerval {

enum class ImportanceSource { Shap, Gain };

inline const char* importance_source_name(ImportanceSource s) { return s == ImportanceSource::Shap ? "shap" : "gain"; }

struct BorutaConfig {
  int max_iterations = 100;
  double alpha = 0.05;
  ImportanceSource importance_source = ImportanceSource::Shap;
  // Internal model: a small, shallow random forest.
  ForestParams forest{.n_estimators = 50,
                      .bootstrap = true,
                      .tree = {.max_depth = 6, .min_samples_split = 3, .min_samples_leaf = 3, .sqrt_features = true}};
  // Rows explained per iteration for SHAP importance (0 = all rows).
  std::size_t shap_rows = 200;
  // No accept/reject decision before this many iterations.
  int min_iterations = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::Config, "Boruta alpha must lie in (0, 1)");
    if (max_iterations < 10) fail(ErrorCode::Config, "Boruta max_iterations must be >= 10");
    if (min_iterations < 1) fail(ErrorCode::Config, "Boruta min_iterations must be >= 1");
  }
};

enum class FeatureDecision { Tentative, Accepted, Rejected };

inline const char* decision_name(FeatureDecision d) {
  switch (d) {
    case FeatureDecision::Accepted: return "accepted";
    case FeatureDecision::Rejected: return "rejected";
    default: return "tentative";
  }
}

struct BorutaVerdict {
  std::vector<std::string> feature_names;
  std::vector<FeatureDecision> decisions;  // per feature
  std::vector<int> hit_counts;             // per feature
  std::vector<int> decided_at;             // iteration of the decision, 0 if tentative
  int iterations_run = 0;
  // importance_history[t][f]: importance of real feature f at iteration t+1
  // (NaN once the feature was rejected and left the model).
  std::vector<std::vector<double>> importance_history;
  std::vector<double> shadow_max_history;

  std::vector<std::string> names_with(FeatureDecision d) const {
    std::vector<std::string> out;
    for (std::size_t f = 0; f < decisions.size(); ++f) {
      if (decisions[f] == d) out.push_back(feature_names[f]);
    }
    return out;
  }
  std::vector<std::string> accepted() const { return names_with(FeatureDecision::Accepted); }
  std::vector<std::string> rejected() const { return names_with(FeatureDecision::Rejected); }
  std::vector<std::string> tentative() const { return names_with(FeatureDecision::Tentative); }

  /// Accepted features (plus tentative ones when asked), in input order.
  std::vector<std::string> selected(bool include_tentative) const {
    std::vector<std::string> out;
    for (std::size_t f = 0; f < decisions.size(); ++f) {
      if (decisions[f] == FeatureDecision::Accepted ||
          (include_tentative && decisions[f] == FeatureDecision::Tentative)) {
        out.push_back(feature_names[f]);
      }
    }
    return out;
  }
};

namespace detail {

// log C(n, k) + n log(0.5)
inline double log_binomial_half(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0);
}

}  // namespace detail

/// P(X >= hits) for X ~ Binomial(n, 1/2).
inline double binomial_upper_tail(int n, int hits) {
  double p = 0.0;
  for (int k = std::max(hits, 0); k <= n; ++k) p += std::exp(detail::log_binomial_half(n, k));
  return std::min(p, 1.0);
}

/// P(X <= hits) for X ~ Binomial(n, 1/2).
inline double binomial_lower_tail(int n, int hits) {
  double p = 0.0;
  for (int k = 0; k <= std::min(hits, n); ++k) p += std::exp(detail::log_binomial_half(n, k));
  return std::min(p, 1.0);
}

/// Per-column importance of a fitted forest: mean |SHAP| over `rows` of `x`,
/// or total split gain.
inline std::vector<double> column_importance(const RandomForestModel& model, MatrixView x,
                                             std::span<const std::size_t> rows, ImportanceSource source) {
  const auto form = additive_form(model);
  if (source == ImportanceSource::Gain) return gain_importance(form);
  std::vector<double> total(x.cols, 0.0);
  std::vector<double> phi(x.cols);
  for (std::size_t r : rows) {
    std::fill(phi.begin(), phi.end(), 0.0);
    tree_shap_row(form, x.row(r), phi);
    for (std::size_t j = 0; j < x.cols; ++j) total[j] += std::fabs(phi[j]);
  }
  for (double& t : total) t /= static_cast<double>(rows.size());
  return total;
}

/// Boruta all-relevant selection. Each iteration appends one permuted shadow
/// copy of every input feature, rejected ones included, so the shadow pool
/// keeps its size. The internal forest is fit on the non-rejected real
/// columns plus all shadows, and counts a hit for each
/// undecided feature whose importance strictly exceeds the best shadow's.
/// From `min_iterations` on, a two-sided binomial test (p = 1/2) at level
/// alpha / (number of undecided features) accepts or rejects.
inline BorutaVerdict run_boruta(const FeatureTable& table, const BorutaConfig& config) {
  config.validate();
  if (table.cols() < 2) fail(ErrorCode::TooFewRows, "Boruta needs at least 2 features");
  if (table.rows() < 20) fail(ErrorCode::TooFewRows, "Boruta needs at least 20 rows");
  if (has_missing_cells(table)) fail(ErrorCode::DegenerateInput, "Boruta input has missing cells");

  const std::size_t n = table.rows();
  const std::size_t m = table.cols();
  BorutaVerdict verdict;
  verdict.feature_names = table.feature_names();
  verdict.decisions.assign(m, FeatureDecision::Tentative);
  verdict.hit_counts.assign(m, 0);
  verdict.decided_at.assign(m, 0);

  std::vector<bool> undecided(m, true);
  std::vector<double> matrix;
  std::vector<double> column(n);
  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    std::vector<std::size_t> real_cols, shadow_src;
    for (std::size_t f = 0; f < m; ++f) {
      if (verdict.decisions[f] != FeatureDecision::Rejected) real_cols.push_back(f);
    }
    std::size_t n_undecided = 0;
    for (std::size_t f = 0; f < m; ++f) n_undecided += undecided[f];
    if (n_undecided == 0) break;
    shadow_src.resize(m);
    std::iota(shadow_src.begin(), shadow_src.end(), std::size_t{0});

    Rng rng(derive_seed(config.seed, 2 * static_cast<std::uint64_t>(iter)));
    const std::size_t width = real_cols.size() + shadow_src.size();
    matrix.assign(n * width, 0.0);
    for (std::size_t c = 0; c < real_cols.size(); ++c) {
      for (std::size_t i = 0; i < n; ++i) matrix[i * width + c] = table.at(i, real_cols[c]);
    }
    for (std::size_t s = 0; s < shadow_src.size(); ++s) {
      for (std::size_t i = 0; i < n; ++i) column[i] = table.at(i, shadow_src[s]);
      shuffle(std::span<double>(column), rng);
      const std::size_t c = real_cols.size() + s;
      for (std::size_t i = 0; i < n; ++i) matrix[i * width + c] = column[i];
    }
    const MatrixView x(matrix, n, width);

    std::vector<std::size_t> rows;
    if (config.importance_source == ImportanceSource::Shap) {
      rows = random_permutation(n, rng);
      if (config.shap_rows > 0 && config.shap_rows < n) rows.resize(config.shap_rows);
      std::sort(rows.begin(), rows.end());
    }
    RandomForestModel forest;
    try {
      forest = fit_forest(x, table.target(), config.forest, derive_seed(config.seed, 2 * static_cast<std::uint64_t>(iter) + 1));
    } catch (const Error& e) {
      throw Error(ErrorCode::ModelFitFailure, "Boruta iteration " + std::to_string(iter) + ": " + e.what());
    }
    const auto importance = column_importance(forest, x, rows, config.importance_source);

    double shadow_max = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < shadow_src.size(); ++s) shadow_max = std::max(shadow_max, importance[real_cols.size() + s]);
    std::vector<double> history(m, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < real_cols.size(); ++c) history[real_cols[c]] = importance[c];
    for (std::size_t c = 0; c < real_cols.size(); ++c) {
      const std::size_t f = real_cols[c];
      if (undecided[f] && importance[c] > shadow_max) ++verdict.hit_counts[f];
    }
    verdict.importance_history.push_back(std::move(history));
    verdict.shadow_max_history.push_back(shadow_max);
    verdict.iterations_run = iter;

    if (iter < config.min_iterations) continue;
    const double level = config.alpha / static_cast<double>(n_undecided);
    for (std::size_t f = 0; f < m; ++f) {
      if (!undecided[f]) continue;
      const int hits = verdict.hit_counts[f];
      const double upper = binomial_upper_tail(iter, hits);
      const double lower = binomial_lower_tail(iter, hits);
      const double p_two_sided = std::min(1.0, 2.0 * std::min(upper, lower));
      if (p_two_sided < level) {
        verdict.decisions[f] = upper < lower ? FeatureDecision::Accepted : FeatureDecision::Rejected;
        verdict.decided_at[f] = iter;
        undecided[f] = false;
      }
    }
  }
  return verdict;
}

}  // namespace playerval
