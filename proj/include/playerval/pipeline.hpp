#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "playerval/csv.hpp"
#include "playerval/dataset.hpp"
#include "playerval/error.hpp"
#include "playerval/evaltune.hpp"
#include "playerval/explain.hpp"
#include "playerval/model.hpp"
#include "playerval/rng.hpp"
#include "playerval/selection.hpp"
#include "playerval/svg.hpp"
#include "playerval/synth.hpp"
#include "playerval/transform.hpp"

namespace playerval::pipeline {

inline constexpr const char* kSoftwareVersion = "1.0.0";
inline constexpr int kReportVersion = 1;

// Input layout for `prepare`: the player attribute CSV split into outfield or
// goalkeeper rows, or a generic `name,<features...>,value` table.
enum class InputSchema { Outfield, Goalkeeper, Generic };

inline const char* schema_name(InputSchema s) {
  switch (s) {
    case InputSchema::Outfield: return "outfield";
    case InputSchema::Goalkeeper: return "goalkeeper";
    default: return "generic";
  }
}

inline InputSchema parse_schema(const std::string& s) {
  if (s == "outfield") return InputSchema::Outfield;
  if (s == "goalkeeper") return InputSchema::Goalkeeper;
  if (s == "generic") return InputSchema::Generic;
  fail(ErrorCode::Config, "unknown schema '" + s + "' (expected outfield, goalkeeper or generic)");
}

inline OutputScale parse_scale(const std::string& s) {
  if (s == "euro") return OutputScale::Euro;
  if (s == "transformed") return OutputScale::Transformed;
  fail(ErrorCode::Config, "unknown metric scale '" + s + "' (expected euro or transformed)");
}

inline SelectionCriterion parse_criterion(const std::string& s) {
  if (s == "r2") return SelectionCriterion::MeanRSquared;
  if (s == "rmse") return SelectionCriterion::MeanRmse;
  fail(ErrorCode::Config, "unknown selection criterion '" + s + "' (expected r2 or rmse)");
}

inline ImportanceSource parse_importance(const std::string& s) {
  if (s == "shap") return ImportanceSource::Shap;
  if (s == "gain") return ImportanceSource::Gain;
  fail(ErrorCode::Config, "unknown importance source '" + s + "' (expected shap or gain)");
}

struct PipelineConfig {
  // paths
  std::string input;
  std::string out_dir = "playerval-out";
  std::string model_path;      // default <out_dir>/model.json
  std::string predict_input;   // default: input
  std::string predict_output;  // default <out_dir>/predictions.csv

  // data
  InputSchema schema = InputSchema::Outfield;
  double value_cap = kDefaultValueCap;
  double test_fraction = 0.2;
  std::uint64_t seed = 42;
  bool impute = false;
  bool box_cox = true;
  bool auto_shift = false;

  // selection
  BorutaConfig boruta;
  bool include_tentative = false;

  // model and tuning
  ModelFamily family = ModelFamily::Gbdt;
  GbdtParams gbdt;
  ForestParams forest;
  std::map<std::string, std::vector<double>> grid;  // empty: family default
  int k = 5;
  OutputScale scale = OutputScale::Euro;
  SelectionCriterion criterion = SelectionCriterion::MeanRSquared;

  // explanation
  std::string explain_data = "train";  // train | test
  std::size_t explain_rows = 1000;     // 0 = all
  std::size_t top_k = 9;
  std::size_t pdp_grid = 50;
  OutputScale pdp_scale = OutputScale::Transformed;
  std::vector<std::size_t> force_rows{0, 1, 2};

  std::string path(const std::string& file) const { return (std::filesystem::path(out_dir) / file).string(); }
  std::string resolved_model_path() const { return model_path.empty() ? path("model.json") : model_path; }
  std::string resolved_predict_input() const { return predict_input.empty() ? input : predict_input; }
  std::string resolved_predict_output() const {
    return predict_output.empty() ? path("predictions.csv") : predict_output;
  }

  void validate() const {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail(ErrorCode::Config, "test_fraction must lie in (0, 1)");
    if (!(value_cap > 0.0)) fail(ErrorCode::Config, "value_cap must be positive");
    if (k < 2) fail(ErrorCode::BadK, "k must be >= 2");
    if (explain_data != "train" && explain_data != "test") {
      fail(ErrorCode::Config, "explain_data must be train or test");
    }
    if (pdp_grid < 2) fail(ErrorCode::Config, "pdp_grid must be >= 2");
    if (top_k < 1) fail(ErrorCode::Config, "top_k must be >= 1");
    boruta.validate();
    gbdt.tree.validate();
    forest.tree.validate();
  }

  ModelSpec model_spec() const {
    ModelSpec spec;
    spec.family = family;
    spec.gbdt = gbdt;
    spec.forest = forest;
    spec.box_cox = box_cox;
    spec.impute = impute;
    spec.auto_shift = auto_shift;
    return spec;
  }

  GridSpec grid_spec() const {
    GridSpec g;
    g.family = family;
    if (grid.empty()) {
      if (family == ModelFamily::Gbdt) {
        g.axes = {{"learning_rate", {0.05, 0.1, 0.2}}, {"max_depth", {2, 3, 4}}, {"n_estimators", {900}}};
      } else {
        g.axes = {{"max_depth", {10, 15, 20}}, {"n_estimators", {700}}};
      }
      return g;
    }
    for (const auto& [name, values] : grid) {
      if (!values.empty()) g.axes.push_back({name, values});
    }
    return g;
  }

  // Sub-seeds for the stages; one config seed fixes every artifact.
  std::uint64_t split_seed() const { return derive_seed(seed, 1); }
  std::uint64_t boruta_seed() const { return derive_seed(seed, 2); }
  std::uint64_t cv_seed() const { return derive_seed(seed, 3); }
  std::uint64_t fit_seed() const { return derive_seed(seed, 4); }
  std::uint64_t explain_seed() const { return derive_seed(seed, 5); }
};

inline nlohmann::json to_json(const PipelineConfig& c, bool include_paths) {
  nlohmann::json j;
  if (include_paths) {
    j["input"] = c.input;
    j["out_dir"] = c.out_dir;
    j["model_path"] = c.resolved_model_path();
    j["predict_input"] = c.resolved_predict_input();
    j["predict_output"] = c.resolved_predict_output();
  }
  j["schema"] = schema_name(c.schema);
  j["value_cap"] = c.value_cap;
  j["test_fraction"] = c.test_fraction;
  j["seed"] = c.seed;
  j["impute"] = c.impute;
  j["box_cox"] = c.box_cox;
  j["auto_shift"] = c.auto_shift;
  j["boruta"] = {{"max_iterations", c.boruta.max_iterations},
                 {"alpha", c.boruta.alpha},
                 {"importance", importance_source_name(c.boruta.importance_source)},
                 {"n_estimators", c.boruta.forest.n_estimators},
                 {"tree", tree_params_to_json(c.boruta.forest.tree)},
                 {"shap_rows", c.boruta.shap_rows},
                 {"min_iterations", c.boruta.min_iterations},
                 {"include_tentative", c.include_tentative}};
  j["family"] = family_name(c.family);
  j["gbdt"] = {{"learning_rate", c.gbdt.learning_rate},
               {"n_estimators", c.gbdt.n_estimators},
               {"tree", tree_params_to_json(c.gbdt.tree)}};
  j["forest"] = {{"n_estimators", c.forest.n_estimators},
                 {"bootstrap", c.forest.bootstrap},
                 {"tree", tree_params_to_json(c.forest.tree)}};
  nlohmann::json axes = nlohmann::json::array();
  for (const auto& a : c.grid_spec().axes) axes.push_back({{"name", a.name}, {"values", a.values}});
  j["grid"] = axes;
  j["k"] = c.k;
  j["scale"] = scale_name(c.scale);
  j["criterion"] = c.criterion == SelectionCriterion::MeanRSquared ? "r2" : "rmse";
  j["explain"] = {{"data", c.explain_data},
                  {"rows", c.explain_rows},
                  {"top_k", c.top_k},
                  {"pdp_grid", c.pdp_grid},
                  {"pdp_scale", scale_name(c.pdp_scale)},
                  {"force_rows", c.force_rows}};
  return j;
}

// ---------------------------------------------------------------------------
// reports and manifest

/// Common header of every JSON report. Paths are left out so that runs in
/// different output directories produce identical reports.
inline nlohmann::json report_header(const std::string& name, const PipelineConfig& c) {
  return {{"report", name},
          {"report_version", kReportVersion},
          {"software_version", kSoftwareVersion},
          {"seed", c.seed},
          {"config", to_json(c, false)}};
}

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
inline std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

struct StageTimer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

/// Records a finished stage in <out_dir>/manifest.json (config, checksums of
/// the stage's artifacts, wall time). The manifest itself is not
/// reproducible because of the timings.
inline void record_stage(const PipelineConfig& c, const std::string& stage, const std::vector<std::string>& artifacts,
                         double seconds) {
  const std::string manifest_path = c.path("manifest.json");
  nlohmann::json m;
  if (std::filesystem::exists(manifest_path)) {
    try {
      m = read_json_file(manifest_path);
    } catch (const Error&) {
      m = nlohmann::json::object();
    }
  }
  m["software"] = "playerval";
  m["software_version"] = kSoftwareVersion;
  m["config"] = to_json(c, true);
  nlohmann::json sums = nlohmann::json::object();
  for (const auto& a : artifacts) {
    sums[std::filesystem::path(a).filename().string()] = file_checksum(a);
  }
  m["stages"][stage] = {{"seconds", seconds}, {"artifacts", sums}};
  write_json_file(manifest_path, m);
}

namespace detail {

inline void ensure_out_dir(const PipelineConfig& c) {
  std::error_code ec;
  std::filesystem::create_directories(c.out_dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create output directory '" + c.out_dir + "': " + ec.message());
}

inline void require_file(const std::string& path, const std::string& hint) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::Io, "missing '" + path + "' (" + hint + ")");
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
  return out;
}

inline std::string fmt(double v) { return csv::format_double(v); }

inline BoxCoxParams load_box_cox(const PipelineConfig& c) {
  const auto path = c.path("boxcox.json");
  require_file(path, "run prepare first");
  return box_cox_from_json(read_json_file(path).at("box_cox"));
}

inline FeatureTable load_train(const PipelineConfig& c) {
  const auto path = c.path("train.csv");
  require_file(path, "run prepare first");
  return read_table_csv(path);
}

struct FeatureChoice {
  std::vector<std::string> names;
  std::string source;
};

/// Features for tune/train-eval: the Boruta selection when present,
/// otherwise every prepared feature.
inline FeatureChoice chosen_features(const PipelineConfig& c, const FeatureTable& train) {
  const auto path = c.path("selection.json");
  if (!std::filesystem::exists(path)) return {train.feature_names(), "all"};
  const auto j = read_json_file(path);
  auto names = j.at("accepted").get<std::vector<std::string>>();
  if (c.include_tentative) {
    const auto tentative = j.at("tentative").get<std::vector<std::string>>();
    names.insert(names.end(), tentative.begin(), tentative.end());
    // keep input column order
    std::vector<std::string> ordered;
    for (const auto& f : train.feature_names()) {
      if (std::find(names.begin(), names.end(), f) != names.end()) ordered.push_back(f);
    }
    names = ordered;
  }
  if (names.empty()) {
    fail(ErrorCode::EmptyResult, "feature selection accepted no features; rerun with include_tentative or skip select");
  }
  return {names, c.include_tentative ? "selection+tentative" : "selection"};
}

inline nlohmann::json metric_json(const MetricReport& m) {
  return {{"r_squared", std::isnan(m.r_squared) ? nlohmann::json(nullptr) : nlohmann::json(m.r_squared)},
          {"rmse", m.rmse},
          {"scale", scale_name(m.scale)}};
}

inline nlohmann::json nullable(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

inline nlohmann::json spec_json(const ModelSpec& s) {
  nlohmann::json j{{"family", family_name(s.family)}};
  if (s.family == ModelFamily::Gbdt) {
    j["learning_rate"] = s.gbdt.learning_rate;
    j["n_estimators"] = s.gbdt.n_estimators;
    j["tree"] = tree_params_to_json(s.gbdt.tree);
  } else {
    j["n_estimators"] = s.forest.n_estimators;
    j["bootstrap"] = s.forest.bootstrap;
    j["tree"] = tree_params_to_json(s.forest.tree);
  }
  return j;
}

inline ModelSpec spec_from_json(const nlohmann::json& j, ModelSpec base) {
  base.family = parse_family(j.at("family").get<std::string>());
  if (base.family == ModelFamily::Gbdt) {
    base.gbdt.learning_rate = j.at("learning_rate").get<double>();
    base.gbdt.n_estimators = j.at("n_estimators").get<int>();
    base.gbdt.tree = tree_params_from_json(j.at("tree"));
  } else {
    base.forest.n_estimators = j.at("n_estimators").get<int>();
    base.forest.bootstrap = j.at("bootstrap").get<bool>();
    base.forest.tree = tree_params_from_json(j.at("tree"));
  }
  return base;
}

inline nlohmann::json cv_json(const CvResult& cv) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : cv.folds) {
    folds.push_back({{"fold", f.fold},
                     {"n_train", f.n_train},
                     {"n_test", f.n_test},
                     {"transformed", metric_json(f.transformed)},
                     {"euro", metric_json(f.euro)},
                     {"lambda", f.box_cox ? nlohmann::json(f.box_cox->lambda) : nlohmann::json(nullptr)}});
  }
  return {{"k", cv.k},
          {"seed", cv.seed},
          {"scale", scale_name(cv.scale)},
          {"mean_r_squared", nullable(cv.mean_r_squared)},
          {"mean_rmse", cv.mean_rmse},
          {"transformed", {{"mean_r_squared", nullable(cv.mean_r_squared_transformed)},
                           {"mean_rmse", cv.mean_rmse_transformed}}},
          {"euro", {{"mean_r_squared", nullable(cv.mean_r_squared_euro)}, {"mean_rmse", cv.mean_rmse_euro}}},
          {"folds", folds}};
}

/// Sorted seeded sample of `count` row indices (all rows when count is 0 or
/// at least n).
inline std::vector<std::size_t> sample_rows(std::size_t n, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  auto rows = random_permutation(n, rng);
  if (count > 0 && count < n) rows.resize(count);
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// stages

struct PrepareSummary {
  std::size_t rows_read = 0;
  std::size_t rows_after_cleaning = 0;
  std::size_t rows_capped = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::optional<BoxCoxParams> box_cox;
};

/// Load, clean, partition, cap, split; fit Box-Cox on the training target.
inline PrepareSummary cmd_prepare(const PipelineConfig& c) {
  c.validate();
  StageTimer timer;
  if (c.input.empty()) fail(ErrorCode::Config, "no input file given");
  if (!std::filesystem::exists(c.input)) fail(ErrorCode::Io, "input file '" + c.input + "' does not exist");
  detail::ensure_out_dir(c);
  const auto policy = c.impute ? MissingPolicy::KeepForImputation : MissingPolicy::Drop;

  PrepareSummary s;
  nlohmann::json data;
  FeatureTable table;
  if (c.schema == InputSchema::Generic) {
    const auto raw = read_table_csv(c.input);
    s.rows_read = raw.rows();
    table = drop_incomplete_rows(raw, policy);
    if (table.empty()) fail(ErrorCode::EmptyResult, c.input + ": every row was dropped during cleaning");
  } else {
    const auto records = load_csv(c.input);
    s.rows_read = records.records.size();
    const auto parts = clean_and_partition(records, policy);
    table = c.schema == InputSchema::Outfield ? parts.outfield : parts.goalkeepers;
    data["invalid_cells"] = records.invalid_cells.size();
    data["outfield_rows"] = parts.outfield.rows();
    data["goalkeeper_rows"] = parts.goalkeepers.rows();
    if (table.empty()) {
      fail(ErrorCode::EmptyResult, c.input + ": no " + std::string(schema_name(c.schema)) + " rows after cleaning");
    }
  }
  s.rows_after_cleaning = table.rows();
  const auto capped = cap_value(table, c.value_cap);
  s.rows_capped = table.rows() - capped.rows();
  if (capped.empty()) {
    fail(ErrorCode::EmptyResult, "every row exceeds the value cap of " + detail::fmt(c.value_cap));
  }
  const auto split = train_test_split(capped, c.test_fraction, c.split_seed());
  s.n_train = split.train.rows();
  s.n_test = split.test.rows();

  nlohmann::json bc_json = nullptr;
  if (c.box_cox) {
    s.box_cox = fit_target_transform(split.train.target(), c.auto_shift);
    bc_json = box_cox_to_json(*s.box_cox);
  }

  const auto train_path = c.path("train.csv");
  const auto test_path = c.path("test.csv");
  const auto bc_path = c.path("boxcox.json");
  const auto report_path = c.path("prepare_report.json");
  write_table_csv(train_path, split.train);
  write_table_csv(test_path, split.test);
  auto bc = report_header("boxcox", c);
  bc["fitted_on"] = "train";
  bc["n"] = s.n_train;
  bc["box_cox"] = bc_json;
  write_json_file(bc_path, bc);

  auto report = report_header("prepare", c);
  data["rows_read"] = s.rows_read;
  data["rows_after_cleaning"] = s.rows_after_cleaning;
  data["rows_above_cap"] = s.rows_capped;
  data["n_train"] = s.n_train;
  data["n_test"] = s.n_test;
  data["features"] = capped.feature_names();
  data["split_seed"] = c.split_seed();
  report["data"] = data;
  report["box_cox"] = bc_json;
  write_json_file(report_path, report);
  record_stage(c, "prepare", {train_path, test_path, bc_path, report_path}, timer.seconds());
  return s;
}

/// Boruta on the training table with the Box-Cox-transformed target.
inline BorutaVerdict cmd_select(const PipelineConfig& c) {
  c.validate();
  StageTimer timer;
  detail::ensure_out_dir(c);
  auto train = detail::load_train(c);
  std::vector<double> y = train.target();
  if (c.box_cox) {
    const auto bc = detail::load_box_cox(c);
    y = forward(y, bc);
  }
  train = train.with_target(y);
  if (has_missing_cells(train)) train = MeanImputer::fit(train).apply(train);

  BorutaConfig bconf = c.boruta;
  bconf.seed = c.boruta_seed();
  const auto verdict = run_boruta(train, bconf);

  const auto json_path = c.path("selection.json");
  const auto csv_path = c.path("boruta_history.csv");
  auto report = report_header("selection", c);
  report["boruta_seed"] = bconf.seed;
  report["iterations_run"] = verdict.iterations_run;
  report["accepted"] = verdict.accepted();
  report["rejected"] = verdict.rejected();
  report["tentative"] = verdict.tentative();
  report["selected"] = verdict.selected(c.include_tentative);
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t f = 0; f < verdict.feature_names.size(); ++f) {
    features.push_back({{"name", verdict.feature_names[f]},
                        {"decision", decision_name(verdict.decisions[f])},
                        {"hits", verdict.hit_counts[f]},
                        {"decided_at", verdict.decided_at[f]}});
  }
  report["features"] = features;
  nlohmann::json history = nlohmann::json::array();
  for (std::size_t t = 0; t < verdict.importance_history.size(); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (double v : verdict.importance_history[t]) row.push_back(detail::nullable(v));
    history.push_back({{"iteration", t + 1}, {"shadow_max", verdict.shadow_max_history[t]}, {"importance", row}});
  }
  report["importance_history"] = history;
  write_json_file(json_path, report);

  auto out = detail::open_out(csv_path);
  csv::write_row(out, std::vector<std::string>{"iteration", "feature", "importance", "shadow_max", "hit"});
  for (std::size_t t = 0; t < verdict.importance_history.size(); ++t) {
    const double smax = verdict.shadow_max_history[t];
    for (std::size_t f = 0; f < verdict.feature_names.size(); ++f) {
      const double v = verdict.importance_history[t][f];
      if (std::isnan(v)) continue;
      csv::write_row(out, std::vector<std::string>{std::to_string(t + 1), verdict.feature_names[f], detail::fmt(v),
                                                   detail::fmt(smax), v > smax ? "1" : "0"});
    }
  }
  out.close();
  record_stage(c, "select", {json_path, csv_path}, timer.seconds());
  return verdict;
}

/// Grid search with k-fold CV on the training table.
inline GridSearchResult cmd_tune(const PipelineConfig& c) {
  c.validate();
  StageTimer timer;
  detail::ensure_out_dir(c);
  const auto train_all = detail::load_train(c);
  const auto features = detail::chosen_features(c, train_all);
  const auto train = train_all.select_features(features.names);
  const auto grid = c.grid_spec();
  const auto result = grid_search(grid, c.model_spec(), train, c.k, c.cv_seed(), c.scale, c.criterion);

  const auto csv_path = c.path("tune_cv.csv");
  const auto json_path = c.path("tune_best.json");
  auto out = detail::open_out(csv_path);
  std::vector<std::string> header{"point"};
  for (const auto& a : grid.axes) header.push_back(a.name);
  for (const char* h : {"fold", "n_train", "n_test", "r2_transformed", "rmse_transformed", "r2_euro", "rmse_euro",
                        "lambda"}) {
    header.emplace_back(h);
  }
  csv::write_row(out, header);
  for (const auto& p : result.points) {
    std::vector<std::string> prefix{std::to_string(p.index)};
    for (double v : p.values) prefix.push_back(detail::fmt(v));
    for (const auto& f : p.cv.folds) {
      auto row = prefix;
      row.push_back(std::to_string(f.fold));
      row.push_back(std::to_string(f.n_train));
      row.push_back(std::to_string(f.n_test));
      row.push_back(detail::fmt(f.transformed.r_squared));
      row.push_back(detail::fmt(f.transformed.rmse));
      row.push_back(detail::fmt(f.euro.r_squared));
      row.push_back(detail::fmt(f.euro.rmse));
      row.push_back(f.box_cox ? detail::fmt(f.box_cox->lambda) : std::string());
      csv::write_row(out, row);
    }
    auto row = prefix;
    row.insert(row.end(), {"mean", "", "", detail::fmt(p.cv.mean_r_squared_transformed),
                           detail::fmt(p.cv.mean_rmse_transformed), detail::fmt(p.cv.mean_r_squared_euro),
                           detail::fmt(p.cv.mean_rmse_euro), ""});
    csv::write_row(out, row);
  }
  out.close();

  auto report = report_header("tune", c);
  report["features"] = features.names;
  report["features_source"] = features.source;
  report["cv_seed"] = c.cv_seed();
  report["grid_size"] = grid.size();
  report["best_index"] = result.best_index;
  report["best"] = detail::spec_json(result.best_spec);
  const auto& best_cv = result.points[result.best_index].cv;
  report["best_cv"] = detail::cv_json(best_cv);
  write_json_file(json_path, report);
  record_stage(c, "tune", {csv_path, json_path}, timer.seconds());
  return result;
}

struct TrainEvalSummary {
  ModelSpec spec;
  CvResult cv;
  MetricReport test_transformed;
  MetricReport test_euro;
  FittedModel model;
};

/// CV on the training table, final fit, and the one-time held-out test score.
inline TrainEvalSummary cmd_train_eval(const PipelineConfig& c) {
  c.validate();
  StageTimer timer;
  detail::ensure_out_dir(c);
  const auto train_all = detail::load_train(c);
  const auto features = detail::chosen_features(c, train_all);
  const auto train = train_all.select_features(features.names);

  TrainEvalSummary s;
  s.spec = c.model_spec();
  std::string params_source = "config";
  const auto best_path = c.path("tune_best.json");
  if (std::filesystem::exists(best_path)) {
    s.spec = detail::spec_from_json(read_json_file(best_path).at("best"), s.spec);
    params_source = "tune_best.json";
  }
  s.cv = cross_validate(s.spec, train, c.k, c.cv_seed(), c.scale);
  s.model = fit_model(s.spec, train, c.fit_seed());

  // First and only read of the held-out table.
  const auto test_path = c.path("test.csv");
  detail::require_file(test_path, "run prepare first");
  const auto test = read_table_csv(test_path, features.names);
  const auto pred_t = s.model.predict_transformed(test);
  std::vector<double> y_t, pred_e;
  for (double y : test.target()) y_t.push_back(s.model.to_transformed(y));
  for (double p : pred_t) pred_e.push_back(s.model.to_euro(p));
  s.test_transformed = score(y_t, pred_t, OutputScale::Transformed);
  s.test_euro = score(test.target(), pred_e, OutputScale::Euro);

  const auto model_path = c.resolved_model_path();
  const auto metrics_path = c.path("metrics.json");
  const auto pred_path = c.path("test_predictions.csv");
  if (auto parent = std::filesystem::path(model_path).parent_path(); !parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  save_model(model_path, s.model);

  auto report = report_header("train_eval", c);
  report["features"] = features.names;
  report["features_source"] = features.source;
  report["params_source"] = params_source;
  report["model"] = detail::spec_json(s.spec);
  report["fit_seed"] = c.fit_seed();
  report["n_train"] = train.rows();
  report["n_test"] = test.rows();
  report["box_cox"] = s.model.box_cox ? box_cox_to_json(*s.model.box_cox) : nlohmann::json(nullptr);
  report["cv"] = detail::cv_json(s.cv);
  report["test"] = {{"transformed", detail::metric_json(s.test_transformed)},
                    {"euro", detail::metric_json(s.test_euro)}};
  write_json_file(metrics_path, report);

  auto out = detail::open_out(pred_path);
  csv::write_row(out, std::vector<std::string>{"row_id", "actual", "predicted_transformed", "predicted_euro"});
  for (std::size_t i = 0; i < test.rows(); ++i) {
    csv::write_row(out, std::vector<std::string>{test.row_ids()[i], detail::fmt(test.target()[i]),
                                                 detail::fmt(pred_t[i]), detail::fmt(pred_e[i])});
  }
  out.close();
  record_stage(c, "train_eval", {model_path, metrics_path, pred_path}, timer.seconds());
  return s;
}

struct ExplainSummary {
  Explanation explanation;
  std::vector<FeatureScore> importance;
  std::vector<ForceRecord> force;
  std::vector<PdpCurve> pdp;
};

/// Global (importance, beeswarm, PDP, dependence) and local (force)
/// explanations of the trained model.
inline ExplainSummary cmd_explain(const PipelineConfig& c) {
  c.validate();
  StageTimer timer;
  detail::ensure_out_dir(c);
  const auto model_path = c.resolved_model_path();
  detail::require_file(model_path, "run train-eval first");
  const auto model = load_model(model_path);
  const auto data_path = c.path(c.explain_data + ".csv");
  detail::require_file(data_path, "run prepare first");
  const auto data = model.prepare_features(read_table_csv(data_path, model.feature_names));
  if (data.empty()) fail(ErrorCode::EmptyResult, data_path + " has no rows");

  const auto rows = detail::sample_rows(data.rows(), c.explain_rows, c.explain_seed());
  const auto sample = data.select_rows(rows);
  ExplainSummary s;
  s.explanation = tree_shap(model.regressor, sample);
  s.importance = mean_abs_importance(s.explanation);
  const std::size_t top = std::min(c.top_k, s.importance.size());
  std::vector<std::string> written;

  // importance
  {
    const auto path = c.path("importance.csv");
    auto out = detail::open_out(path);
    csv::write_row(out, std::vector<std::string>{"rank", "feature", "mean_abs_shap"});
    std::vector<std::string> labels;
    std::vector<double> values;
    for (std::size_t r = 0; r < s.importance.size(); ++r) {
      csv::write_row(out, std::vector<std::string>{std::to_string(r + 1), s.importance[r].feature,
                                                   detail::fmt(s.importance[r].score)});
      if (r < top) {
        labels.push_back(s.importance[r].feature);
        values.push_back(s.importance[r].score);
      }
    }
    out.close();
    const auto svg_path = c.path("importance.svg");
    svg::bar_chart("mean |SHAP value|, top " + std::to_string(top), labels, values).save(svg_path);
    written.insert(written.end(), {path, svg_path});
  }

  // beeswarm
  {
    const auto points = beeswarm_data(s.explanation, top);
    const auto path = c.path("beeswarm.csv");
    auto out = detail::open_out(path);
    csv::write_row(out, std::vector<std::string>{"feature", "row_id", "shap_value", "feature_value",
                                                 "feature_value_percentile"});
    std::vector<std::string> lanes;
    std::vector<svg::SwarmDot> dots;
    for (const auto& p : points) {
      csv::write_row(out, std::vector<std::string>{p.feature, p.row_id, detail::fmt(p.shap_value),
                                                   detail::fmt(p.feature_value),
                                                   detail::fmt(p.feature_value_percentile)});
      if (lanes.empty() || lanes.back() != p.feature) lanes.push_back(p.feature);
      dots.push_back({lanes.size() - 1, p.shap_value, p.feature_value_percentile});
    }
    out.close();
    const auto svg_path = c.path("beeswarm.svg");
    svg::beeswarm_chart("SHAP values, top " + std::to_string(top) + " features", lanes, dots).save(svg_path);
    written.insert(written.end(), {path, svg_path});
  }

  // force records for the requested rows of the data table
  {
    std::vector<std::size_t> force_rows;
    for (std::size_t r : c.force_rows) {
      if (r >= data.rows()) {
        fail(ErrorCode::RowOutOfRange, "force row " + std::to_string(r) + " outside [0, " +
                                           std::to_string(data.rows()) + ")");
      }
      force_rows.push_back(r);
    }
    const auto force_table = data.select_rows(force_rows);
    const auto fe = tree_shap(model.regressor, force_table);
    nlohmann::json records = nlohmann::json::array();
    for (std::size_t i = 0; i < force_rows.size(); ++i) {
      auto rec = force_data(fe, i, model.box_cox);
      rec.row = force_rows[i];
      nlohmann::json contributions = nlohmann::json::array();
      std::vector<svg::ForceBar> bars;
      for (const auto& fc : rec.contributions) {
        contributions.push_back({{"feature", fc.feature}, {"value", fc.feature_value}, {"shap_value", fc.shap_value}});
        if (bars.size() < 15) bars.push_back({fc.feature + " = " + detail::fmt(fc.feature_value), fc.shap_value});
      }
      const auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
      records.push_back({{"row", rec.row},
                         {"row_id", rec.row_id},
                         {"base_value", rec.base_value},
                         {"prediction_transformed", rec.prediction},
                         {"base_value_euro", opt(rec.base_value_euro)},
                         {"prediction_euro", opt(rec.prediction_euro)},
                         {"contributions", contributions}});
      const auto svg_path = c.path("force_" + std::to_string(rec.row) + ".svg");
      svg::force_chart(rec.row_id + " (transformed scale)", rec.base_value, rec.prediction, bars).save(svg_path);
      written.push_back(svg_path);
      s.force.push_back(std::move(rec));
    }
    auto report = report_header("force", c);
    report["data"] = c.explain_data;
    report["note"] = "shap values are on the transformed scale; euro fields are inverse Box-Cox of totals only";
    report["records"] = records;
    const auto path = c.path("force.json");
    write_json_file(path, report);
    written.push_back(path);
  }

  // partial dependence and SHAP dependence for the top features
  {
    const auto pdp_path = c.path("pdp.csv");
    const auto dep_path = c.path("dependence.csv");
    auto pdp_out = detail::open_out(pdp_path);
    auto dep_out = detail::open_out(dep_path);
    csv::write_row(pdp_out, std::vector<std::string>{"feature", "grid_value", "mean_prediction", "scale"});
    csv::write_row(dep_out, std::vector<std::string>{"feature", "row_id", "feature_value", "shap_value"});
    std::vector<svg::Panel> pdp_panels, dep_panels;
    for (std::size_t r = 0; r < top; ++r) {
      const auto& name = s.importance[r].feature;
      auto curve = pdp(model.regressor, sample, name, c.pdp_grid, c.pdp_scale, model.box_cox);
      for (std::size_t g = 0; g < curve.grid.size(); ++g) {
        csv::write_row(pdp_out, std::vector<std::string>{name, detail::fmt(curve.grid[g]),
                                                         detail::fmt(curve.mean_prediction[g]),
                                                         scale_name(curve.scale)});
      }
      pdp_panels.push_back({name, curve.grid, curve.mean_prediction});
      svg::Panel dep{name, {}, {}};
      for (const auto& p : shap_dependence(s.explanation, name)) {
        csv::write_row(dep_out, std::vector<std::string>{name, p.row_id, detail::fmt(p.feature_value),
                                                         detail::fmt(p.shap_value)});
        dep.x.push_back(p.feature_value);
        dep.y.push_back(p.shap_value);
      }
      dep_panels.push_back(std::move(dep));
      s.pdp.push_back(std::move(curve));
    }
    pdp_out.close();
    dep_out.close();
    const auto pdp_svg = c.path("pdp.svg");
    const auto dep_svg = c.path("dependence.svg");
    svg::panel_chart(std::string("partial dependence (") + scale_name(c.pdp_scale) + " scale)", pdp_panels, true)
        .save(pdp_svg);
    svg::panel_chart("SHAP dependence", dep_panels, false).save(dep_svg);
    written.insert(written.end(), {pdp_path, pdp_svg, dep_path, dep_svg});
  }

  auto report = report_header("explain", c);
  report["data"] = c.explain_data;
  report["rows_explained"] = sample.rows();
  report["explain_seed"] = c.explain_seed();
  report["base_value"] = s.explanation.base_value;
  report["base_value_euro"] =
      model.box_cox && in_domain(s.explanation.base_value, *model.box_cox)
          ? nlohmann::json(inverse(s.explanation.base_value, *model.box_cox))
          : nlohmann::json(nullptr);
  nlohmann::json ranking = nlohmann::json::array();
  for (const auto& fs : s.importance) ranking.push_back({{"feature", fs.feature}, {"mean_abs_shap", fs.score}});
  report["importance"] = ranking;
  std::vector<std::string> top_names;
  for (std::size_t r = 0; r < top; ++r) top_names.push_back(s.importance[r].feature);
  report["top_features"] = top_names;
  const auto path = c.path("explain_report.json");
  write_json_file(path, report);
  written.push_back(path);
  record_stage(c, "explain", written, timer.seconds());
  return s;
}

struct PredictSummary {
  std::size_t rows = 0;
  std::size_t out_of_domain = 0;
  std::size_t missing_input = 0;
};

/// Scores a CSV with the saved model. Rows whose prediction falls outside the
/// Box-Cox image are flagged `out_of_domain`; rows with a blank model feature
/// cell are flagged `missing_input` unless the model imputes.
inline PredictSummary cmd_predict(const PipelineConfig& c) {
  c.validate();
  StageTimer timer;
  const auto model_path = c.resolved_model_path();
  detail::require_file(model_path, "run train-eval first or pass --model");
  const auto model = load_model(model_path);
  const auto input = c.resolved_predict_input();
  if (input.empty()) fail(ErrorCode::Config, "no prediction input given");
  detail::require_file(input, "prediction input");
  const auto table = read_table_csv(input, model.feature_names, false);

  std::vector<bool> missing(table.rows(), false);
  std::vector<std::size_t> complete;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    auto r = table.row(i);
    missing[i] = !model.imputer && std::any_of(r.begin(), r.end(), [](double v) { return std::isnan(v); });
    if (!missing[i]) complete.push_back(i);
  }
  const auto scored = model.predict_transformed(table.select_rows(complete));

  const auto out_path = c.resolved_predict_output();
  if (auto parent = std::filesystem::path(out_path).parent_path(); !parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  auto out = detail::open_out(out_path);
  csv::write_row(out, std::vector<std::string>{"row_id", "transformed", "euro", "status"});
  PredictSummary s;
  s.rows = table.rows();
  std::size_t next = 0;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    if (missing[i]) {
      ++s.missing_input;
      csv::write_row(out, std::vector<std::string>{table.row_ids()[i], "", "", "missing_input"});
      continue;
    }
    const double t = scored[next++];
    std::string euro;
    std::string status = "ok";
    if (!model.box_cox) {
      euro = detail::fmt(t);
    } else if (in_domain(t, *model.box_cox)) {
      euro = detail::fmt(inverse(t, *model.box_cox));
    } else {
      status = "out_of_domain";
      ++s.out_of_domain;
    }
    csv::write_row(out, std::vector<std::string>{table.row_ids()[i], detail::fmt(t), euro, status});
  }
  out.close();
  if (std::filesystem::exists(c.out_dir)) record_stage(c, "predict", {out_path}, timer.seconds());
  return s;
}

/// prepare -> select -> tune -> train-eval -> explain -> predict.
inline void run_all(const PipelineConfig& c) {
  cmd_prepare(c);
  cmd_select(c);
  cmd_tune(c);
  cmd_train_eval(c);
  cmd_explain(c);
  cmd_predict(c);
}

/// Files every complete run leaves in the output directory; only
/// manifest.json differs between identical runs.
inline std::vector<std::string> deterministic_artifacts(const PipelineConfig& c) {
  std::vector<std::string> files{"train.csv",       "test.csv",         "boxcox.json",   "prepare_report.json",
                                 "selection.json",  "boruta_history.csv", "tune_cv.csv", "tune_best.json",
                                 "model.json",      "metrics.json",     "test_predictions.csv", "importance.csv",
                                 "importance.svg",  "beeswarm.csv",     "beeswarm.svg",  "force.json",
                                 "pdp.csv",         "pdp.svg",          "dependence.csv", "dependence.svg",
                                 "explain_report.json", "predictions.csv"};
  for (std::size_t r : c.force_rows) files.push_back("force_" + std::to_string(r) + ".svg");
  return files;
}

}  // namespace playerval::pipeline
