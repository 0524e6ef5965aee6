#pragma once

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "playerval/pipeline.hpp"
#include "playerval/synth.hpp"

namespace playerval::cli {

struct SynthOptions {
  std::string kind = "players";
  std::size_t rows = 1000;
  double goalkeeper_share = 0.11;
  double missing_share = 0.005;
  std::string output;
};

// Raw option values; strings are parsed into enums after CLI11 is done so
// config-file values go through the same validation as flags.
struct RawOptions {
  std::string schema = "outfield";
  std::string family = "gbdt";
  std::string scale = "euro";
  std::string criterion = "r2";
  std::string importance = "shap";
  std::string pdp_scale = "transformed";
  std::optional<double> learning_rate;
  std::optional<int> n_estimators;
  std::optional<int> max_depth;
  std::optional<int> min_samples_split;
  std::optional<int> min_samples_leaf;
  std::optional<double> feature_subsample;
  std::map<std::string, std::vector<double>> grid;
  int boruta_trees = 0;
  int boruta_depth = 0;
};

inline void apply_raw(const RawOptions& raw, pipeline::PipelineConfig& c) {
  c.schema = pipeline::parse_schema(raw.schema);
  c.family = parse_family(raw.family);
  c.scale = pipeline::parse_scale(raw.scale);
  c.criterion = pipeline::parse_criterion(raw.criterion);
  c.boruta.importance_source = pipeline::parse_importance(raw.importance);
  c.pdp_scale = pipeline::parse_scale(raw.pdp_scale);
  if (raw.boruta_trees > 0) c.boruta.forest.n_estimators = raw.boruta_trees;
  if (raw.boruta_depth > 0) c.boruta.forest.tree.max_depth = raw.boruta_depth;
  TreeParams& tree = c.family == ModelFamily::Gbdt ? c.gbdt.tree : c.forest.tree;
  if (raw.learning_rate) c.gbdt.learning_rate = *raw.learning_rate;
  if (raw.n_estimators) (c.family == ModelFamily::Gbdt ? c.gbdt.n_estimators : c.forest.n_estimators) = *raw.n_estimators;
  if (raw.max_depth) tree.max_depth = *raw.max_depth;
  if (raw.min_samples_split) tree.min_samples_split = *raw.min_samples_split;
  if (raw.min_samples_leaf) tree.min_samples_leaf = *raw.min_samples_leaf;
  if (raw.feature_subsample) {
    tree.feature_subsample = *raw.feature_subsample;
    tree.sqrt_features = false;
  }
  c.grid.clear();
  for (const auto& [name, values] : raw.grid) {
    if (!values.empty()) c.grid[name] = values;
  }
}

/// Registers every pipeline option on `app`. Options are global so a single
/// INI file (`--config`) can hold all of them; flags win over file values,
/// file values win over PLAYERVAL_OUT.
inline void add_options(CLI::App& app, pipeline::PipelineConfig& c, RawOptions& raw, SynthOptions& synth) {
  app.set_config("--config", "", "INI-style key = value file; keys are the long option names without dashes prefix");
  app.fallthrough();

  app.add_option("--input", c.input, "player CSV (prepare) and default prediction input");
  app.add_option("--out-dir", c.out_dir, "output directory")->envname("PLAYERVAL_OUT");
  app.add_option("--model", c.model_path, "model artifact path (default <out-dir>/model.json)");
  app.add_option("--predict-input", c.predict_input, "CSV to score (default --input)");
  app.add_option("--output", c.predict_output, "predictions CSV (predict) or corpus CSV (synth)");

  app.add_option("--schema", raw.schema, "outfield | goalkeeper | generic");
  app.add_option("--value-cap", c.value_cap, "drop rows whose value exceeds this");
  app.add_option("--test-fraction", c.test_fraction);
  app.add_option("--seed", c.seed, "master seed");
  app.add_flag("--impute,!--no-impute", c.impute, "mean-impute missing cells (fitted on training data)");
  app.add_flag("--box-cox,!--no-box-cox", c.box_cox, "Box-Cox transform the target");
  app.add_flag("--auto-shift,!--no-auto-shift", c.auto_shift, "shift non-positive targets before Box-Cox");

  app.add_option("--boruta-max-iterations", c.boruta.max_iterations);
  app.add_option("--boruta-alpha", c.boruta.alpha);
  app.add_option("--boruta-importance", raw.importance, "shap | gain");
  app.add_option("--boruta-trees", raw.boruta_trees, "trees in the Boruta forest");
  app.add_option("--boruta-max-depth", raw.boruta_depth, "depth of the Boruta forest's trees");
  app.add_option("--boruta-shap-rows", c.boruta.shap_rows, "rows explained per Boruta iteration (0 = all)");
  app.add_option("--boruta-min-iterations", c.boruta.min_iterations);
  app.add_flag("--include-tentative,!--no-include-tentative", c.include_tentative,
               "use tentative features downstream");

  app.add_option("--family", raw.family, "gbdt | random_forest");
  app.add_option("--learning-rate", raw.learning_rate);
  app.add_option("--n-estimators", raw.n_estimators);
  app.add_option("--max-depth", raw.max_depth);
  app.add_option("--min-samples-split", raw.min_samples_split);
  app.add_option("--min-samples-leaf", raw.min_samples_leaf);
  app.add_option("--feature-subsample", raw.feature_subsample);
  for (const char* axis : {"learning_rate", "n_estimators", "max_depth", "min_samples_split", "min_samples_leaf",
                           "feature_subsample"}) {
    std::string flag = std::string("--grid-") + axis;
    std::replace(flag.begin(), flag.end(), '_', '-');
    app.add_option(flag, raw.grid[axis], "comma-separated grid values")->delimiter(',');
  }
  app.add_option("--k", c.k, "cross-validation folds");
  app.add_option("--scale", raw.scale, "metric scale for model selection: euro | transformed");
  app.add_option("--criterion", raw.criterion, "r2 | rmse");

  app.add_option("--explain-data", c.explain_data, "train | test");
  app.add_option("--explain-rows", c.explain_rows, "rows sampled for SHAP and PDP (0 = all)");
  app.add_option("--top-k", c.top_k, "features shown in plots");
  app.add_option("--pdp-grid", c.pdp_grid);
  app.add_option("--pdp-scale", raw.pdp_scale, "transformed | euro");
  app.add_option("--force-rows", c.force_rows, "row indices for force plots")->delimiter(',');

  app.add_option("--kind", synth.kind, "synth corpus: players | friedman");
  app.add_option("--rows", synth.rows, "synth row count");
  app.add_option("--goalkeeper-share", synth.goalkeeper_share);
  app.add_option("--missing-share", synth.missing_share);
}

inline std::string synth_output(const pipeline::PipelineConfig& c, const SynthOptions& s) {
  if (!s.output.empty()) return s.output;
  if (!c.predict_output.empty()) return c.predict_output;
  return c.path(s.kind == "friedman" ? "friedman.csv" : "players.csv");
}

/// Writes a synthetic corpus: the player schema, or Friedman #1 as a generic
/// table with the target offset by +10 so it stays positive.
inline std::string run_synth(const pipeline::PipelineConfig& c, const SynthOptions& s) {
  const auto path = synth_output(c, s);
  if (auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  if (s.kind == "players") {
    synth::write_player_corpus(path, {s.rows, c.seed, s.goalkeeper_share, s.missing_share});
  } else if (s.kind == "friedman") {
    auto t = synth::friedman1(s.rows, c.seed);
    auto y = t.target();
    for (double& v : y) v += 10.0;
    write_table_csv(path, t.with_target(std::move(y)));
  } else {
    fail(ErrorCode::Config, "unknown synth kind '" + s.kind + "' (expected players or friedman)");
  }
  return path;
}

/// Entry point shared by the executable and the tests. Returns the process
/// exit status: 0 ok, 1 user/config error, 2 data error, 3 internal error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Player market value pipeline: prepare, select, tune, train-eval, explain, predict, synth"};
  app.name("playerval");
  pipeline::PipelineConfig c;
  RawOptions raw;
  SynthOptions synth_opts;
  add_options(app, c, raw, synth_opts);
  synth_opts.output.clear();
  auto* prepare = app.add_subcommand("prepare", "clean, cap and split the input; fit Box-Cox on train");
  auto* select = app.add_subcommand("select", "Boruta feature selection on the training table");
  auto* tune = app.add_subcommand("tune", "grid search with k-fold cross-validation");
  auto* train_eval = app.add_subcommand("train-eval", "cross-validate, fit, score the held-out test table");
  auto* explain = app.add_subcommand("explain", "SHAP importance, beeswarm, force, PDP and dependence exports");
  auto* predict = app.add_subcommand("predict", "score a CSV with a saved model");
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus");
  auto* run_all = app.add_subcommand("run", "prepare, select, tune, train-eval, explain and predict");
  app.require_subcommand(1);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? 0 : 1;
    }
    apply_raw(raw, c);

    if (synth->parsed()) {
      synth_opts.output = c.predict_output;
      const auto path = run_synth(c, synth_opts);
      out << "synth: wrote " << synth_opts.rows << " rows to " << path << '\n';
    } else if (prepare->parsed()) {
      const auto s = pipeline::cmd_prepare(c);
      out << "prepare: " << s.rows_read << " rows read, " << s.rows_after_cleaning << " after cleaning, "
          << s.rows_capped << " above cap; train " << s.n_train << ", test " << s.n_test;
      if (s.box_cox) out << "; lambda " << csv::format_double(s.box_cox->lambda);
      out << '\n';
    } else if (select->parsed()) {
      const auto v = pipeline::cmd_select(c);
      out << "select: " << v.accepted().size() << " accepted, " << v.rejected().size() << " rejected, "
          << v.tentative().size() << " tentative after " << v.iterations_run << " iterations\n";
    } else if (tune->parsed()) {
      const auto r = pipeline::cmd_tune(c);
      const auto& cv = r.points[r.best_index].cv;
      out << "tune: " << r.points.size() << " grid points; best #" << r.best_index << " mean R2 "
          << csv::format_double(cv.mean_r_squared) << ", mean RMSE " << csv::format_double(cv.mean_rmse) << " ("
          << scale_name(cv.scale) << ")\n";
    } else if (train_eval->parsed()) {
      const auto s = pipeline::cmd_train_eval(c);
      out << "train-eval: CV R2 " << csv::format_double(s.cv.mean_r_squared) << "; test R2 transformed "
          << csv::format_double(s.test_transformed.r_squared) << ", euro " << csv::format_double(s.test_euro.r_squared)
          << "; test RMSE euro " << csv::format_double(s.test_euro.rmse) << '\n';
    } else if (explain->parsed()) {
      const auto s = pipeline::cmd_explain(c);
      out << "explain: " << s.explanation.n_rows << " rows, base value "
          << csv::format_double(s.explanation.base_value) << "; top feature "
          << (s.importance.empty() ? std::string("-") : s.importance.front().feature) << '\n';
    } else if (predict->parsed()) {
      const auto s = pipeline::cmd_predict(c);
      out << "predict: " << s.rows << " rows, " << s.out_of_domain << " out of domain, " << s.missing_input
          << " with missing input -> " << c.resolved_predict_output() << '\n';
    } else if (run_all->parsed()) {
      pipeline::run_all(c);
      out << "run: all stages complete in " << c.out_dir << '\n';
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_status(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace playerval::cli
