#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "playerval/csv.hpp"
#include "playerval/error.hpp"
#include "playerval/rng.hpp"

namespace playerval {

/// Column names of the player attribute extract. Skill names use the
/// underscored spelling of the source table.
namespace schema {

inline constexpr std::array<const char*, 29> kOutfieldAttributes = {
    "Crossing",      "Finishing",       "Heading_Accuracy",    "Short_Passing",   "Volleys",
    "Dribbling",     "Curve",           "FK_Accuracy",         "Long_Passing",    "Ball_Control",
    "Acceleration",  "Sprint_Speed",    "Agility",             "Reactions",       "Balance",
    "Shot_Power",    "Jumping",         "Stamina",             "Strength",        "Long_Shots",
    "Aggression",    "Interceptions",   "Positioning",         "Vision",          "Penalties",
    "Composure",     "Defensive_Awareness", "Standing_Tackle", "Sliding_Tackle",
};

// Goalkeeper columns are not named in the source table; these follow the
// Sofifa export's GK_* spelling.
inline constexpr std::array<const char*, 5> kGoalkeeperAttributes = {
    "GK_Diving", "GK_Handling", "GK_Kicking", "GK_Positioning", "GK_Reflexes",
};

inline constexpr const char* kName = "name";
inline constexpr const char* kValue = "value";
inline constexpr const char* kWage = "wage";
inline constexpr const char* kOverallRating = "overall_rating";
inline constexpr const char* kPotential = "potential";

/// Columns that must be present in a player CSV header.
inline std::vector<std::string> required_columns() {
  std::vector<std::string> cols = {kName, kValue};
  for (const char* a : kOutfieldAttributes) cols.emplace_back(a);
  return cols;
}

/// Every column the synthetic generator writes, in order.
inline std::vector<std::string> full_columns() {
  std::vector<std::string> cols = {kName, kOverallRating, kPotential, kValue, kWage};
  for (const char* a : kOutfieldAttributes) cols.emplace_back(a);
  for (const char* a : kGoalkeeperAttributes) cols.emplace_back(a);
  return cols;
}

inline std::vector<std::string> outfield_features() {
  return {kOutfieldAttributes.begin(), kOutfieldAttributes.end()};
}

inline std::vector<std::string> goalkeeper_features() {
  return {kGoalkeeperAttributes.begin(), kGoalkeeperAttributes.end()};
}

}  // namespace schema

enum class PlayerKind { Outfield, Goalkeeper };

struct PlayerRecord {
  std::string name;
  std::optional<std::int64_t> value;
  std::optional<std::int64_t> wage;
  std::optional<int> overall_rating;
  std::optional<int> potential;
  std::array<std::optional<int>, 29> outfield{};
  std::array<std::optional<int>, 5> goalkeeper{};

  bool is_goalkeeper() const {
    return std::all_of(goalkeeper.begin(), goalkeeper.end(),
                       [](const auto& v) { return v.has_value(); });
  }
};

struct PlayerRecordSet {
  std::vector<PlayerRecord> records;
  // (data row index, column name) for every cell that failed to parse or was
  // outside its valid range. Empty cells are missing but not listed here.
  std::vector<std::pair<std::size_t, std::string>> invalid_cells;

  std::size_t missing_cells() const {
    std::size_t count = 0;
    for (const auto& r : records) {
      count += !r.value.has_value();
      for (const auto& v : r.outfield) count += !v.has_value();
    }
    return count;
  }
};

/// Named-column numeric matrix (row-major) with an aligned target vector.
/// Missing cells are NaN; tables produced by the default cleaning have none.
class FeatureTable {
 public:
  FeatureTable() = default;

  FeatureTable(std::vector<std::string> feature_names, std::vector<double> matrix,
               std::vector<double> target, std::vector<std::string> row_ids)
      : feature_names_(std::move(feature_names)),
        matrix_(std::move(matrix)),
        target_(std::move(target)),
        row_ids_(std::move(row_ids)) {
    const std::size_t m = feature_names_.size();
    if (target_.size() != row_ids_.size() || matrix_.size() != target_.size() * m) {
      fail(ErrorCode::ShapeMismatch, "matrix, target and row ids disagree on row count");
    }
    std::unordered_set<std::string> seen;
    for (const auto& name : feature_names_) {
      if (!seen.insert(name).second) fail(ErrorCode::SchemaMismatch, "duplicate feature '" + name + "'");
    }
  }

  std::size_t rows() const { return target_.size(); }
  std::size_t cols() const { return feature_names_.size(); }
  bool empty() const { return target_.empty(); }

  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<double>& matrix() const { return matrix_; }
  const std::vector<double>& target() const { return target_; }
  const std::vector<std::string>& row_ids() const { return row_ids_; }

  std::span<const double> row(std::size_t i) const {
    return {matrix_.data() + i * cols(), cols()};
  }
  double at(std::size_t i, std::size_t j) const { return matrix_[i * cols() + j]; }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows());
    for (std::size_t i = 0; i < rows(); ++i) out[i] = at(i, j);
    return out;
  }

  std::optional<std::size_t> find_feature(const std::string& name) const {
    auto it = std::find(feature_names_.begin(), feature_names_.end(), name);
    if (it == feature_names_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - feature_names_.begin());
  }

  std::size_t feature_index(const std::string& name) const {
    auto idx = find_feature(name);
    if (!idx) fail(ErrorCode::UnknownFeature, "no feature named '" + name + "'");
    return *idx;
  }

  FeatureTable select_rows(std::span<const std::size_t> indices) const {
    std::vector<double> matrix;
    matrix.reserve(indices.size() * cols());
    std::vector<double> target;
    std::vector<std::string> ids;
    target.reserve(indices.size());
    ids.reserve(indices.size());
    for (std::size_t i : indices) {
      auto r = row(i);
      matrix.insert(matrix.end(), r.begin(), r.end());
      target.push_back(target_[i]);
      ids.push_back(row_ids_[i]);
    }
    return {feature_names_, std::move(matrix), std::move(target), std::move(ids)};
  }

  /// Projects onto `names`, in that order. Throws SchemaMismatch naming the
  /// first absent column.
  FeatureTable select_features(const std::vector<std::string>& names) const {
    std::vector<std::size_t> idx;
    for (const auto& n : names) {
      auto j = find_feature(n);
      if (!j) fail(ErrorCode::SchemaMismatch, "missing feature column '" + n + "'");
      idx.push_back(*j);
    }
    std::vector<double> matrix;
    matrix.reserve(rows() * idx.size());
    for (std::size_t i = 0; i < rows(); ++i) {
      for (std::size_t j : idx) matrix.push_back(at(i, j));
    }
    return {names, std::move(matrix), target_, row_ids_};
  }

  FeatureTable with_target(std::vector<double> target) const {
    return {feature_names_, matrix_, std::move(target), row_ids_};
  }

  FeatureTable with_matrix(std::vector<double> matrix) const {
    return {feature_names_, std::move(matrix), target_, row_ids_};
  }

  bool operator==(const FeatureTable& other) const {
    auto same = [](const std::vector<double>& a, const std::vector<double>& b) {
      if (a.size() != b.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i] == b[i] || (std::isnan(a[i]) && std::isnan(b[i])))) return false;
      }
      return true;
    };
    return feature_names_ == other.feature_names_ && row_ids_ == other.row_ids_ &&
           same(matrix_, other.matrix_) && same(target_, other.target_);
  }

 private:
  std::vector<std::string> feature_names_;
  std::vector<double> matrix_;
  std::vector<double> target_;
  std::vector<std::string> row_ids_;
};

struct SplitPair {
  FeatureTable train;
  FeatureTable test;
  std::uint64_t seed = 0;
};

namespace detail {

inline bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

inline std::optional<std::size_t> find_column(const std::vector<std::string>& header, std::string_view name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (iequals(header[i], name)) return i;
  }
  return std::nullopt;
}

inline std::optional<std::int64_t> parse_integer_cell(const std::string& text, bool& invalid) {
  invalid = false;
  if (csv::trim(text).empty()) return std::nullopt;
  auto v = csv::parse_double(text);
  if (!v || *v != std::floor(*v) || std::fabs(*v) > 9.0e15) {
    invalid = true;
    return std::nullopt;
  }
  return static_cast<std::int64_t>(*v);
}

}  // namespace detail

/// Reads a player attribute CSV. Every name in `required` must appear in the
/// header (case-insensitive); other known columns are read when present.
/// Unparseable numbers and skill scores outside [1, 99] become missing cells.
inline PlayerRecordSet load_csv(const std::string& path,
                                const std::vector<std::string>& required = schema::required_columns()) {
  const auto doc = csv::read_file(path);
  for (const auto& name : required) {
    if (!detail::find_column(doc.header, name)) {
      fail(ErrorCode::MissingColumn, path + ": required column '" + name + "' not in header");
    }
  }
  const auto col = [&](std::string_view name) { return detail::find_column(doc.header, name); };
  const auto name_col = col(schema::kName);
  const auto value_col = col(schema::kValue);
  const auto wage_col = col(schema::kWage);
  const auto overall_col = col(schema::kOverallRating);
  const auto potential_col = col(schema::kPotential);
  std::array<std::optional<std::size_t>, 29> outfield_cols;
  for (std::size_t a = 0; a < 29; ++a) outfield_cols[a] = col(schema::kOutfieldAttributes[a]);
  std::array<std::optional<std::size_t>, 5> gk_cols;
  for (std::size_t a = 0; a < 5; ++a) gk_cols[a] = col(schema::kGoalkeeperAttributes[a]);

  PlayerRecordSet out;
  out.records.reserve(doc.rows.size());
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    PlayerRecord rec;
    const auto read_int = [&](std::optional<std::size_t> c, const std::string& column,
                              bool is_skill) -> std::optional<std::int64_t> {
      if (!c) return std::nullopt;
      bool invalid = false;
      auto v = detail::parse_integer_cell(row[*c], invalid);
      if (v && is_skill && (*v < 1 || *v > 99)) {
        invalid = true;
        v.reset();
      }
      if (invalid) out.invalid_cells.emplace_back(r + 1, column);
      return v;
    };
    rec.name = name_col ? std::string(csv::trim(row[*name_col])) : "row" + std::to_string(r + 1);
    rec.value = read_int(value_col, schema::kValue, false);
    rec.wage = read_int(wage_col, schema::kWage, false);
    if (auto v = read_int(overall_col, schema::kOverallRating, false)) rec.overall_rating = static_cast<int>(*v);
    if (auto v = read_int(potential_col, schema::kPotential, false)) rec.potential = static_cast<int>(*v);
    for (std::size_t a = 0; a < 29; ++a) {
      if (auto v = read_int(outfield_cols[a], schema::kOutfieldAttributes[a], true)) {
        rec.outfield[a] = static_cast<int>(*v);
      }
    }
    for (std::size_t a = 0; a < 5; ++a) {
      if (auto v = read_int(gk_cols[a], schema::kGoalkeeperAttributes[a], true)) {
        rec.goalkeeper[a] = static_cast<int>(*v);
      }
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

enum class MissingPolicy {
  Drop,        // rows with any missing feature cell are removed
  KeepForImputation,  // feature cells stay NaN; rows without a target are still removed
};

/// Removes rows with a missing (NaN) cell or a missing/non-positive target.
/// Row order is preserved.
inline FeatureTable drop_incomplete_rows(const FeatureTable& table,
                                         MissingPolicy policy = MissingPolicy::Drop) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const double y = table.target()[i];
    if (!(y > 0.0)) continue;
    if (policy == MissingPolicy::Drop) {
      auto r = table.row(i);
      if (std::any_of(r.begin(), r.end(), [](double v) { return std::isnan(v); })) continue;
    }
    keep.push_back(i);
  }
  return table.select_rows(keep);
}

struct PartitionedTables {
  FeatureTable outfield;
  FeatureTable goalkeepers;
};

/// Routes goalkeepers (all five GK attributes present) to a 5-feature table
/// and everyone else to the 29-feature outfield table, then applies the
/// missing-value policy. Target is the euro market value.
inline PartitionedTables clean_and_partition(const PlayerRecordSet& records,
                                             MissingPolicy policy = MissingPolicy::Drop) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> of_matrix, gk_matrix, of_target, gk_target;
  std::vector<std::string> of_ids, gk_ids;
  for (const auto& rec : records.records) {
    const double y = rec.value ? static_cast<double>(*rec.value) : nan;
    if (rec.is_goalkeeper()) {
      for (const auto& v : rec.goalkeeper) gk_matrix.push_back(static_cast<double>(*v));
      gk_target.push_back(y);
      gk_ids.push_back(rec.name);
    } else {
      for (const auto& v : rec.outfield) of_matrix.push_back(v ? static_cast<double>(*v) : nan);
      of_target.push_back(y);
      of_ids.push_back(rec.name);
    }
  }
  PartitionedTables out{
      drop_incomplete_rows(FeatureTable(schema::outfield_features(), std::move(of_matrix),
                                        std::move(of_target), std::move(of_ids)),
                           policy),
      drop_incomplete_rows(FeatureTable(schema::goalkeeper_features(), std::move(gk_matrix),
                                        std::move(gk_target), std::move(gk_ids)),
                           policy),
  };
  if (out.outfield.empty() && out.goalkeepers.empty()) {
    fail(ErrorCode::EmptyResult, "every record was dropped during cleaning");
  }
  return out;
}

inline constexpr double kDefaultValueCap = 25'000'000.0;

/// Drops rows whose target strictly exceeds `threshold`.
inline FeatureTable cap_value(const FeatureTable& table, double threshold = kDefaultValueCap) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    if (!(table.target()[i] > threshold)) keep.push_back(i);
  }
  return table.select_rows(keep);
}

/// Seeded random train/test partition; both sides keep the input row order.
inline SplitPair train_test_split(const FeatureTable& table, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    fail(ErrorCode::Config, "test fraction must lie in (0, 1)");
  }
  const std::size_t n = table.rows();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n == 0 || n_test == 0 || n_test >= n) {
    fail(ErrorCode::DegenerateSplit, "split of " + std::to_string(n) + " rows at fraction " +
                                         csv::format_double(test_fraction) + " leaves one side empty");
  }
  Rng rng(seed);
  auto order = random_permutation(n, rng);
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {table.select_rows(train), table.select_rows(test), seed};
}

/// Column means fitted on one table and applied to others.
struct MeanImputer {
  std::vector<double> means;

  static MeanImputer fit(const FeatureTable& table) {
    MeanImputer imp;
    imp.means.assign(table.cols(), 0.0);
    for (std::size_t j = 0; j < table.cols(); ++j) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t i = 0; i < table.rows(); ++i) {
        const double v = table.at(i, j);
        if (!std::isnan(v)) {
          sum += v;
          ++count;
        }
      }
      if (count == 0) {
        fail(ErrorCode::DegenerateInput,
             "column '" + table.feature_names()[j] + "' has no observed values to impute from");
      }
      imp.means[j] = sum / static_cast<double>(count);
    }
    return imp;
  }

  FeatureTable apply(const FeatureTable& table) const {
    if (table.cols() != means.size()) fail(ErrorCode::ShapeMismatch, "imputer column count mismatch");
    auto matrix = table.matrix();
    for (std::size_t i = 0; i < matrix.size(); ++i) {
      if (std::isnan(matrix[i])) matrix[i] = means[i % means.size()];
    }
    return table.with_matrix(std::move(matrix));
  }
};

inline bool has_missing_cells(const FeatureTable& table) {
  return std::any_of(table.matrix().begin(), table.matrix().end(), [](double v) { return std::isnan(v); });
}

/// Writes `name,<features...>,value` with shortest round-trip numbers.
inline void write_table_csv(const std::string& path, const FeatureTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
  std::vector<std::string> fields;
  fields.push_back(schema::kName);
  fields.insert(fields.end(), table.feature_names().begin(), table.feature_names().end());
  fields.push_back(schema::kValue);
  csv::write_row(out, fields);
  for (std::size_t i = 0; i < table.rows(); ++i) {
    fields.clear();
    fields.push_back(table.row_ids()[i]);
    for (double v : table.row(i)) fields.push_back(csv::format_double(v));
    fields.push_back(csv::format_double(table.target()[i]));
    csv::write_row(out, fields);
  }
}

/// Reads a table written by write_table_csv, or any CSV with a `name` column,
/// the listed feature columns and (optionally) a `value` column. With an empty
/// `features` list every column other than name/value is a feature. Missing
/// or unparseable cells become NaN.
inline FeatureTable read_table_csv(const std::string& path, const std::vector<std::string>& features = {},
                                   bool require_target = true) {
  const auto doc = csv::read_file(path);
  const auto name_col = detail::find_column(doc.header, schema::kName);
  const auto value_col = detail::find_column(doc.header, schema::kValue);
  if (require_target && !value_col) fail(ErrorCode::MissingColumn, path + ": no 'value' column");
  std::vector<std::string> names = features;
  std::vector<std::size_t> cols;
  if (names.empty()) {
    for (std::size_t c = 0; c < doc.header.size(); ++c) {
      if (c == name_col || c == value_col) continue;
      names.push_back(doc.header[c]);
      cols.push_back(c);
    }
  } else {
    for (const auto& n : names) {
      auto c = detail::find_column(doc.header, n);
      if (!c) fail(ErrorCode::SchemaMismatch, path + ": missing feature column '" + n + "'");
      cols.push_back(*c);
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> matrix, target;
  std::vector<std::string> ids;
  matrix.reserve(doc.rows.size() * cols.size());
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    for (std::size_t c : cols) matrix.push_back(csv::parse_double(row[c]).value_or(nan));
    target.push_back(value_col ? csv::parse_double(row[*value_col]).value_or(nan) : nan);
    ids.push_back(name_col ? row[*name_col] : "row" + std::to_string(r + 1));
  }
  return {std::move(names), std::move(matrix), std::move(target), std::move(ids)};
}

}  // namespace playerval
