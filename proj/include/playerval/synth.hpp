#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "playerval/csv.hpp"
#include "playerval/dataset.hpp"
#include "playerval/error.hpp"
#include "playerval/rng.hpp"

namespace playerval::synth {

inline std::vector<std::string> numbered(const std::string& prefix, std::size_t count) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

/// Friedman #1: y = 10 sin(pi x0 x1) + 20 (x2 - 0.5)^2 + 10 x3 + 5 x4 + N(0, noise_sd^2)
/// with x ~ U(0, 1)^n_features; features 5.. carry no signal.
inline FeatureTable friedman1(std::size_t n, std::uint64_t seed, std::size_t n_features = 10,
                              double noise_sd = 1.0) {
  if (n_features < 5) fail(ErrorCode::Config, "Friedman #1 needs at least 5 features");
  Rng rng(seed);
  std::vector<double> matrix(n * n_features);
  std::vector<double> target(n);
  const double pi = 3.14159265358979323846;
  for (std::size_t i = 0; i < n; ++i) {
    double* x = matrix.data() + i * n_features;
    for (std::size_t j = 0; j < n_features; ++j) x[j] = uniform_real(rng);
    target[i] = 10.0 * std::sin(pi * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] + 5.0 * x[4] +
                noise_sd * standard_normal(rng);
  }
  return {numbered("x", n_features), std::move(matrix), std::move(target), numbered("r", n)};
}

/// Feature 0 equals the standard-normal target plus N(0, noise_sd^2); the
/// remaining features are independent standard normals.
inline FeatureTable planted_copy(std::size_t n, std::size_t n_noise, std::uint64_t seed, double noise_sd = 0.01) {
  Rng rng(seed);
  const std::size_t m = n_noise + 1;
  std::vector<double> matrix(n * m);
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = standard_normal(rng);
    matrix[i * m] = target[i] + noise_sd * standard_normal(rng);
    for (std::size_t j = 1; j < m; ++j) matrix[i * m + j] = standard_normal(rng);
  }
  return {numbered("x", m), std::move(matrix), std::move(target), numbered("r", n)};
}

/// Features and target all independent standard normals.
inline FeatureTable pure_noise(std::size_t n, std::size_t n_features, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> matrix(n * n_features);
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n_features; ++j) matrix[i * n_features + j] = standard_normal(rng);
    target[i] = standard_normal(rng);
  }
  return {numbered("x", n_features), std::move(matrix), std::move(target), numbered("r", n)};
}

struct PlayerCorpusOptions {
  std::size_t rows = 1000;
  std::uint64_t seed = 1;
  double goalkeeper_share = 0.11;
  // Share of outfield rows with one blank attribute cell.
  double missing_share = 0.005;
};

namespace detail {

// Outfield value weights. Attributes absent from this list carry no signal.
struct Weight {
  const char* name;
  double weight;
};

inline constexpr std::array<Weight, 22> kValueWeights = {{
    {"Ball_Control", 1.0},    {"Reactions", 0.95},      {"Short_Passing", 0.8},   {"Sprint_Speed", 0.7},
    {"Finishing", 0.65},      {"Interceptions", 0.6},   {"Dribbling", 0.55},      {"Sliding_Tackle", 0.5},
    {"Acceleration", 0.45},   {"Heading_Accuracy", 0.25}, {"Defensive_Awareness", 0.25}, {"Vision", 0.25},
    {"Volleys", 0.25},        {"Long_Passing", 0.25},   {"Positioning", 0.25},    {"Standing_Tackle", 0.25},
    {"FK_Accuracy", 0.25},    {"Penalties", 0.25},      {"Stamina", 0.25},        {"Crossing", 0.25},
    {"Strength", 0.25},       {"Shot_Power", 0.25},
}};

inline int skill_score(double z, double mean, double sd) {
  return static_cast<int>(std::clamp(std::lround(mean + sd * z), 1L, 99L));
}

}  // namespace detail

/// Writes a schema-complete player CSV: a latent quality factor drives 22
/// correlated attributes and a log-normal market value (about 3% of players
/// above 25M); the other 7 attributes are pure noise. Goalkeepers carry all
/// five GK_* columns; outfield rows leave them blank.
inline void write_player_corpus(const std::string& path, const PlayerCorpusOptions& options) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
  const auto columns = schema::full_columns();
  csv::write_row(out, columns);

  std::array<double, 29> weight{};
  for (const auto& w : detail::kValueWeights) {
    for (std::size_t a = 0; a < 29; ++a) {
      if (std::string(schema::kOutfieldAttributes[a]) == w.name) weight[a] = w.weight;
    }
  }
  const double rho = 0.6;
  const double idio = std::sqrt(1.0 - rho * rho);
  double sum_w = 0.0;
  double sum_w2 = 0.0;
  for (double w : weight) {
    sum_w += w;
    sum_w2 += w * w;
  }
  const double signal_sd = std::sqrt(rho * rho * sum_w * sum_w + idio * idio * sum_w2);
  const double gk_signal_sd = std::sqrt(rho * rho * 25.0 + idio * idio * 5.0);

  Rng rng(options.seed);
  std::vector<std::string> fields(columns.size());
  for (std::size_t i = 0; i < options.rows; ++i) {
    const double quality = standard_normal(rng);
    const bool goalkeeper = uniform_real(rng) < options.goalkeeper_share;
    std::array<int, 29> attrs{};
    std::array<int, 5> gk{};
    double signal = 0.0;
    for (std::size_t a = 0; a < 29; ++a) {
      const double z = weight[a] > 0.0 ? rho * quality + idio * standard_normal(rng) : standard_normal(rng);
      if (!goalkeeper) signal += weight[a] * z;
      attrs[a] = goalkeeper ? detail::skill_score(z, 35.0, 9.0) : detail::skill_score(z, 62.0, 11.0);
    }
    if (goalkeeper) {
      for (std::size_t a = 0; a < 5; ++a) {
        const double z = rho * quality + idio * standard_normal(rng);
        signal += z;
        gk[a] = detail::skill_score(z, 64.0, 10.0);
      }
    }
    const double standardized = signal / (goalkeeper ? gk_signal_sd : signal_sd);
    const double log10_value = 6.0 + 0.68 * standardized + 0.30 * standard_normal(rng);
    const double raw = std::clamp(std::pow(10.0, log10_value), 15'000.0, 190'000'000.0);
    const auto value = static_cast<long long>(std::llround(raw / 1000.0) * 1000);
    const int overall = detail::skill_score(quality, 66.0, 7.0);
    const int potential = std::min(99, overall + static_cast<int>(uniform_index(rng, 11)));
    const auto wage = static_cast<long long>(std::llround(static_cast<double>(value) / 250.0 / 100.0) * 100);

    const bool blank_cell = !goalkeeper && uniform_real(rng) < options.missing_share;
    const std::size_t blank_attr = uniform_index(rng, 29);

    char name[32];
    std::snprintf(name, sizeof(name), "Player %05zu", i + 1);
    std::size_t c = 0;
    fields[c++] = name;
    fields[c++] = std::to_string(overall);
    fields[c++] = std::to_string(potential);
    fields[c++] = std::to_string(value);
    fields[c++] = std::to_string(wage);
    for (std::size_t a = 0; a < 29; ++a) {
      fields[c++] = (blank_cell && a == blank_attr) ? std::string() : std::to_string(attrs[a]);
    }
    for (std::size_t a = 0; a < 5; ++a) fields[c++] = goalkeeper ? std::to_string(gk[a]) : std::string();
    csv::write_row(out, fields);
  }
}

}  // namespace playerval::synth
