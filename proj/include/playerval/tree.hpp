#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "playerval/error.hpp"
#include "playerval/rng.hpp"

namespace playerval {

/// Read-only row-major matrix.
struct MatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  MatrixView() = default;
  MatrixView(std::span<const double> d, std::size_t r, std::size_t c) : data(d), rows(r), cols(c) {
    if (d.size() != r * c) fail(ErrorCode::ShapeMismatch, "matrix buffer does not match rows x cols");
  }

  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return data.subspan(i * cols, cols); }
};

struct TreeNode {
  static constexpr int kLeaf = -1;

  int feature = kLeaf;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  // Mean training target of the rows reaching the node; the prediction at leaves.
  double value = 0.0;
  // Number of training samples (bootstrap duplicates included) reaching the node.
  double cover = 0.0;
  // SSE decrease achieved by this node's split; 0 at leaves.
  double gain = 0.0;

  bool is_leaf() const { return feature == kLeaf; }
  bool operator==(const TreeNode&) const = default;
};

struct TreeParams {
  int max_depth = 3;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  // Fraction of features drawn (without replacement) as split candidates at
  // each node; ignored when sqrt_features is set.
  double feature_subsample = 1.0;
  // Draw ceil(sqrt(M)) candidates per node instead.
  bool sqrt_features = false;

  void validate() const {
    if (max_depth < 0) fail(ErrorCode::Config, "max_depth must be >= 0");
    if (min_samples_leaf < 1) fail(ErrorCode::Config, "min_samples_leaf must be >= 1");
    if (min_samples_split < 2) fail(ErrorCode::Config, "min_samples_split must be >= 2");
    if (!(feature_subsample > 0.0 && feature_subsample <= 1.0)) {
      fail(ErrorCode::Config, "feature_subsample must lie in (0, 1]");
    }
  }

  std::size_t candidate_count(std::size_t n_features) const {
    const double raw = sqrt_features ? std::sqrt(static_cast<double>(n_features))
                                     : feature_subsample * static_cast<double>(n_features);
    const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-12));
    return std::clamp<std::size_t>(k, 1, n_features);
  }
};

/// Binary regression tree stored as a flat node array; node 0 is the root and
/// children always follow their parent (pre-order).
struct RegressionTree {
  std::vector<TreeNode> nodes;
  std::size_t n_features = 0;

  std::size_t leaf_index(std::span<const double> x) const {
    std::size_t id = 0;
    while (!nodes[id].is_leaf()) {
      const auto& n = nodes[id];
      id = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return id;
  }

  double predict(std::span<const double> x) const { return nodes[leaf_index(x)].value; }

  int depth() const {
    if (nodes.empty()) return 0;
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      best = std::max(best, d[i]);
      if (!nodes[i].is_leaf()) {
        d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
        d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
      }
    }
    return best;
  }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  bool operator==(const RegressionTree&) const = default;
};

/// Relative slack under which two split gains count as tied; ties go to the
/// lowest feature index, then the lowest threshold.
inline constexpr double kSplitTieTolerance = 1e-12;

/// Threshold halfway between two consecutive distinct sorted values, nudged
/// so that `lo <= t < hi` holds in floating point.
inline double midpoint_threshold(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return (mid >= hi) ? lo : mid;
}

/// Row indices of a matrix sorted by each column; shared by every tree fitted
/// on the same matrix.
struct SortedColumns {
  std::vector<std::vector<std::uint32_t>> order;

  explicit SortedColumns(MatrixView x) : order(x.cols, std::vector<std::uint32_t>(x.rows)) {
    for (std::size_t f = 0; f < x.cols; ++f) {
      auto& ord = order[f];
      std::iota(ord.begin(), ord.end(), 0u);
      std::stable_sort(ord.begin(), ord.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
    }
  }
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(MatrixView x, std::span<const double> y, std::span<const std::size_t> samples,
              const SortedColumns& sorted, const TreeParams& params, std::uint64_t seed)
      : x_(x), y_(y), samples_(samples.begin(), samples.end()), params_(params), rng_(seed) {
    const std::size_t n = samples_.size();
    const std::size_t m = x_.cols;
    // Bucket sample positions by row, then walk each feature's presorted rows.
    std::vector<std::uint32_t> first(x_.rows + 1, 0);
    for (std::size_t s : samples_) ++first[s + 1];
    for (std::size_t r = 0; r < x_.rows; ++r) first[r + 1] += first[r];
    std::vector<std::uint32_t> by_row(n);
    {
      auto cursor = first;
      for (std::size_t p = 0; p < n; ++p) by_row[cursor[samples_[p]]++] = static_cast<std::uint32_t>(p);
    }
    order_.assign(m, std::vector<std::uint32_t>(n));
    for (std::size_t f = 0; f < m; ++f) {
      auto& ord = order_[f];
      std::size_t k = 0;
      for (std::uint32_t r : sorted.order[f]) {
        for (std::uint32_t q = first[r]; q < first[r + 1]; ++q) ord[k++] = by_row[q];
      }
    }
    goes_left_.assign(n, 0);
    buffer_.resize(n);
    features_.resize(m);
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  RegressionTree build() {
    tree_.n_features = x_.cols;
    tree_.nodes.reserve(64);
    grow(0, samples_.size(), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
    bool found = false;
  };

  double target_of(std::uint32_t pos) const { return y_[samples_[pos]]; }

  int grow(std::size_t begin, std::size_t end, int depth) {
    const std::size_t count = end - begin;
    // Without features no partition ever happens, so positions are begin..end.
    const auto position = [&](std::size_t i) {
      return order_.empty() ? static_cast<std::uint32_t>(i) : order_[0][i];
    };
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) sum += target_of(position(i));
    const double mean = sum / static_cast<double>(count);

    const int id = static_cast<int>(tree_.nodes.size());
    TreeNode node;
    node.value = mean;
    node.cover = static_cast<double>(count);
    tree_.nodes.push_back(node);

    const bool can_split = !order_.empty() && depth < params_.max_depth &&
                           count >= static_cast<std::size_t>(params_.min_samples_split) &&
                           count >= 2 * static_cast<std::size_t>(params_.min_samples_leaf);
    if (!can_split) return id;

    double node_sse = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double d = target_of(position(i)) - mean;
      node_sse += d * d;
    }
    if (!(node_sse > 0.0)) return id;

    const Split split = find_split(begin, end, mean, node_sse);
    if (!split.found) return id;

    // Route samples and stably partition every feature's sorted order.
    std::size_t n_left = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t pos = order_[split.feature][i];
      const bool left = x_(samples_[pos], split.feature) <= split.threshold;
      goes_left_[pos] = left;
      n_left += left;
    }
    for (auto& ord : order_) {
      std::size_t l = begin;
      std::size_t r = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint32_t pos = ord[i];
        if (goes_left_[pos]) {
          ord[l++] = pos;
        } else {
          buffer_[r++] = pos;
        }
      }
      std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(r),
                ord.begin() + static_cast<std::ptrdiff_t>(l));
    }

    tree_.nodes[static_cast<std::size_t>(id)].feature = static_cast<int>(split.feature);
    tree_.nodes[static_cast<std::size_t>(id)].threshold = split.threshold;
    tree_.nodes[static_cast<std::size_t>(id)].gain = split.gain;
    const int left = grow(begin, begin + n_left, depth + 1);
    const int right = grow(begin + n_left, end, depth + 1);
    tree_.nodes[static_cast<std::size_t>(id)].left = left;
    tree_.nodes[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  std::span<const std::size_t> draw_candidates() {
    const std::size_t m = x_.cols;
    const std::size_t k = params_.candidate_count(m);
    if (k >= m) {
      std::iota(features_.begin(), features_.end(), std::size_t{0});
      return {features_.data(), m};
    }
    std::iota(features_.begin(), features_.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + uniform_index(rng_, m - i);
      std::swap(features_[i], features_[j]);
    }
    std::sort(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(k));
    return {features_.data(), k};
  }

  Split find_split(std::size_t begin, std::size_t end, double mean, double node_sse) {
    const std::size_t count = end - begin;
    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    const double slack = kSplitTieTolerance * node_sse;
    Split best;
    best.gain = slack;  // a split must beat "no split" by more than the tie slack
    for (std::size_t f : draw_candidates()) {
      const auto& ord = order_[f];
      double left_sum = 0.0;  // of centred targets
      for (std::size_t i = begin; i + 1 < end; ++i) {
        left_sum += target_of(ord[i]) - mean;
        const std::size_t n_left = i + 1 - begin;
        const std::size_t n_right = count - n_left;
        if (n_left < min_leaf) continue;
        if (n_right < min_leaf) break;
        const double lo = x_(samples_[ord[i]], f);
        const double hi = x_(samples_[ord[i + 1]], f);
        if (!(lo < hi)) continue;
        // With centred targets the right sum is -left_sum, so the SSE decrease
        // is left_sum^2 * n / (n_left * n_right).
        const double gain = left_sum * left_sum * static_cast<double>(count) /
                            (static_cast<double>(n_left) * static_cast<double>(n_right));
        if (gain > best.gain + slack) {
          best.feature = f;
          best.threshold = midpoint_threshold(lo, hi);
          best.gain = gain;
          best.found = true;
        }
      }
    }
    return best;
  }

  MatrixView x_;
  std::span<const double> y_;
  std::vector<std::size_t> samples_;
  TreeParams params_;
  Rng rng_;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> buffer_;
  std::vector<std::size_t> features_;
  RegressionTree tree_;
};

}  // namespace detail

inline void check_tree_inputs(MatrixView x, std::span<const double> y, std::span<const std::size_t> samples,
                              const TreeParams& params) {
  params.validate();
  if (x.rows != y.size()) fail(ErrorCode::ShapeMismatch, "X rows and y length differ");
  if (samples.empty()) fail(ErrorCode::ShapeMismatch, "cannot fit a tree on zero rows");
  for (std::size_t s : samples) {
    if (s >= x.rows) fail(ErrorCode::ShapeMismatch, "sample index out of range");
  }
}

/// Fits a CART regression tree on the rows listed in `samples` (duplicates
/// allowed, as produced by bootstrapping), reusing a column presort of `x`.
inline RegressionTree fit_tree(MatrixView x, std::span<const double> y, std::span<const std::size_t> samples,
                               const SortedColumns& sorted, const TreeParams& params, std::uint64_t seed) {
  check_tree_inputs(x, y, samples, params);
  return detail::TreeBuilder(x, y, samples, sorted, params, seed).build();
}

/// Fits a CART regression tree on all rows: greedy SSE-decrease splits at
/// midpoints between consecutive distinct values, `x <= threshold` routed left.
inline RegressionTree fit_tree(MatrixView x, std::span<const double> y, const TreeParams& params,
                               std::uint64_t seed = 0) {
  std::vector<std::size_t> all(x.rows);
  std::iota(all.begin(), all.end(), std::size_t{0});
  check_tree_inputs(x, y, all, params);
  return detail::TreeBuilder(x, y, all, SortedColumns(x), params, seed).build();
}

inline double predict_tree(const RegressionTree& tree, std::span<const double> x) { return tree.predict(x); }

}  // namespace playerval
