#include "tiws/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "tiws/parallel.hpp"

namespace tiws {
namespace {

constexpr double kEulerGamma = 0.5772156649;

// Path lengths are accumulated as integers in units of 2^-64.
constexpr double kFixedScale = 0x1.0p64;
constexpr double kMaxPathLength = 0x1.0p40;

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& data, std::size_t depth_limit, Rng& rng)
      : data_(data), depth_limit_(depth_limit), rng_(rng), rows_(data.rows()) {
    std::iota(rows_.begin(), rows_.end(), std::size_t{0});
    nodes_.reserve(2 * data.rows() - 1);
  }

  std::vector<ITreeNode> build() && {
    grow(0, rows_.size(), 0);
    return std::move(nodes_);
  }

 private:
  std::uint32_t grow(std::size_t begin, std::size_t end, std::size_t depth) {
    const auto index = static_cast<std::uint32_t>(nodes_.size());
    const std::size_t count = end - begin;
    nodes_.push_back(ITreeNode::leaf(static_cast<std::uint32_t>(count)));
    if (count <= 1 || depth >= depth_limit_) return index;

    // Features that still vary among this node's points.
    candidates_.clear();
    lows_.assign(data_.cols(), std::numeric_limits<double>::infinity());
    highs_.assign(data_.cols(), -std::numeric_limits<double>::infinity());
    for (std::size_t k = begin; k < end; ++k) {
      const auto x = data_.row(rows_[k]);
      for (std::size_t j = 0; j < x.size(); ++j) {
        lows_[j] = std::min(lows_[j], x[j]);
        highs_[j] = std::max(highs_[j], x[j]);
      }
    }
    for (std::size_t j = 0; j < data_.cols(); ++j) {
      if (highs_[j] > lows_[j]) candidates_.push_back(j);
    }
    if (candidates_.empty()) return index;

    const std::size_t feature = candidates_[rng_.below(candidates_.size())];
    const double lo = lows_[feature];
    const double hi = highs_[feature];
    double threshold;
    do {
      threshold = rng_.uniform(lo, hi);
    } while (!(threshold > lo && threshold < hi));

    const auto middle = std::partition(
        rows_.begin() + static_cast<std::ptrdiff_t>(begin),
        rows_.begin() + static_cast<std::ptrdiff_t>(end),
        [&](std::size_t r) { return data_(r, feature) < threshold; });
    const auto split = static_cast<std::size_t>(middle - rows_.begin());

    const std::uint32_t left = grow(begin, split, depth + 1);
    const std::uint32_t right = grow(split, end, depth + 1);
    nodes_[index] = ITreeNode::split(static_cast<std::uint32_t>(feature),
                                     threshold, left, right);
    return index;
  }

  const Matrix& data_;
  std::size_t depth_limit_;
  Rng& rng_;
  std::vector<std::size_t> rows_;
  std::vector<ITreeNode> nodes_;
  std::vector<std::size_t> candidates_;
  std::vector<double> lows_;
  std::vector<double> highs_;
};

void require_finite(const Matrix& data) {
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto x = data.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (!std::isfinite(x[j])) {
        throw std::invalid_argument("non-finite value at row " + std::to_string(i) +
                                    ", column " + std::to_string(j));
      }
    }
  }
}

}  // namespace

void ForestParams::validate() const {
  if (n_trees < 1) throw std::invalid_argument("n_trees must be at least 1");
  if (subsample_size < 2) {
    throw std::invalid_argument("subsample_size must be at least 2");
  }
  if (max_depth && *max_depth == 0) {
    throw std::invalid_argument("max_depth must be positive");
  }
}

std::size_t auto_depth_limit(std::size_t psi) {
  std::size_t depth = 0;
  while (depth < 64 && (std::size_t{1} << depth) < psi) ++depth;
  return depth;
}

double c_factor(std::uint64_t n) {
  if (n <= 1) return 0.0;
  const double m = static_cast<double>(n);
  return 2.0 * (std::log(m - 1.0) + kEulerGamma) - 2.0 * (m - 1.0) / m;
}

ITree::ITree(std::vector<ITreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw std::invalid_argument("tree has no nodes");
  const std::size_t n = nodes_.size();
  std::vector<std::uint8_t> referenced(n, 0);
  for (const auto& node : nodes_) {
    if (node.is_leaf()) continue;
    if (node.left >= n || node.right >= n) {
      throw std::invalid_argument("child index out of range");
    }
    if (!std::isfinite(node.threshold)) {
      throw std::invalid_argument("non-finite split threshold");
    }
    for (const std::uint32_t child : {node.left, node.right}) {
      if (child == 0 || referenced[child]) {
        throw std::invalid_argument("node referenced more than once");
      }
      referenced[child] = 1;
    }
  }
  // With single references and an unreferenced root, the nodes form a tree
  // exactly when all of them are reachable from the root.
  std::vector<std::uint32_t> stack{0};
  std::size_t reached = 0;
  while (!stack.empty()) {
    const auto& node = nodes_[stack.back()];
    stack.pop_back();
    if (++reached > n) break;
    if (!node.is_leaf()) {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  if (reached != n) throw std::invalid_argument("nodes do not form a tree");

  leaf_adjustment_.resize(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = nodes_[i];
    if (node.is_leaf()) {
      leaf_adjustment_[i] = c_factor(node.size);
      trained_size_ += node.size;
    } else {
      min_features_ = std::max<std::size_t>(min_features_, node.feature + std::size_t{1});
    }
  }
}

std::size_t ITree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const auto& n) { return n.is_leaf(); }));
}

void ITree::check_width(std::span<const double> x) const {
  if (x.size() < min_features_) {
    throw std::invalid_argument("dimensionality mismatch: tree splits on feature " +
                                std::to_string(min_features_ - 1) + " but input has " +
                                std::to_string(x.size()) + " features");
  }
}

std::size_t ITree::leaf_for(std::span<const double> x) const {
  check_width(x);
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const auto& node = nodes_[i];
    i = x[node.feature] < node.threshold ? node.left : node.right;
  }
  return i;
}

double ITree::path_length(std::span<const double> x) const {
  check_width(x);
  std::size_t i = 0;
  std::size_t edges = 0;
  while (!nodes_[i].is_leaf()) {
    const auto& node = nodes_[i];
    i = x[node.feature] < node.threshold ? node.left : node.right;
    ++edges;
  }
  return static_cast<double>(edges) + leaf_adjustment_[i];
}

ITree build_tree(const Matrix& subsample, const ForestParams& params, Rng& rng) {
  if (subsample.rows() == 0) throw std::invalid_argument("build_tree: empty subsample");
  const std::size_t depth_limit =
      params.max_depth ? *params.max_depth : auto_depth_limit(subsample.rows());
  return ITree(TreeBuilder(subsample, depth_limit, rng).build());
}

void PathLengthSum::add(double path_length) {
  if (!(path_length >= 0.0 && path_length < kMaxPathLength)) {
    throw std::domain_error("path length outside accumulator range");
  }
  acc_ += static_cast<__int128>(path_length * kFixedScale);
}

double PathLengthSum::total() const {
  return static_cast<double>(acc_) / kFixedScale;
}

AnomalyScore score_from_mean_path(double mean_path, double normalizer) {
  return {std::exp2(-mean_path / normalizer)};
}

int predict_label(AnomalyScore score, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
  return score.value > tau ? 1 : 0;
}

IForest::IForest(std::vector<ITree> trees, std::size_t subsample_size,
                 std::size_t n_features)
    : trees_(std::move(trees)),
      subsample_size_(subsample_size),
      n_features_(n_features),
      normalizer_(c_factor(subsample_size)) {
  if (trees_.empty()) throw std::invalid_argument("forest has no trees");
  if (subsample_size_ < 2) throw std::invalid_argument("forest subsample size below 2");
  for (const auto& tree : trees_) {
    if (n_features_ != 0 && tree.min_features() > n_features_) {
      throw std::invalid_argument("tree uses a feature beyond the forest width");
    }
  }
}

std::size_t IForest::resolve_prefix(std::optional<std::size_t> prefix_len) const {
  if (!prefix_len) return trees_.size();
  if (*prefix_len < 1 || *prefix_len > trees_.size()) {
    throw std::out_of_range("prefix length " + std::to_string(*prefix_len) +
                            " outside [1, " + std::to_string(trees_.size()) + "]");
  }
  return *prefix_len;
}

void IForest::check_input(std::span<const double> x) const {
  if (n_features_ != 0 && x.size() != n_features_) {
    throw std::invalid_argument("dimensionality mismatch: expected " +
                                std::to_string(n_features_) + " features, got " +
                                std::to_string(x.size()));
  }
}

double IForest::mean_path_length(std::span<const double> x,
                                 std::optional<std::size_t> prefix_len) const {
  const std::size_t k = resolve_prefix(prefix_len);
  check_input(x);
  PathLengthSum sum;
  for (std::size_t i = 0; i < k; ++i) sum.add(trees_[i].path_length(x));
  return sum.mean(k);
}

AnomalyScore IForest::score(std::span<const double> x,
                            std::optional<std::size_t> prefix_len) const {
  return score_from_mean_path(mean_path_length(x, prefix_len), normalizer_);
}

std::vector<double> IForest::score_all(const Matrix& data,
                                       std::optional<std::size_t> prefix_len,
                                       std::size_t threads) const {
  const std::size_t k = resolve_prefix(prefix_len);
  std::vector<double> out(data.rows());
  parallel_for(data.rows(), threads,
               [&](std::size_t i) { out[i] = score(data.row(i), k).value; });
  return out;
}

IForest IForest::subforest(std::span<const std::size_t> tree_indices) const {
  std::vector<ITree> picked;
  picked.reserve(tree_indices.size());
  for (const std::size_t i : tree_indices) {
    if (i >= trees_.size()) throw std::out_of_range("subforest: tree index out of range");
    picked.push_back(trees_[i]);
  }
  return IForest(std::move(picked), subsample_size_, n_features_);
}

IForest fit_forest(const Matrix& data, const ForestParams& params, std::size_t threads) {
  params.validate();
  if (data.rows() < 2) throw std::invalid_argument("fit_forest: need at least 2 rows");
  if (data.cols() < 1) throw std::invalid_argument("fit_forest: need at least 1 feature");
  if (data.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("fit_forest: too many features");
  }
  require_finite(data);

  const std::size_t psi = std::min(params.subsample_size, data.rows());
  std::vector<std::optional<ITree>> grown(params.n_trees);
  parallel_for(params.n_trees, threads, [&](std::size_t i) {
    Rng rng(derive_seed(params.seed, i));
    const auto rows = rng.sample_without_replacement(data.rows(), psi);
    grown[i].emplace(build_tree(data.select_rows(rows), params, rng));
  });

  std::vector<ITree> trees;
  trees.reserve(grown.size());
  for (auto& t : grown) trees.push_back(std::move(*t));
  return IForest(std::move(trees), psi, data.cols());
}

Matrix path_length_table(const IForest& forest, const Matrix& data, std::size_t threads) {
  if (forest.n_features() != 0 && data.cols() != forest.n_features()) {
    throw std::invalid_argument("dimensionality mismatch: expected " +
                                std::to_string(forest.n_features()) + " features, got " +
                                std::to_string(data.cols()));
  }
  Matrix table(data.rows(), forest.size());
  parallel_for(forest.size(), threads, [&](std::size_t t) {
    const ITree& tree = forest.trees()[t];
    for (std::size_t i = 0; i < data.rows(); ++i) table(i, t) = tree.path_length(data.row(i));
  });
  return table;
}

}  // namespace tiws
