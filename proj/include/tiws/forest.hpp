#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tiws/matrix.hpp"
#include "tiws/random.hpp"

namespace tiws {

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t subsample_size = 256;
  // std::nullopt selects ceil(log2(effective subsample size)).
  std::optional<std::size_t> max_depth;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument unless n_trees >= 1, subsample_size >= 2 and
  // an explicit max_depth is positive.
  void validate() const;
};

// ceil(log2(psi)); 0 for psi <= 1.
std::size_t auto_depth_limit(std::size_t psi);

// Average path length of an unsuccessful BST search over n points:
// 2 H(n-1) - 2 (n-1) / n with H(i) ~ ln(i) + Euler's constant, and
// c(0) = c(1) = 0.
double c_factor(std::uint64_t n);

struct ITreeNode {
  enum class Kind : std::uint8_t { kSplit = 0, kLeaf = 1 };

  Kind kind = Kind::kLeaf;
  std::uint32_t feature = 0;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  // Training points that reached the leaf.
  std::uint32_t size = 0;

  static ITreeNode split(std::uint32_t feature, double threshold,
                         std::uint32_t left, std::uint32_t right) {
    return {Kind::kSplit, feature, threshold, left, right, 0};
  }
  static ITreeNode leaf(std::uint32_t size) {
    return {Kind::kLeaf, 0, 0.0, 0, 0, size};
  }

  bool is_leaf() const { return kind == Kind::kLeaf; }
  bool operator==(const ITreeNode&) const = default;
};

// One isolation tree stored as a flat node array rooted at index 0. Points
// with x[feature] < threshold go left.
class ITree {
 public:
  // Validates that `nodes` form a binary tree rooted at 0: child indices in
  // range, every non-root node referenced exactly once, all nodes reachable,
  // finite thresholds. Throws std::invalid_argument otherwise.
  explicit ITree(std::vector<ITreeNode> nodes);

  const std::vector<ITreeNode>& nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t leaf_count() const;
  // Sum of leaf sizes.
  std::uint64_t trained_subsample_size() const { return trained_size_; }
  // Smallest input width the tree can be evaluated on.
  std::size_t min_features() const { return min_features_; }

  // Index of the leaf reached by x.
  std::size_t leaf_for(std::span<const double> x) const;
  // Edges from the root to x's leaf plus c(leaf size).
  double path_length(std::span<const double> x) const;

  bool operator==(const ITree& other) const { return nodes_ == other.nodes_; }

 private:
  void check_width(std::span<const double> x) const;

  std::vector<ITreeNode> nodes_;
  std::vector<double> leaf_adjustment_;
  std::uint64_t trained_size_ = 0;
  std::size_t min_features_ = 0;
};

// Grows one tree on every row of `subsample`. Rejects an empty subsample.
ITree build_tree(const Matrix& subsample, const ForestParams& params, Rng& rng);

// Exact, order-independent accumulator for non-negative path lengths. Values
// are summed in 128-bit fixed point so a prefix mean does not depend on the
// order the trees were visited in.
class PathLengthSum {
 public:
  void add(double path_length);
  double total() const;
  double mean(std::size_t count) const { return total() / static_cast<double>(count); }

 private:
  __extension__ __int128 acc_ = 0;
};

struct AnomalyScore {
  double value = 0.0;
  auto operator<=>(const AnomalyScore&) const = default;
};

// 2^(-mean_path / normalizer).
AnomalyScore score_from_mean_path(double mean_path, double normalizer);

// 1 iff score > tau; tau must lie in (0, 1).
int predict_label(AnomalyScore score, double tau = 0.5);

inline constexpr std::nullopt_t kAllTrees = std::nullopt;

// Ordered tree ensemble. Immutable once built and safe to score concurrently.
class IForest {
 public:
  // `subsample_size` is the effective size the trees were grown on and sets
  // the normalizer c(psi). `n_features` of 0 means unknown (deserialized
  // models); inputs are then only checked against the features the trees use.
  IForest(std::vector<ITree> trees, std::size_t subsample_size,
          std::size_t n_features = 0);

  const std::vector<ITree>& trees() const { return trees_; }
  std::size_t size() const { return trees_.size(); }
  std::size_t subsample_size() const { return subsample_size_; }
  std::size_t n_features() const { return n_features_; }
  double normalizer() const { return normalizer_; }

  // Mean path length over the first prefix_len trees (all when nullopt).
  double mean_path_length(std::span<const double> x,
                          std::optional<std::size_t> prefix_len = kAllTrees) const;
  AnomalyScore score(std::span<const double> x,
                     std::optional<std::size_t> prefix_len = kAllTrees) const;
  std::vector<double> score_all(const Matrix& data,
                                std::optional<std::size_t> prefix_len = kAllTrees,
                                std::size_t threads = 1) const;

  // Forest made of the listed trees in the listed order.
  IForest subforest(std::span<const std::size_t> tree_indices) const;

  bool operator==(const IForest&) const = default;

 private:
  std::size_t resolve_prefix(std::optional<std::size_t> prefix_len) const;
  void check_input(std::span<const double> x) const;

  std::vector<ITree> trees_;
  std::size_t subsample_size_ = 0;
  std::size_t n_features_ = 0;
  double normalizer_ = 0.0;
};

// Grows params.n_trees trees, tree i on a uniform subsample without
// replacement of min(psi, rows) rows drawn with a seed derived from
// (params.seed, i). The result does not depend on `threads`.
IForest fit_forest(const Matrix& data, const ForestParams& params,
                   std::size_t threads = 1);

// rows x trees table of per-tree path lengths.
Matrix path_length_table(const IForest& forest, const Matrix& data,
                         std::size_t threads = 1);

}  // namespace tiws
