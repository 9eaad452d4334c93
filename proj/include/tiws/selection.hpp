#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "tiws/dataset.hpp"
#include "tiws/forest.hpp"

namespace tiws {

struct OrderingStrategy {
  enum class Kind { kBest, kWorst, kRandom };

  Kind kind = Kind::kBest;
  // Only used by kRandom.
  std::uint64_t seed = 0;

  static OrderingStrategy best() { return {Kind::kBest, 0}; }
  static OrderingStrategy worst() { return {Kind::kWorst, 0}; }
  static OrderingStrategy random(std::uint64_t seed) { return {Kind::kRandom, seed}; }
};

std::string_view to_string(OrderingStrategy::Kind kind);
// best, worst or random.
OrderingStrategy::Kind parse_strategy(std::string_view text);

struct TreeRanking {
  // Indexed by original tree position.
  std::vector<double> per_tree_ap;
  // Permutation of tree indices.
  std::vector<std::size_t> order;
};

struct SelectionResult {
  TreeRanking ranking;
  // prefix_ap[i - 1] is the AP of the first i ranked trees.
  std::vector<double> prefix_ap;
  std::size_t selected_size = 0;
  std::vector<std::size_t> selected_tree_indices;
};

// Per-tree AP on the labeled rows, scoring each row by its negative path
// length in that tree alone. Needs at least one positive and one negative,
// otherwise throws LabelError.
std::vector<double> rank_trees(const IForest& forest, const LabeledDataset& labeled,
                               std::size_t threads = 1);
std::vector<double> rank_trees(const Matrix& path_lengths, std::span<const std::uint8_t> labels,
                               std::size_t threads = 1);

// BEST sorts by descending AP, WORST by ascending AP, both breaking ties by
// ascending tree index. RANDOM draws a uniform permutation from its seed.
TreeRanking order_trees(const OrderingStrategy& strategy, std::span<const double> per_tree_ap);

// AP of every prefix forest under `order`. Prefix means are built from
// cumulative exact sums over the path length table, and each prefix is scored
// with the forest normalizer, so the last entry equals the AP of the full
// forest scores whatever the order.
std::vector<double> prefix_ap_curve(const Matrix& path_lengths,
                                    std::span<const std::size_t> order,
                                    std::span<const std::uint8_t> labels, double normalizer);
std::vector<double> prefix_ap_curve(const IForest& forest, const TreeRanking& ranking,
                                    const LabeledDataset& labeled, std::size_t threads = 1);

// Largest prefix size attaining the maximum AP.
std::size_t select_forest(std::span<const double> prefix_ap);

struct TiwsModel {
  IForest forest;
  SelectionResult selection;
};

// Ranks the trees of an already fitted forest on `labeled` and keeps the best
// prefix, in ranked order. Trees are copied, never regrown.
TiwsModel tiws_select(const IForest& forest, const LabeledDataset& labeled,
                      std::size_t threads = 1);

// Fits an unsupervised forest on `train`, then runs tiws_select.
TiwsModel tiws_fit(const Matrix& train, const LabeledDataset& labeled,
                   const ForestParams& params, std::size_t threads = 1);

}  // namespace tiws
