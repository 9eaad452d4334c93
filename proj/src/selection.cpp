#include "tiws/selection.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "tiws/metrics.hpp"
#include "tiws/parallel.hpp"

namespace tiws {
namespace {

void require_both_classes(std::span<const std::uint8_t> labels) {
  const auto positives =
      std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; });
  if (positives == 0) throw LabelError("labeled subset has no anomalies");
  if (static_cast<std::size_t>(positives) == labels.size()) {
    throw LabelError("labeled subset has no inliers");
  }
}

}  // namespace

std::string_view to_string(OrderingStrategy::Kind kind) {
  switch (kind) {
    case OrderingStrategy::Kind::kBest: return "best";
    case OrderingStrategy::Kind::kWorst: return "worst";
    case OrderingStrategy::Kind::kRandom: return "random";
  }
  return "unknown";
}

OrderingStrategy::Kind parse_strategy(std::string_view text) {
  for (const auto k : {OrderingStrategy::Kind::kBest, OrderingStrategy::Kind::kWorst,
                       OrderingStrategy::Kind::kRandom}) {
    if (text == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown ordering strategy \"" + std::string(text) + "\"");
}

std::vector<double> rank_trees(const Matrix& path_lengths, std::span<const std::uint8_t> labels,
                               std::size_t threads) {
  if (labels.size() != path_lengths.rows()) {
    throw std::invalid_argument("rank_trees: label count does not match rows");
  }
  require_both_classes(labels);
  const std::size_t n = path_lengths.rows();
  std::vector<double> aps(path_lengths.cols());
  parallel_for(aps.size(), threads, [&](std::size_t t) {
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) scores[i] = -path_lengths(i, t);
    aps[t] = average_precision(scores, labels).value;
  });
  return aps;
}

std::vector<double> rank_trees(const IForest& forest, const LabeledDataset& labeled,
                               std::size_t threads) {
  const auto& labels = labeled.require_labels();
  require_both_classes(labels);
  return rank_trees(path_length_table(forest, labeled.features, threads), labels, threads);
}

TreeRanking order_trees(const OrderingStrategy& strategy, std::span<const double> per_tree_ap) {
  if (per_tree_ap.empty()) throw std::invalid_argument("order_trees: no trees");
  TreeRanking ranking;
  ranking.per_tree_ap.assign(per_tree_ap.begin(), per_tree_ap.end());
  ranking.order.resize(per_tree_ap.size());
  std::iota(ranking.order.begin(), ranking.order.end(), std::size_t{0});
  switch (strategy.kind) {
    case OrderingStrategy::Kind::kBest:
      std::stable_sort(ranking.order.begin(), ranking.order.end(),
                       [&](std::size_t a, std::size_t b) { return per_tree_ap[a] > per_tree_ap[b]; });
      break;
    case OrderingStrategy::Kind::kWorst:
      std::stable_sort(ranking.order.begin(), ranking.order.end(),
                       [&](std::size_t a, std::size_t b) { return per_tree_ap[a] < per_tree_ap[b]; });
      break;
    case OrderingStrategy::Kind::kRandom: {
      Rng rng(strategy.seed);
      rng.shuffle(ranking.order);
      break;
    }
  }
  return ranking;
}

std::vector<double> prefix_ap_curve(const Matrix& path_lengths,
                                    std::span<const std::size_t> order,
                                    std::span<const std::uint8_t> labels, double normalizer) {
  const std::size_t n = path_lengths.rows();
  if (labels.size() != n) throw std::invalid_argument("prefix_ap_curve: label count mismatch");
  if (order.size() != path_lengths.cols()) {
    throw std::invalid_argument("prefix_ap_curve: ranking does not cover every tree");
  }
  std::vector<std::uint8_t> seen(order.size(), 0);
  for (const std::size_t t : order) {
    if (t >= order.size() || seen[t]) {
      throw std::invalid_argument("prefix_ap_curve: ranking is not a permutation");
    }
    seen[t] = 1;
  }

  std::vector<PathLengthSum> sums(n);
  std::vector<double> scores(n);
  std::vector<double> curve;
  curve.reserve(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t tree = order[k];
    for (std::size_t i = 0; i < n; ++i) {
      sums[i].add(path_lengths(i, tree));
      scores[i] = score_from_mean_path(sums[i].mean(k + 1), normalizer).value;
    }
    curve.push_back(average_precision(scores, labels).value);
  }
  return curve;
}

std::vector<double> prefix_ap_curve(const IForest& forest, const TreeRanking& ranking,
                                    const LabeledDataset& labeled, std::size_t threads) {
  return prefix_ap_curve(path_length_table(forest, labeled.features, threads), ranking.order,
                         labeled.require_labels(), forest.normalizer());
}

std::size_t select_forest(std::span<const double> prefix_ap) {
  if (prefix_ap.empty()) throw std::invalid_argument("select_forest: empty curve");
  std::size_t best = 0;
  for (std::size_t i = 1; i < prefix_ap.size(); ++i) {
    if (prefix_ap[i] >= prefix_ap[best]) best = i;
  }
  return best + 1;
}

TiwsModel tiws_select(const IForest& forest, const LabeledDataset& labeled, std::size_t threads) {
  const auto& labels = labeled.require_labels();
  require_both_classes(labels);
  const Matrix table = path_length_table(forest, labeled.features, threads);

  SelectionResult result;
  result.ranking = order_trees(OrderingStrategy::best(), rank_trees(table, labels, threads));
  result.prefix_ap = prefix_ap_curve(table, result.ranking.order, labels, forest.normalizer());
  result.selected_size = select_forest(result.prefix_ap);
  result.selected_tree_indices.assign(
      result.ranking.order.begin(),
      result.ranking.order.begin() + static_cast<std::ptrdiff_t>(result.selected_size));
  IForest reduced = forest.subforest(result.selected_tree_indices);
  return {std::move(reduced), std::move(result)};
}

TiwsModel tiws_fit(const Matrix& train, const LabeledDataset& labeled,
                   const ForestParams& params, std::size_t threads) {
  require_both_classes(labeled.require_labels());
  return tiws_select(fit_forest(train, params, threads), labeled, threads);
}

}  // namespace tiws
