#include "tiws/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace tiws {
namespace {

void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("scores and labels differ in length (" +
                                std::to_string(scores.size()) + " vs " +
                                std::to_string(labels.size()) + ")");
  }
  if (scores.empty()) throw std::invalid_argument("no samples to evaluate");
  for (const double s : scores) {
    if (std::isnan(s)) throw std::invalid_argument("NaN score");
  }
  if (std::none_of(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; })) {
    throw LabelError("no positive labels");
  }
}

// Walks the samples in descending score order, calling
// visit(threshold, flagged, hits) once per tie group with cumulative counts.
template <class Visit>
std::size_t for_each_tie_group(std::span<const double> scores,
                               std::span<const std::uint8_t> labels, Visit&& visit) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t flagged = 0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n;) {
    const double threshold = scores[order[k]];
    for (; k < n && scores[order[k]] == threshold; ++k) {
      ++flagged;
      if (labels[order[k]] != 0) ++hits;
    }
    visit(threshold, flagged, hits);
  }
  return hits;
}

}  // namespace

PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  PRCurve curve;
  const std::size_t positives = for_each_tie_group(
      scores, labels, [&](double threshold, std::size_t flagged, std::size_t hits) {
        curve.points.push_back({threshold, static_cast<double>(hits) / static_cast<double>(flagged),
                                static_cast<double>(hits)});
      });
  for (auto& p : curve.points) p.recall /= static_cast<double>(positives);
  return curve;
}

ApScore average_precision(std::span<const double> scores,
                          std::span<const std::uint8_t> labels) {
  // Recall steps are kept as integer hit counts and divided out once, so a
  // perfect ranking sums to exactly 1.
  double weighted = 0.0;
  std::size_t previous_hits = 0;
  const std::size_t positives = for_each_tie_group(
      scores, labels, [&](double, std::size_t flagged, std::size_t hits) {
        if (hits != previous_hits) {
          weighted += static_cast<double>(hits - previous_hits) * static_cast<double>(hits) /
                      static_cast<double>(flagged);
          previous_hits = hits;
        }
      });
  return {std::clamp(weighted / static_cast<double>(positives), 0.0, 1.0)};
}

}  // namespace tiws
