#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tiws/errors.hpp"

namespace tiws {

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  bool operator==(const PRPoint&) const = default;
};

// One point per distinct score, thresholds strictly decreasing. A point
// counts every sample scoring at or above its threshold as flagged.
struct PRCurve {
  std::vector<PRPoint> points;
  std::size_t n_thresholds() const { return points.size(); }
};

struct ApScore {
  double value = 0.0;
  auto operator<=>(const ApScore&) const = default;
};

// Labels are 0/1 with 1 marking an anomaly. Throws std::invalid_argument on
// length mismatch or empty input and LabelError when no label is positive.
PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Step-wise sum of p_i (r_i - r_{i-1}) over the tie-grouped PR curve, with
// no precision interpolation.
ApScore average_precision(std::span<const double> scores,
                          std::span<const std::uint8_t> labels);

}  // namespace tiws
