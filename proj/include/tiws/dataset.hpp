#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tiws/errors.hpp"
#include "tiws/matrix.hpp"

namespace tiws {

struct LabeledDataset {
  std::string name;
  Matrix features;
  // 1 marks an anomaly.
  std::optional<std::vector<std::uint8_t>> labels;

  std::size_t size() const { return features.rows(); }
  std::size_t dims() const { return features.cols(); }
  bool has_labels() const { return labels.has_value(); }

  // Throw DataError when labels are absent.
  const std::vector<std::uint8_t>& require_labels() const;
  std::size_t anomaly_count() const;
  double contamination() const;

  // Rows in the given order; labels follow.
  LabeledDataset subset(std::span<const std::size_t> rows, std::string subset_name) const;

  // Throws DataError on empty data, label count mismatch, non-0/1 labels or
  // non-finite features.
  void validate() const;
};

// CSV contract: header row, comma separated, last column named "label"
// holding 0/1, every other cell a decimal number.
LabeledDataset load_csv(const std::filesystem::path& path);
LabeledDataset parse_csv(std::istream& in, std::string name);

// Writes the same contract back with 17 significant digits. Unlabeled data
// gets an all-zero label column.
void write_csv(const LabeledDataset& ds, std::ostream& out);
void write_csv(const LabeledDataset& ds, const std::filesystem::path& path);

enum class ToyKind { kCentralCluster, kDoubleCluster, kSquareToroid };

std::string_view to_string(ToyKind kind);
// Accepts central_cluster, double_cluster, square_toroid.
ToyKind parse_toy_kind(std::string_view text);

// Geometry of the synthetic 2-D sets.
namespace toy {
// Central cluster: N(0, 1) blob, anomalies uniform in the ring
// kCentralRingInner <= r <= kCentralRingOuter.
inline constexpr double kCentralRingInner = 4.0;
inline constexpr double kCentralRingOuter = 6.0;
// Double cluster: unit-variance blobs at (-c, -c) and (c, c); anomalies
// uniform in [-kDoubleBox, kDoubleBox]^2 at least kDoubleClearance from both
// centers.
inline constexpr double kDoubleCenter = 3.0;
inline constexpr double kDoubleBox = 7.0;
inline constexpr double kDoubleClearance = 3.5;
// Square toroid: inliers uniform on the frame between half-widths
// kFrameInner and kFrameOuter; anomalies uniform in the central square of
// half-width kHoleCore, which sits strictly inside the hole.
inline constexpr double kFrameOuter = 1.0;
inline constexpr double kFrameInner = 0.7;
inline constexpr double kHoleCore = 0.2;
}  // namespace toy

// Requires n_inliers >= 10 and n_anomalies >= 1. Inliers come first, then
// anomalies.
LabeledDataset make_toy(ToyKind kind, std::size_t n_inliers, std::size_t n_anomalies,
                        std::uint64_t seed);

struct SplitSpec {
  double test_fraction = 0.5;
  // Share of the training half that is labeled.
  double labeled_fraction = 1.0;
  std::uint64_t seed = 0;
};

struct DatasetSplit {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

// Contamination-preserving partition. The test part holds
// round(n * test_fraction) rows; the anomaly count of the train part is
// round(contamination * n_train), so every part stays within 1/|part| of the
// parent contamination. Each class needs at least 2 members.
DatasetSplit stratified_split(const LabeledDataset& ds, const SplitSpec& spec);

// Stratified subsample of round(fraction * n) rows holding
// round(contamination * rows) anomalies. Throws LabelError when that leaves no
// anomaly or no inlier. fraction == 1 returns the input unchanged.
LabeledDataset sample_labeled_fraction(const LabeledDataset& train, double fraction,
                                       std::uint64_t seed);

}  // namespace tiws
