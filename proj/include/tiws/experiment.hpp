#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tiws/dataset.hpp"
#include "tiws/forest.hpp"
#include "tiws/selection.hpp"

namespace tiws {

// Process exit statuses of the tiws tool.
enum ExitStatus : int {
  kExitOk = 0,
  kExitInputError = 2,
  kExitLabelError = 3,
  kExitPartialFailure = 4,
};

// A dataset source is either a CSV path or "toy:<kind>[:inliers[:anomalies]]"
// (defaults 970 and 30). Toy data is generated from `seed`.
LabeledDataset load_source(std::string_view source, std::uint64_t seed);

// Seed of one sweep cell, a function of the master seed and the cell
// coordinates only, so rows reproduce individually.
std::uint64_t cell_seed(std::uint64_t master, std::string_view dataset, double fraction,
                        std::size_t repetition);

struct SweepConfig {
  std::vector<std::string> datasets;
  std::vector<double> fractions{0.05, 0.10, 0.20, 0.40};
  std::size_t repetitions = 10;
  double test_fraction = 0.5;
  // params.seed is the master seed.
  ForestParams params;
  std::size_t threads = 1;

  void validate() const;
};

struct SweepRecord {
  std::string dataset;
  double fraction = 0.0;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_labeled = 0;
  std::size_t trees = 0;
  double baseline_test_ap = 0.0;
  double tiws_test_ap = 0.0;
  // AP of the full and selected forests on the labeled subset.
  double baseline_labeled_ap = 0.0;
  double tiws_labeled_ap = 0.0;
  std::size_t selected_trees = 0;
  std::size_t parent_bytes = 0;
  std::size_t reduced_bytes = 0;
  double wall_ms = 0.0;
};

struct SweepOutcome {
  // Sorted by (dataset order, fraction order, repetition).
  std::vector<SweepRecord> records;
  std::vector<std::string> failures;
};

// Runs every (dataset, fraction, repetition) cell: contamination-preserving
// split, labeled sample of the training half, unsupervised forest on the
// training half, selection on the labeled sample, scoring on the test half.
// Failures are collected and logged; the sweep continues.
SweepOutcome run_sweep(const SweepConfig& config, std::ostream& log);

// Deterministic columns only; wall times go to write_sweep_timing_csv.
void write_sweep_csv(std::span<const SweepRecord> records, std::ostream& out);
void write_sweep_timing_csv(std::span<const SweepRecord> records, std::ostream& out);
// Medians per (dataset, fraction).
void write_sweep_summary_csv(std::span<const SweepRecord> records, std::ostream& out);

struct CurveConfig {
  std::string dataset;
  std::vector<OrderingStrategy::Kind> strategies{OrderingStrategy::Kind::kBest,
                                                 OrderingStrategy::Kind::kWorst,
                                                 OrderingStrategy::Kind::kRandom};
  double labeled_fraction = 1.0;
  std::size_t permutations = 100;
  ForestParams params;
  std::size_t threads = 1;
};

struct CurveRow {
  std::size_t prefix_size = 0;
  double ap_mean = 0.0;
  double ap_min = 0.0;
  double ap_max = 0.0;
};

struct StrategyCurve {
  OrderingStrategy::Kind strategy;
  std::vector<CurveRow> rows;
};

struct CurveOutcome {
  std::vector<double> per_tree_ap;
  double full_forest_ap = 0.0;
  std::vector<StrategyCurve> curves;
};

// Grows a forest on the whole dataset and evaluates prefix forests under each
// strategy on the labeled part. RANDOM is aggregated over `permutations`
// shuffles; BEST and WORST report min = max = mean.
CurveOutcome run_curves(const CurveConfig& config);

void write_curve_csv(const StrategyCurve& curve, std::ostream& out);

std::string selection_json(const SelectionResult& result, std::size_t parent_bytes,
                           std::size_t reduced_bytes);

// Entry point of the tiws tool. args excludes the program name.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace tiws
