#include "tiws/dataset.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "tiws/random.hpp"

namespace tiws {
namespace {

const std::string kBreastw = std::string(TIWS_TEST_DATA_DIR) + "/breastw.csv";

LabeledDataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in, "inline");
}

LabeledDataset synthetic(std::size_t n, std::size_t anomalies, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
  }
  std::vector<std::uint8_t> labels(n, 0);
  for (std::size_t i = 0; i < anomalies; ++i) labels[(i * 7919) % n] = 1;
  return {"synthetic", std::move(x), std::move(labels)};
}

TEST(Csv, ThreeRowContamination) {
  const auto ds = parse("a,b,label\n1,2,0\n3,4,0\n5,6,1\n");
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dims(), 2u);
  EXPECT_EQ(ds.anomaly_count(), 1u);
  EXPECT_DOUBLE_EQ(ds.contamination(), 1.0 / 3.0);
  EXPECT_EQ(ds.features(2, 1), 6.0);
}

TEST(Csv, BreastwFixtureMatchesPublishedCounts) {
  const auto ds = load_csv(kBreastw);
  EXPECT_EQ(ds.size(), 683u);
  EXPECT_EQ(ds.dims(), 9u);
  EXPECT_EQ(ds.anomaly_count(), 239u);
  EXPECT_NEAR(ds.contamination() * 100.0, 34.99, 0.005);
}

TEST(Csv, MissingLabelHeaderNamesColumn) {
  try {
    parse("a,b,c\n1,2,0\n");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("label"), std::string::npos);
  }
}

TEST(Csv, NonNumericCellReportsLocation) {
  try {
    parse("a,b,label\n1,2,0\n3,oops,1\n");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("3"), std::string::npos);
    EXPECT_NE(msg.find("oops"), std::string::npos);
  }
}

TEST(Csv, RejectsMalformedFiles) {
  EXPECT_THROW(parse(""), DataError);
  EXPECT_THROW(parse("a,label\n"), DataError);
  EXPECT_THROW(parse("a,label\n1,2\n"), DataError);
  EXPECT_THROW(parse("a,label\n1\n"), DataError);
  EXPECT_THROW(parse("a,label\nnan,0\n"), DataError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv"), DataError);
}

TEST(Csv, AcceptsDecimalLabels) {
  const auto ds = parse("a,label\n1,0.0\n2,1.0\n");
  EXPECT_EQ(ds.anomaly_count(), 1u);
}

TEST(Csv, RoundTripPreservesValues) {
  const auto ds = make_toy(ToyKind::kCentralCluster, 50, 5, 3);
  std::stringstream buf;
  write_csv(ds, buf);
  const auto back = parse_csv(buf, "back");
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(*back.labels, *ds.labels);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < ds.dims(); ++j) {
      const double a = ds.features(i, j);
      EXPECT_NEAR(back.features(i, j), a, 1e-15 * std::max(1.0, std::abs(a)));
    }
}

TEST(Toy, CountsAndContamination) {
  const auto ds = make_toy(ToyKind::kDoubleCluster, 200, 10, 1);
  EXPECT_EQ(ds.size(), 210u);
  EXPECT_EQ(ds.dims(), 2u);
  EXPECT_DOUBLE_EQ(ds.contamination(), 10.0 / 210.0);
}

TEST(Toy, ToroidAnomaliesInsideHoleInliersOnFrame) {
  const auto ds = make_toy(ToyKind::kSquareToroid, 970, 30, 7);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double r = std::max(std::abs(ds.features(i, 0)), std::abs(ds.features(i, 1)));
    if ((*ds.labels)[i]) {
      EXPECT_LT(r, toy::kFrameInner);
    } else {
      EXPECT_GE(r, toy::kFrameInner);
      EXPECT_LE(r, toy::kFrameOuter);
    }
  }
}

TEST(Toy, DoubleClusterAnomaliesKeepClearance) {
  const auto ds = make_toy(ToyKind::kDoubleCluster, 500, 40, 2);
  for (std::size_t i = 500; i < ds.size(); ++i) {
    const double x = ds.features(i, 0), y = ds.features(i, 1);
    const double c = toy::kDoubleCenter;
    EXPECT_GE(std::hypot(x - c, y - c), toy::kDoubleClearance);
    EXPECT_GE(std::hypot(x + c, y + c), toy::kDoubleClearance);
  }
}

TEST(Toy, CentralRingRadius) {
  const auto ds = make_toy(ToyKind::kCentralCluster, 100, 50, 2);
  for (std::size_t i = 100; i < ds.size(); ++i) {
    const double r = std::hypot(ds.features(i, 0), ds.features(i, 1));
    EXPECT_GE(r, toy::kCentralRingInner - 1e-12);
    EXPECT_LE(r, toy::kCentralRingOuter + 1e-12);
  }
}

TEST(Toy, DeterministicPerSeed) {
  for (auto kind : {ToyKind::kCentralCluster, ToyKind::kDoubleCluster, ToyKind::kSquareToroid}) {
    const auto a = make_toy(kind, 100, 5, 11);
    const auto b = make_toy(kind, 100, 5, 11);
    const auto c = make_toy(kind, 100, 5, 12);
    EXPECT_EQ(a.features, b.features);
    EXPECT_FALSE(a.features == c.features);
  }
  EXPECT_EQ(parse_toy_kind("square_toroid"), ToyKind::kSquareToroid);
  EXPECT_THROW(parse_toy_kind("torus"), std::invalid_argument);
}

TEST(Split, BreastwHalvesShareAnomalies) {
  const auto ds = load_csv(kBreastw);
  const auto split = stratified_split(ds, {0.5, 1.0, 42});
  EXPECT_EQ(split.train.size() + split.test.size(), 683u);
  const auto a = split.train.anomaly_count();
  const auto b = split.test.anomaly_count();
  EXPECT_EQ(a + b, 239u);
  EXPECT_TRUE((a == 119 && b == 120) || (a == 120 && b == 119));
}

TEST(Split, FourPointsOneAnomalyEach) {
  const LabeledDataset ds{"four", Matrix(4, 1, {0, 1, 2, 3}), std::vector<std::uint8_t>{1, 0, 1, 0}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto split = stratified_split(ds, {0.5, 1.0, seed});
    EXPECT_EQ(split.train.anomaly_count(), 1u);
    EXPECT_EQ(split.test.anomaly_count(), 1u);
  }
}

TEST(Split, PartitionDeterministicAndStratified) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t n = 20 + rng.below(500);
    const std::size_t a = 2 + rng.below(n / 3);
    const auto ds = synthetic(n, a, seed);
    const double f = rng.uniform(0.1, 0.9);
    const auto s1 = stratified_split(ds, {f, 1.0, seed});
    const auto s2 = stratified_split(ds, {f, 1.0, seed});
    EXPECT_EQ(s1.train_rows, s2.train_rows);
    EXPECT_EQ(s1.test_rows, s2.test_rows);

    std::set<std::size_t> all(s1.train_rows.begin(), s1.train_rows.end());
    for (auto r : s1.test_rows) EXPECT_TRUE(all.insert(r).second);
    EXPECT_EQ(all.size(), n);

    for (const auto* part : {&s1.train, &s1.test}) {
      EXPECT_GE(part->anomaly_count(), 1u);
      EXPECT_LT(part->anomaly_count(), part->size());
      EXPECT_LE(std::abs(part->contamination() - ds.contamination()),
                1.0 / static_cast<double>(part->size()) + 1e-12);
    }
  }
}

TEST(Split, RejectsSingleAnomaly) {
  EXPECT_THROW(stratified_split(synthetic(50, 1, 0), {0.5, 1.0, 0}), LabelError);
}

TEST(LabeledFraction, FullFractionIsIdentity) {
  const auto ds = synthetic(100, 10, 1);
  const auto out = sample_labeled_fraction(ds, 1.0, 5);
  EXPECT_EQ(out.features, ds.features);
  EXPECT_EQ(*out.labels, *ds.labels);
}

TEST(LabeledFraction, StratifiedCounts) {
  const auto ds = synthetic(100, 10, 1);
  const auto out = sample_labeled_fraction(ds, 0.2, 5);
  EXPECT_EQ(out.size(), 20u);
  EXPECT_EQ(out.anomaly_count(), 2u);
  EXPECT_EQ(sample_labeled_fraction(ds, 0.2, 5).features, out.features);
}

TEST(LabeledFraction, TooSmallForAnAnomaly) {
  EXPECT_THROW(sample_labeled_fraction(synthetic(100, 2, 1), 0.01, 0), LabelError);
}

TEST(LabeledFraction, RejectsOutOfRangeFraction) {
  const auto ds = synthetic(100, 10, 1);
  EXPECT_THROW(sample_labeled_fraction(ds, 0.0, 0), std::invalid_argument);
  EXPECT_THROW(sample_labeled_fraction(ds, 1.5, 0), std::invalid_argument);
}

}  // namespace
}  // namespace tiws
