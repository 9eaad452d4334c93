#include "tiws/experiment.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tiws/metrics.hpp"
#include "tiws/model_store.hpp"

namespace tiws {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("tiws_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_dataset(const LabeledDataset& ds, const std::string& name) const {
    std::ofstream f(path(name));
    write_csv(ds, f);
    return path(name);
  }

  fs::path dir_;
};

TEST(LoadSource, ToySpecs) {
  const auto ds = load_source("toy:double_cluster:200:10", 1);
  EXPECT_EQ(ds.size(), 210u);
  EXPECT_EQ(ds.anomaly_count(), 10u);
  EXPECT_EQ(load_source("toy:square_toroid", 1).size(), 1000u);
  EXPECT_EQ(load_source("toy:square_toroid", 1).features, load_source("toy:square_toroid", 1).features);
  EXPECT_THROW(load_source("toy:nope", 1), std::invalid_argument);
  EXPECT_THROW(load_source("toy:square_toroid:1:2:3", 1), std::invalid_argument);
  EXPECT_THROW(load_source("toy:square_toroid:abc", 1), std::invalid_argument);
}

TEST(CellSeed, KeyedByCoordinates) {
  EXPECT_EQ(cell_seed(1, "a", 0.1, 0), cell_seed(1, "a", 0.10, 0));
  EXPECT_NE(cell_seed(1, "a", 0.1, 0), cell_seed(1, "a", 0.1, 1));
  EXPECT_NE(cell_seed(1, "a", 0.1, 0), cell_seed(1, "b", 0.1, 0));
  EXPECT_NE(cell_seed(1, "a", 0.1, 0), cell_seed(1, "a", 0.2, 0));
  EXPECT_NE(cell_seed(1, "a", 0.1, 0), cell_seed(2, "a", 0.1, 0));
}

TEST_F(CliTest, ParseErrorsAreInputErrors) {
  EXPECT_EQ(cli({}).code, kExitInputError);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitInputError);
  EXPECT_EQ(cli({"train", "--data", "toy:square_toroid"}).code, kExitInputError);
  EXPECT_EQ(cli({"train", "--data", "toy:square_toroid", "--out", path("m"), "--trees", "0"}).code,
            kExitInputError);
}

TEST_F(CliTest, UnreadableDataIsInputError) {
  const auto r = cli({"train", "--data", path("missing.csv"), "--out", path("m.tiws")});
  EXPECT_EQ(r.code, kExitInputError);
  EXPECT_NE(r.err.find("missing.csv"), std::string::npos);
}

TEST_F(CliTest, TrainWritesModelAndSummary) {
  const auto r = cli({"train", "--data", "toy:double_cluster:300:10", "--out", path("m.tiws"),
                      "--trees", "12", "--subsample", "64", "--seed", "3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["n"], 310);
  EXPECT_EQ(j["d"], 2);
  EXPECT_EQ(j["t"], 12);
  EXPECT_EQ(j["psi"], 64);
  EXPECT_EQ(j["bytes"], fs::file_size(path("m.tiws")));
  const IForest f = load_model(path("m.tiws"));
  EXPECT_EQ(f.size(), 12u);
  // Same seed, same bytes.
  ASSERT_EQ(cli({"train", "--data", "toy:double_cluster:300:10", "--out", path("m2.tiws"),
                 "--trees", "12", "--subsample", "64", "--seed", "3"})
                .code,
            kExitOk);
  EXPECT_EQ(slurp(path("m.tiws")), slurp(path("m2.tiws")));
}

TEST_F(CliTest, SelectAndEvalPipeline) {
  const auto ds = make_toy(ToyKind::kSquareToroid, 970, 30, 5);
  const auto csv = write_dataset(ds, "toroid.csv");
  ASSERT_EQ(cli({"train", "--data", csv, "--out", path("full.tiws"), "--seed", "5"}).code, kExitOk);

  const auto sel = cli({"select", "--model", path("full.tiws"), "--labeled", csv, "--out",
                        path("reduced.tiws"), "--json", path("sel.json")});
  ASSERT_EQ(sel.code, kExitOk) << sel.err;
  const auto j = json::parse(slurp(path("sel.json")));
  for (const char* key : {"per_tree_ap", "order", "prefix_ap", "selected_size",
                          "selected_tree_indices", "parent_bytes", "reduced_bytes"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  const std::size_t k = j["selected_size"];
  EXPECT_EQ(j["per_tree_ap"].size(), 100u);
  EXPECT_EQ(j["prefix_ap"].size(), 100u);
  EXPECT_EQ(j["selected_tree_indices"].size(), k);
  EXPECT_EQ(load_model(path("reduced.tiws")).size(), k);
  EXPECT_EQ(j["reduced_bytes"], fs::file_size(path("reduced.tiws")));

  const auto full = json::parse(cli({"eval", "--model", path("full.tiws"), "--data", csv}).out);
  const auto red = cli({"eval", "--model", path("reduced.tiws"), "--data", csv, "--out", path("pr.csv")});
  ASSERT_EQ(red.code, kExitOk);
  const auto jr = json::parse(red.out);
  EXPECT_EQ(jr["trees"], k);
  EXPECT_EQ(jr["anomalies"], 30);
  EXPECT_EQ(jr["average_precision"].get<double>(), j["prefix_ap"][k - 1].get<double>());
  EXPECT_EQ(full["average_precision"].get<double>(), j["prefix_ap"][99].get<double>());
  EXPECT_GE(jr["average_precision"].get<double>(), full["average_precision"].get<double>());
  EXPECT_EQ(slurp(path("pr.csv")).rfind("threshold,precision,recall\n", 0), 0u);
}

TEST_F(CliTest, LabelContractViolations) {
  auto ds = make_toy(ToyKind::kCentralCluster, 100, 5, 1);
  const auto csv = write_dataset(ds, "ok.csv");
  std::fill(ds.labels->begin(), ds.labels->end(), 0);
  const auto none = write_dataset(ds, "none.csv");
  ASSERT_EQ(cli({"train", "--data", csv, "--out", path("m.tiws"), "--trees", "5"}).code, kExitOk);
  EXPECT_EQ(cli({"eval", "--model", path("m.tiws"), "--data", none}).code, kExitLabelError);
  EXPECT_EQ(cli({"select", "--model", path("m.tiws"), "--labeled", none, "--out", path("r.tiws")}).code,
            kExitLabelError);
}

TEST_F(CliTest, SingleAnomalyWarns) {
  const auto csv = write_dataset(make_toy(ToyKind::kCentralCluster, 100, 1, 1), "one.csv");
  ASSERT_EQ(cli({"train", "--data", csv, "--out", path("m.tiws"), "--trees", "5"}).code, kExitOk);
  const auto r = cli({"select", "--model", path("m.tiws"), "--labeled", csv, "--out", path("r.tiws")});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST_F(CliTest, CorruptModelIsInputError) {
  std::ofstream(path("bad.tiws")) << "garbage";
  const auto csv = write_dataset(make_toy(ToyKind::kCentralCluster, 100, 5, 1), "d.csv");
  EXPECT_EQ(cli({"eval", "--model", path("bad.tiws"), "--data", csv}).code, kExitInputError);
}

TEST_F(CliTest, CurvesWritesOneFilePerStrategy) {
  const auto r = cli({"curves", "--data", "toy:square_toroid", "--out", path("curves"),
                      "--permutations", "5", "--trees", "30"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::vector<std::string> lasts;
  for (const char* s : {"best", "worst", "random"}) {
    std::ifstream f(path("curves/curve_" + std::string(s) + ".csv"));
    std::string line, last;
    std::getline(f, line);
    EXPECT_EQ(line, "prefix_size,ap_mean,ap_min,ap_max");
    std::size_t rows = 0;
    while (std::getline(f, line)) {
      ++rows;
      last = line;
    }
    EXPECT_EQ(rows, 30u);
    lasts.push_back(last.substr(last.find(',') + 1));
  }
  // Every ordering ends at the same forest; for random, min = mean = max there.
  EXPECT_EQ(lasts[0], lasts[1]);
  EXPECT_EQ(lasts[0], lasts[2]);
  EXPECT_TRUE(fs::exists(path("curves/per_tree_ap.csv")));
}

TEST(RunCurves, RandomEnvelopeBracketsMean) {
  CurveConfig cfg;
  cfg.dataset = "toy:square_toroid";
  cfg.permutations = 10;
  cfg.params.n_trees = 25;
  const auto out = run_curves(cfg);
  ASSERT_EQ(out.curves.size(), 3u);
  for (const auto& c : out.curves) {
    ASSERT_EQ(c.rows.size(), 25u);
    EXPECT_EQ(c.rows.back().ap_mean, out.full_forest_ap);
    for (const auto& row : c.rows) {
      EXPECT_LE(row.ap_min, row.ap_mean + 1e-12);
      EXPECT_GE(row.ap_max, row.ap_mean - 1e-12);
    }
  }
}

TEST_F(CliTest, SweepDeterministicAcrossThreads) {
  const std::vector<std::string> base{"sweep", "--data", "toy:double_cluster", "--data",
                                      "toy:square_toroid", "--fractions", "0.1,0.4",
                                      "--repetitions", "3", "--trees", "20", "--seed", "7"};
  auto a = base;
  a.insert(a.end(), {"--out", path("a"), "--threads", "1"});
  auto b = base;
  b.insert(b.end(), {"--out", path("b"), "--threads", "4"});
  ASSERT_EQ(cli(a).code, kExitOk);
  ASSERT_EQ(cli(b).code, kExitOk);
  for (const char* f : {"sweep.csv", "sweep_summary.csv"}) {
    EXPECT_EQ(slurp(path("a/") + f), slurp(path("b/") + f)) << f;
  }
  std::ifstream csv(path("a/sweep.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line,
            "dataset,labeled_fraction,repetition,seed,n_train,n_test,n_labeled,trees,"
            "baseline_test_ap,tiws_test_ap,baseline_labeled_ap,tiws_labeled_ap,"
            "selected_trees,parent_bytes,reduced_bytes");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 2u * 2u * 3u);
}

TEST_F(CliTest, SweepConfigFileWithFlagOverride) {
  std::ofstream(path("cfg.json"))
      << R"({"datasets": ["toy:central_cluster"], "fractions": [0.2], "repetitions": 2,
            "trees": 10, "seed": 1})";
  ASSERT_EQ(cli({"sweep", "--config", path("cfg.json"), "--out", path("o"), "--repetitions", "3"}).code,
            kExitOk);
  std::ifstream csv(path("o/sweep.csv"));
  std::string line;
  std::getline(csv, line);
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    EXPECT_NE(line.find(",10,"), std::string::npos);
  }
  EXPECT_EQ(rows, 3u);
}

TEST_F(CliTest, SweepPartialFailure) {
  const auto r = cli({"sweep", "--data", "toy:central_cluster", "--data", path("missing.csv"),
                      "--fractions", "0.2", "--repetitions", "1", "--trees", "5", "--out", path("o")});
  EXPECT_EQ(r.code, kExitPartialFailure);
  EXPECT_NE(r.err.find("missing.csv"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("o/sweep.csv")));
}

TEST(RunSweep, RecordsObeyInvariants) {
  SweepConfig cfg;
  cfg.datasets = {"toy:square_toroid", "toy:double_cluster"};
  cfg.fractions = {0.2, 1.0};
  cfg.repetitions = 3;
  cfg.params.n_trees = 40;
  cfg.params.seed = 11;
  std::ostringstream log;
  const auto outcome = run_sweep(cfg, log);
  EXPECT_TRUE(outcome.failures.empty()) << log.str();
  ASSERT_EQ(outcome.records.size(), 12u);
  for (const auto& r : outcome.records) {
    EXPECT_LE(r.selected_trees, r.trees);
    EXPECT_GE(r.tiws_labeled_ap, r.baseline_labeled_ap);
    if (r.selected_trees < r.trees) {
      EXPECT_LT(r.reduced_bytes, r.parent_bytes);
    } else {
      EXPECT_EQ(r.reduced_bytes, r.parent_bytes);
    }
    EXPECT_EQ(r.n_train + r.n_test, 1000u);
  }
}

TEST_F(CliTest, BaselineMatchesEvalOfUnreducedModel) {
  SweepConfig cfg;
  cfg.datasets = {"toy:square_toroid"};
  cfg.fractions = {0.2};
  cfg.repetitions = 2;
  cfg.params.n_trees = 30;
  cfg.params.seed = 5;
  std::ostringstream log;
  const auto outcome = run_sweep(cfg, log);
  ASSERT_EQ(outcome.records.size(), 2u);
  const auto ds = load_source("toy:square_toroid", cfg.params.seed);
  for (const auto& r : outcome.records) {
    const auto split = stratified_split(ds, {cfg.test_fraction, r.fraction, derive_seed(r.seed, 1)});
    ForestParams p = cfg.params;
    p.seed = derive_seed(r.seed, 3);
    save_model(fit_forest(split.train.features, p), path("parent.tiws"));
    const auto test_csv = write_dataset(split.test, "test.csv");
    const auto e = cli({"eval", "--model", path("parent.tiws"), "--data", test_csv});
    ASSERT_EQ(e.code, kExitOk) << e.err;
    EXPECT_EQ(json::parse(e.out)["average_precision"].get<double>(), r.baseline_test_ap);
  }
}

}  // namespace
}  // namespace tiws
