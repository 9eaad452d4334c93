#include "tiws/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tiws/metrics.hpp"
#include "tiws/model_store.hpp"
#include "tiws/parallel.hpp"

namespace tiws {
namespace {

using json = nlohmann::json;

constexpr std::size_t kToyInliers = 970;
constexpr std::size_t kToyAnomalies = 30;

// Shortest round-trip decimal form.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::size_t parse_count(std::string_view text, const char* what) {
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw std::invalid_argument(std::string("bad ") + what + " \"" + std::string(text) + "\"");
  }
  return v;
}

double ap_of(const IForest& forest, const LabeledDataset& ds, std::size_t threads) {
  return average_precision(forest.score_all(ds.features, kAllTrees, threads),
                           ds.require_labels())
      .value;
}

SweepRecord run_cell(const LabeledDataset& ds, double fraction, std::size_t repetition,
                     const SweepConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  SweepRecord rec;
  rec.dataset = ds.name;
  rec.fraction = fraction;
  rec.repetition = repetition;
  rec.seed = cell_seed(config.params.seed, ds.name, fraction, repetition);

  const auto split = stratified_split(
      ds, SplitSpec{config.test_fraction, fraction, derive_seed(rec.seed, 1)});
  const auto labeled = sample_labeled_fraction(split.train, fraction, derive_seed(rec.seed, 2));
  ForestParams params = config.params;
  params.seed = derive_seed(rec.seed, 3);
  // Scored as stored, so baselines match `eval` on the saved model.
  const IForest forest = deserialize(serialize(fit_forest(split.train.features, params)));
  const TiwsModel tiws = tiws_select(forest, labeled);

  rec.n_train = split.train.size();
  rec.n_test = split.test.size();
  rec.n_labeled = labeled.size();
  rec.trees = forest.size();
  rec.baseline_test_ap = ap_of(forest, split.test, 1);
  rec.tiws_test_ap = ap_of(tiws.forest, split.test, 1);
  rec.baseline_labeled_ap = tiws.selection.prefix_ap.back();
  rec.tiws_labeled_ap = tiws.selection.prefix_ap[tiws.selection.selected_size - 1];
  rec.selected_trees = tiws.selection.selected_size;
  rec.parent_bytes = serialized_size(forest);
  rec.reduced_bytes = serialized_size(tiws.forest);
  rec.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

ForestParams params_from(std::size_t trees, std::size_t subsample, std::size_t max_depth,
                         std::uint64_t seed) {
  ForestParams p;
  p.n_trees = trees;
  p.subsample_size = subsample;
  if (max_depth > 0) p.max_depth = max_depth;
  p.seed = seed;
  p.validate();
  return p;
}

}  // namespace

LabeledDataset load_source(std::string_view source, std::uint64_t seed) {
  constexpr std::string_view kToyPrefix = "toy:";
  if (source.substr(0, kToyPrefix.size()) != kToyPrefix) {
    LabeledDataset ds = load_csv(std::filesystem::path(source));
    ds.validate();
    return ds;
  }
  std::vector<std::string_view> parts;
  std::string_view rest = source.substr(kToyPrefix.size());
  while (true) {
    const auto colon = rest.find(':');
    parts.push_back(rest.substr(0, colon));
    if (colon == std::string_view::npos) break;
    rest.remove_prefix(colon + 1);
  }
  if (parts.size() > 3) throw std::invalid_argument("bad toy source \"" + std::string(source) + "\"");
  const ToyKind kind = parse_toy_kind(parts[0]);
  const std::size_t inliers = parts.size() > 1 ? parse_count(parts[1], "inlier count") : kToyInliers;
  const std::size_t anomalies =
      parts.size() > 2 ? parse_count(parts[2], "anomaly count") : kToyAnomalies;
  return make_toy(kind, inliers, anomalies, derive_seed(seed, hash_name(source)));
}

std::uint64_t cell_seed(std::uint64_t master, std::string_view dataset, double fraction,
                        std::size_t repetition) {
  // Fractions are keyed in parts per million so 0.1 and 0.10 agree.
  const auto ppm = static_cast<std::uint64_t>(std::llround(fraction * 1e6));
  return derive_seed(derive_seed(derive_seed(master, hash_name(dataset)), ppm), repetition);
}

void SweepConfig::validate() const {
  if (datasets.empty()) throw std::invalid_argument("sweep: no datasets");
  if (fractions.empty()) throw std::invalid_argument("sweep: no labeled fractions");
  for (const double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("sweep: fractions must lie in (0, 1]");
  }
  if (repetitions < 1) throw std::invalid_argument("sweep: repetitions must be at least 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("sweep: test fraction must lie in (0, 1)");
  }
  params.validate();
}

SweepOutcome run_sweep(const SweepConfig& config, std::ostream& log) {
  config.validate();
  SweepOutcome outcome;

  std::vector<LabeledDataset> datasets;
  for (const auto& source : config.datasets) {
    try {
      datasets.push_back(load_source(source, config.params.seed));
    } catch (const std::exception& e) {
      outcome.failures.push_back(source + ": " + e.what());
      log << "sweep: skipping " << source << ": " << e.what() << '\n';
    }
  }

  struct Cell {
    std::size_t dataset;
    std::size_t fraction;
    std::size_t repetition;
  };
  std::vector<Cell> cells;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    for (std::size_t f = 0; f < config.fractions.size(); ++f) {
      for (std::size_t r = 0; r < config.repetitions; ++r) cells.push_back({d, f, r});
    }
  }

  std::vector<std::optional<SweepRecord>> results(cells.size());
  std::vector<std::string> errors(cells.size());
  parallel_for(cells.size(), config.threads, [&](std::size_t i) {
    const Cell& c = cells[i];
    try {
      results[i] = run_cell(datasets[c.dataset], config.fractions[c.fraction], c.repetition, config);
    } catch (const std::exception& e) {
      errors[i] = datasets[c.dataset].name + " fraction " + fmt(config.fractions[c.fraction]) +
                  " repetition " + std::to_string(c.repetition) + ": " + e.what();
    }
  });

  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (results[i]) {
      outcome.records.push_back(std::move(*results[i]));
    } else {
      log << "sweep: cell failed: " << errors[i] << '\n';
      outcome.failures.push_back(std::move(errors[i]));
    }
  }
  return outcome;
}

void write_sweep_csv(std::span<const SweepRecord> records, std::ostream& out) {
  out << "dataset,labeled_fraction,repetition,seed,n_train,n_test,n_labeled,trees,"
         "baseline_test_ap,tiws_test_ap,baseline_labeled_ap,tiws_labeled_ap,"
         "selected_trees,parent_bytes,reduced_bytes\n";
  for (const auto& r : records) {
    out << r.dataset << ',' << fmt(r.fraction) << ',' << r.repetition << ',' << r.seed << ','
        << r.n_train << ',' << r.n_test << ',' << r.n_labeled << ',' << r.trees << ','
        << fmt(r.baseline_test_ap) << ',' << fmt(r.tiws_test_ap) << ','
        << fmt(r.baseline_labeled_ap) << ',' << fmt(r.tiws_labeled_ap) << ','
        << r.selected_trees << ',' << r.parent_bytes << ',' << r.reduced_bytes << '\n';
  }
}

void write_sweep_timing_csv(std::span<const SweepRecord> records, std::ostream& out) {
  out << "dataset,labeled_fraction,repetition,wall_ms\n";
  for (const auto& r : records) {
    out << r.dataset << ',' << fmt(r.fraction) << ',' << r.repetition << ',' << fmt(r.wall_ms)
        << '\n';
  }
}

void write_sweep_summary_csv(std::span<const SweepRecord> records, std::ostream& out) {
  out << "dataset,labeled_fraction,runs,median_baseline_test_ap,median_tiws_test_ap,"
         "median_selected_trees\n";
  // Records are grouped already; keep first-seen order.
  for (std::size_t i = 0; i < records.size();) {
    std::vector<double> base, tiws, trees;
    std::size_t j = i;
    for (; j < records.size() && records[j].dataset == records[i].dataset &&
           records[j].fraction == records[i].fraction;
         ++j) {
      base.push_back(records[j].baseline_test_ap);
      tiws.push_back(records[j].tiws_test_ap);
      trees.push_back(static_cast<double>(records[j].selected_trees));
    }
    out << records[i].dataset << ',' << fmt(records[i].fraction) << ',' << (j - i) << ','
        << fmt(median(base)) << ',' << fmt(median(tiws)) << ',' << fmt(median(trees)) << '\n';
    i = j;
  }
}

CurveOutcome run_curves(const CurveConfig& config) {
  if (config.strategies.empty()) throw std::invalid_argument("curves: no strategies");
  if (config.permutations < 1) throw std::invalid_argument("curves: permutations must be >= 1");
  const LabeledDataset ds = load_source(config.dataset, config.params.seed);
  const LabeledDataset labeled =
      sample_labeled_fraction(ds, config.labeled_fraction, derive_seed(config.params.seed, 7));
  const IForest forest = fit_forest(ds.features, config.params, config.threads);
  const Matrix table = path_length_table(forest, labeled.features, config.threads);
  const auto& labels = labeled.require_labels();

  CurveOutcome outcome;
  outcome.per_tree_ap = rank_trees(table, labels, config.threads);
  outcome.full_forest_ap = ap_of(forest, labeled, config.threads);

  for (const auto kind : config.strategies) {
    StrategyCurve curve{kind, {}};
    const std::size_t runs = kind == OrderingStrategy::Kind::kRandom ? config.permutations : 1;
    std::vector<std::vector<double>> all(runs);
    parallel_for(runs, config.threads, [&](std::size_t p) {
      const OrderingStrategy strategy{kind, derive_seed(config.params.seed ^ 0x5eedULL, p)};
      const auto ranking = order_trees(strategy, outcome.per_tree_ap);
      all[p] = prefix_ap_curve(table, ranking.order, labels, forest.normalizer());
    });
    for (std::size_t k = 0; k < forest.size(); ++k) {
      CurveRow row{k + 1, 0.0, all[0][k], all[0][k]};
      double sum = 0.0;
      for (const auto& c : all) {
        sum += c[k];
        row.ap_min = std::min(row.ap_min, c[k]);
        row.ap_max = std::max(row.ap_max, c[k]);
      }
      row.ap_mean = runs == 1 ? all[0][k] : sum / static_cast<double>(runs);
      curve.rows.push_back(row);
    }
    outcome.curves.push_back(std::move(curve));
  }
  return outcome;
}

void write_curve_csv(const StrategyCurve& curve, std::ostream& out) {
  out << "prefix_size,ap_mean,ap_min,ap_max\n";
  for (const auto& r : curve.rows) {
    out << r.prefix_size << ',' << fmt(r.ap_mean) << ',' << fmt(r.ap_min) << ','
        << fmt(r.ap_max) << '\n';
  }
}

std::string selection_json(const SelectionResult& result, std::size_t parent_bytes,
                           std::size_t reduced_bytes) {
  json j;
  j["per_tree_ap"] = result.ranking.per_tree_ap;
  j["order"] = result.ranking.order;
  j["prefix_ap"] = result.prefix_ap;
  j["selected_size"] = result.selected_size;
  j["selected_tree_indices"] = result.selected_tree_indices;
  j["parent_bytes"] = parent_bytes;
  j["reduced_bytes"] = reduced_bytes;
  return j.dump(2);
}

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Isolation Forest with weakly supervised tree selection", "tiws"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::size_t trees = 100;
  std::size_t subsample = 256;
  std::size_t max_depth = 0;
  std::size_t threads = 1;
  std::string out_path;
  auto add_forest_flags = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Master random seed");
    cmd->add_option("--trees", trees, "Number of trees")->check(CLI::PositiveNumber);
    cmd->add_option("--subsample", subsample, "Subsample size per tree")
        ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()));
    cmd->add_option("--max-depth", max_depth, "Depth limit (0 = ceil(log2 psi))");
  };

  auto* train = app.add_subcommand("train", "Fit an unsupervised forest and write a .tiws model");
  std::string train_data;
  train->add_option("--data", train_data, "CSV path or toy:<kind>[:inliers[:anomalies]]")
      ->required();
  train->add_option("--out", out_path, "Output model path")->required();
  train->add_option("--threads", threads, "Worker threads (0 = all cores)");
  add_forest_flags(train);

  auto* select = app.add_subcommand("select", "Rank trees on labeled data and keep the best prefix");
  std::string model_path, labeled_path, json_path;
  select->add_option("--model", model_path, "Input model")->required();
  select->add_option("--labeled", labeled_path, "Labeled CSV")->required();
  select->add_option("--out", out_path, "Reduced model path")->required();
  select->add_option("--json", json_path, "Write the selection report here instead of stdout");
  select->add_option("--threads", threads, "Worker threads (0 = all cores)");

  auto* eval = app.add_subcommand("eval", "Average precision of a model on labeled data");
  std::string eval_data;
  eval->add_option("--model", model_path, "Model path")->required();
  eval->add_option("--data", eval_data, "Labeled CSV")->required();
  eval->add_option("--out", out_path, "Write PR points (threshold,precision,recall) here");
  eval->add_option("--threads", threads, "Worker threads (0 = all cores)");

  auto* curves = app.add_subcommand("curves", "Prefix-forest AP curves per ordering strategy");
  std::string curves_data;
  std::vector<std::string> strategy_names{"best", "worst", "random"};
  double curves_fraction = 1.0;
  std::size_t permutations = 100;
  curves->add_option("--data", curves_data, "CSV path or toy source")->required();
  curves->add_option("--strategies", strategy_names, "best, worst, random")->delimiter(',');
  curves->add_option("--labeled-fraction", curves_fraction, "Labeled share of the data");
  curves->add_option("--permutations", permutations, "Random orderings to aggregate");
  curves->add_option("--out", out_path, "Output directory")->required();
  curves->add_option("--threads", threads, "Worker threads (0 = all cores)");
  add_forest_flags(curves);

  auto* sweep = app.add_subcommand("sweep", "Repeated split/select/evaluate protocol");
  SweepConfig sweep_config;
  std::string config_path;
  sweep->add_option("--config", config_path, "JSON sweep configuration");
  sweep->add_option("--data", sweep_config.datasets, "Dataset sources (repeatable)");
  sweep->add_option("--fractions", sweep_config.fractions, "Labeled fractions")->delimiter(',');
  sweep->add_option("--repetitions", sweep_config.repetitions, "Repetitions per fraction");
  sweep->add_option("--test-fraction", sweep_config.test_fraction, "Held-out share");
  sweep->add_option("--out", out_path, "Output directory")->required();
  sweep->add_option("--threads", threads, "Worker threads (0 = all cores)");
  add_forest_flags(sweep);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInputError;
  }

  try {
    if (*train) {
      const auto params = params_from(trees, subsample, max_depth, seed);
      const LabeledDataset ds = load_source(train_data, seed);
      const IForest forest = fit_forest(ds.features, params, threads);
      save_model(forest, out_path);
      json summary{{"n", ds.size()},
                   {"d", ds.dims()},
                   {"t", forest.size()},
                   {"psi", forest.subsample_size()},
                   {"bytes", serialized_size(forest)},
                   {"model", out_path}};
      out << summary.dump() << '\n';
      return kExitOk;
    }

    if (*select) {
      const IForest forest = load_model(model_path);
      LabeledDataset labeled = load_csv(labeled_path);
      labeled.validate();
      if (labeled.anomaly_count() == 1) {
        err << "warning: the labeled set holds a single anomaly; the tree ranking rests on it "
               "alone\n";
      }
      const TiwsModel tiws = tiws_select(forest, labeled, threads);
      save_model(tiws.forest, out_path);
      const std::string report =
          selection_json(tiws.selection, serialized_size(forest), serialized_size(tiws.forest));
      if (json_path.empty()) {
        out << report << '\n';
      } else {
        auto f = open_out(json_path);
        f << report << '\n';
      }
      return kExitOk;
    }

    if (*eval) {
      const IForest forest = load_model(model_path);
      LabeledDataset ds = load_csv(eval_data);
      ds.validate();
      const auto scores = forest.score_all(ds.features, kAllTrees, threads);
      const auto& labels = ds.require_labels();
      const double ap = average_precision(scores, labels).value;
      if (!out_path.empty()) {
        auto f = open_out(out_path);
        f << "threshold,precision,recall\n";
        for (const auto& p : pr_curve(scores, labels).points) {
          f << fmt(p.threshold) << ',' << fmt(p.precision) << ',' << fmt(p.recall) << '\n';
        }
      }
      json summary{{"average_precision", ap},
                   {"n", ds.size()},
                   {"anomalies", ds.anomaly_count()},
                   {"trees", forest.size()}};
      out << summary.dump() << '\n';
      return kExitOk;
    }

    if (*curves) {
      CurveConfig cfg;
      cfg.dataset = curves_data;
      cfg.strategies.clear();
      for (const auto& s : strategy_names) cfg.strategies.push_back(parse_strategy(s));
      cfg.labeled_fraction = curves_fraction;
      cfg.permutations = permutations;
      cfg.params = params_from(trees, subsample, max_depth, seed);
      cfg.threads = threads;
      const CurveOutcome outcome = run_curves(cfg);
      ensure_dir(out_path);
      {
        auto f = open_out(std::filesystem::path(out_path) / "per_tree_ap.csv");
        f << "tree,ap\n";
        for (std::size_t t = 0; t < outcome.per_tree_ap.size(); ++t) {
          f << t << ',' << fmt(outcome.per_tree_ap[t]) << '\n';
        }
      }
      json summary{{"full_forest_ap", outcome.full_forest_ap}};
      for (const auto& c : outcome.curves) {
        const std::string name(to_string(c.strategy));
        auto f = open_out(std::filesystem::path(out_path) / ("curve_" + name + ".csv"));
        write_curve_csv(c, f);
        summary["peak_" + name] = std::max_element(c.rows.begin(), c.rows.end(),
                                                   [](const CurveRow& a, const CurveRow& b) {
                                                     return a.ap_mean < b.ap_mean;
                                                   })->ap_mean;
      }
      out << summary.dump() << '\n';
      return kExitOk;
    }

    if (*sweep) {
      SweepConfig cfg;
      if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw DataError("cannot open " + config_path);
        json j;
        try {
          j = json::parse(f);
        } catch (const json::exception& e) {
          throw DataError(config_path + ": " + e.what());
        }
        cfg.datasets = j.value("datasets", cfg.datasets);
        cfg.fractions = j.value("fractions", cfg.fractions);
        cfg.repetitions = j.value("repetitions", cfg.repetitions);
        cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
        if (!sweep->count("--seed")) seed = j.value("seed", seed);
        if (!sweep->count("--trees")) trees = j.value("trees", trees);
        if (!sweep->count("--subsample")) subsample = j.value("subsample", subsample);
        if (!sweep->count("--max-depth")) max_depth = j.value("max_depth", max_depth);
      }
      // Flags given on the command line win over the file.
      if (sweep->count("--data")) cfg.datasets = sweep_config.datasets;
      if (sweep->count("--fractions")) cfg.fractions = sweep_config.fractions;
      if (sweep->count("--repetitions")) cfg.repetitions = sweep_config.repetitions;
      if (sweep->count("--test-fraction")) cfg.test_fraction = sweep_config.test_fraction;
      cfg.params = params_from(trees, subsample, max_depth, seed);
      cfg.threads = threads;

      const SweepOutcome outcome = run_sweep(cfg, err);
      ensure_dir(out_path);
      const std::filesystem::path dir(out_path);
      {
        auto f = open_out(dir / "sweep.csv");
        write_sweep_csv(outcome.records, f);
      }
      {
        auto f = open_out(dir / "sweep_summary.csv");
        write_sweep_summary_csv(outcome.records, f);
      }
      {
        auto f = open_out(dir / "sweep_timing.csv");
        write_sweep_timing_csv(outcome.records, f);
      }
      json summary{{"rows", outcome.records.size()}, {"failures", outcome.failures.size()}};
      out << summary.dump() << '\n';
      return outcome.failures.empty() ? kExitOk : kExitPartialFailure;
    }
  } catch (const LabelError& e) {
    err << "error: " << e.what() << '\n';
    return kExitLabelError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitInputError;
}

}  // namespace tiws
