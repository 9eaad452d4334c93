#include "tiws/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "tiws/random.hpp"

namespace tiws {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::string where(const std::string& name, std::size_t line, std::size_t column) {
  return name + ": line " + std::to_string(line) + ", column " + std::to_string(column);
}

std::size_t rounded(double x) { return static_cast<std::size_t>(std::llround(x)); }

void check_fraction(double f, const char* what) {
  if (!(f > 0.0 && f <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " must lie in (0, 1]");
  }
}

// Indices of each class, in row order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> by_class(
    const std::vector<std::uint8_t>& labels) {
  std::vector<std::size_t> anomalies, inliers;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] ? anomalies : inliers).push_back(i);
  }
  return {std::move(anomalies), std::move(inliers)};
}

// Moves k randomly chosen members of `from` into a new vector; both end up in
// ascending order.
std::vector<std::size_t> take_random(std::vector<std::size_t>& from, std::size_t k, Rng& rng) {
  rng.shuffle(from);
  std::vector<std::size_t> taken(from.begin(), from.begin() + static_cast<std::ptrdiff_t>(k));
  from.erase(from.begin(), from.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(taken.begin(), taken.end());
  std::sort(from.begin(), from.end());
  return taken;
}

std::vector<std::size_t> merged(std::vector<std::size_t> a, const std::vector<std::size_t>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  return a;
}

}  // namespace

const std::vector<std::uint8_t>& LabeledDataset::require_labels() const {
  if (!labels) throw DataError(name + ": dataset has no labels");
  return *labels;
}

std::size_t LabeledDataset::anomaly_count() const {
  const auto& l = require_labels();
  return static_cast<std::size_t>(std::count(l.begin(), l.end(), std::uint8_t{1}));
}

double LabeledDataset::contamination() const {
  return static_cast<double>(anomaly_count()) / static_cast<double>(size());
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows,
                                      std::string subset_name) const {
  LabeledDataset out{std::move(subset_name), features.select_rows(rows), std::nullopt};
  if (labels) {
    std::vector<std::uint8_t> picked;
    picked.reserve(rows.size());
    for (const std::size_t r : rows) picked.push_back((*labels)[r]);
    out.labels = std::move(picked);
  }
  return out;
}

void LabeledDataset::validate() const {
  if (size() == 0) throw DataError(name + ": no rows");
  if (dims() == 0) throw DataError(name + ": no feature columns");
  if (labels) {
    if (labels->size() != size()) throw DataError(name + ": label count mismatch");
    for (const auto l : *labels) {
      if (l > 1) throw DataError(name + ": labels must be 0 or 1");
    }
  }
  for (const double v : features.values()) {
    if (!std::isfinite(v)) throw DataError(name + ": non-finite feature value");
  }
}

LabeledDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_csv(in, path.stem().string());
}

LabeledDataset parse_csv(std::istream& in, std::string name) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw DataError(name + ": empty file");

  const auto header = split_fields(line);
  if (header.back() != "label") {
    throw DataError(name + ": last header column must be named \"label\"");
  }
  width = header.size() - 1;
  if (width == 0) throw DataError(name + ": no feature columns");

  std::vector<double> values;
  std::vector<std::uint8_t> labels;
  std::vector<double> row(width);
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != width + 1) {
      throw DataError(name + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(width + 1));
    }
    for (std::size_t j = 0; j < width; ++j) {
      const auto f = fields[j];
      double v = 0.0;
      const auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || ec != std::errc{} || end != f.data() + f.size() || !std::isfinite(v)) {
        throw DataError(where(name, line_no, j + 1) + ": not a finite number: \"" +
                        std::string(f) + "\"");
      }
      row[j] = v;
    }
    const auto l = fields[width];
    if (l == "0" || l == "0.0") {
      labels.push_back(0);
    } else if (l == "1" || l == "1.0") {
      labels.push_back(1);
    } else {
      throw DataError(where(name, line_no, width + 1) + ": label must be 0 or 1, got \"" +
                      std::string(l) + "\"");
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  if (labels.empty()) throw DataError(name + ": no data rows");

  const std::size_t n = labels.size();
  return {std::move(name), Matrix(n, width, std::move(values)), std::move(labels)};
}

void write_csv(const LabeledDataset& ds, std::ostream& out) {
  for (std::size_t j = 0; j < ds.dims(); ++j) out << 'x' << j << ',';
  out << "label\n";
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (const double v : ds.features.row(i)) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << (ds.labels ? static_cast<int>((*ds.labels)[i]) : 0) << '\n';
  }
}

void write_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(ds, out);
  if (!out) throw DataError("write failed: " + path.string());
}

std::string_view to_string(ToyKind kind) {
  switch (kind) {
    case ToyKind::kCentralCluster: return "central_cluster";
    case ToyKind::kDoubleCluster: return "double_cluster";
    case ToyKind::kSquareToroid: return "square_toroid";
  }
  return "unknown";
}

ToyKind parse_toy_kind(std::string_view text) {
  for (const auto k : {ToyKind::kCentralCluster, ToyKind::kDoubleCluster, ToyKind::kSquareToroid}) {
    if (text == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown toy dataset \"" + std::string(text) + "\"");
}

LabeledDataset make_toy(ToyKind kind, std::size_t n_inliers, std::size_t n_anomalies,
                        std::uint64_t seed) {
  if (n_inliers < 10) throw std::invalid_argument("make_toy: need at least 10 inliers");
  if (n_anomalies < 1) throw std::invalid_argument("make_toy: need at least 1 anomaly");
  Rng rng(seed);
  Matrix x(n_inliers + n_anomalies, 2);
  std::vector<std::uint8_t> labels(n_inliers, 0);
  labels.resize(n_inliers + n_anomalies, 1);

  auto put = [&](std::size_t i, double a, double b) {
    x(i, 0) = a;
    x(i, 1) = b;
  };

  switch (kind) {
    case ToyKind::kCentralCluster:
      for (std::size_t i = 0; i < n_inliers; ++i) put(i, rng.normal(), rng.normal());
      for (std::size_t i = 0; i < n_anomalies; ++i) {
        // Area-uniform radius on the ring.
        const double r2lo = toy::kCentralRingInner * toy::kCentralRingInner;
        const double r2hi = toy::kCentralRingOuter * toy::kCentralRingOuter;
        const double r = std::sqrt(rng.uniform(r2lo, r2hi));
        const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        put(n_inliers + i, r * std::cos(theta), r * std::sin(theta));
      }
      break;
    case ToyKind::kDoubleCluster:
      for (std::size_t i = 0; i < n_inliers; ++i) {
        const double c = (i % 2 == 0) ? -toy::kDoubleCenter : toy::kDoubleCenter;
        put(i, c + rng.normal(), c + rng.normal());
      }
      for (std::size_t i = 0; i < n_anomalies; ++i) {
        double a, b;
        do {
          a = rng.uniform(-toy::kDoubleBox, toy::kDoubleBox);
          b = rng.uniform(-toy::kDoubleBox, toy::kDoubleBox);
        } while (std::hypot(a - toy::kDoubleCenter, b - toy::kDoubleCenter) <
                     toy::kDoubleClearance ||
                 std::hypot(a + toy::kDoubleCenter, b + toy::kDoubleCenter) <
                     toy::kDoubleClearance);
        put(n_inliers + i, a, b);
      }
      break;
    case ToyKind::kSquareToroid:
      for (std::size_t i = 0; i < n_inliers; ++i) {
        double a, b;
        do {
          a = rng.uniform(-toy::kFrameOuter, toy::kFrameOuter);
          b = rng.uniform(-toy::kFrameOuter, toy::kFrameOuter);
        } while (std::max(std::abs(a), std::abs(b)) < toy::kFrameInner);
        put(i, a, b);
      }
      for (std::size_t i = 0; i < n_anomalies; ++i) {
        put(n_inliers + i, rng.uniform(-toy::kHoleCore, toy::kHoleCore),
            rng.uniform(-toy::kHoleCore, toy::kHoleCore));
      }
      break;
  }
  return {std::string(to_string(kind)), std::move(x), std::move(labels)};
}

DatasetSplit stratified_split(const LabeledDataset& ds, const SplitSpec& spec) {
  check_fraction(spec.test_fraction, "test_fraction");
  auto [anomalies, inliers] = by_class(ds.require_labels());
  if (anomalies.size() < 2 || inliers.size() < 2) {
    throw LabelError(ds.name + ": stratified split needs at least 2 members per class");
  }
  const std::size_t n = ds.size();
  const std::size_t n_test = std::clamp<std::size_t>(rounded(spec.test_fraction * n), 2, n - 2);
  const std::size_t n_train = n - n_test;
  const double contamination = static_cast<double>(anomalies.size()) / static_cast<double>(n);
  const std::size_t train_anomalies = std::clamp<std::size_t>(
      rounded(contamination * static_cast<double>(n_train)), 1, anomalies.size() - 1);
  if (train_anomalies >= n_train || n_train - train_anomalies > inliers.size() - 1) {
    throw LabelError(ds.name + ": split leaves a part without one of the classes");
  }

  Rng rng(spec.seed);
  const auto train_a = take_random(anomalies, train_anomalies, rng);
  const auto train_i = take_random(inliers, n_train - train_anomalies, rng);

  DatasetSplit out;
  out.train_rows = merged(train_a, train_i);
  out.test_rows = merged(anomalies, inliers);
  out.train = ds.subset(out.train_rows, ds.name + "_train");
  out.test = ds.subset(out.test_rows, ds.name + "_test");
  return out;
}

LabeledDataset sample_labeled_fraction(const LabeledDataset& train, double fraction,
                                       std::uint64_t seed) {
  check_fraction(fraction, "labeled fraction");
  const auto& labels = train.require_labels();
  if (fraction == 1.0) return train;
  const std::size_t n = train.size();
  const std::size_t n_pick = rounded(fraction * static_cast<double>(n));
  const std::size_t n_anom = rounded(train.contamination() * static_cast<double>(n_pick));
  if (n_anom == 0) {
    throw LabelError(train.name + ": labeled fraction " + std::to_string(fraction) +
                     " is too small to include an anomaly");
  }
  if (n_anom >= n_pick) {
    throw LabelError(train.name + ": labeled fraction " + std::to_string(fraction) +
                     " is too small to include an inlier");
  }
  auto [anomalies, inliers] = by_class(labels);
  if (n_anom > anomalies.size() || n_pick - n_anom > inliers.size()) {
    throw LabelError(train.name + ": not enough rows per class for the labeled fraction");
  }
  Rng rng(seed);
  const auto picked_a = take_random(anomalies, n_anom, rng);
  const auto picked_i = take_random(inliers, n_pick - n_anom, rng);
  return train.subset(merged(picked_a, picked_i), train.name + "_labeled");
}

}  // namespace tiws
