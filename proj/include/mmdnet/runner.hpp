/* Copyright 2026 The mmdnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mmdnet/config.hpp"
#include "mmdnet/csv.hpp"
#include "mmdnet/dataset.hpp"
#include "mmdnet/errors.hpp"
#include "mmdnet/model.hpp"
#include "mmdnet/synthetic.hpp"
#include "mmdnet/train.hpp"

namespace mmdnet {

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{"name",  "training_loss", "training_accuracy", "testing_loss",
                                             "testing_accuracy", "seed", "epochs", "wall_seconds"};
  return cols;
}

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{"epoch",         "train_loss", "train_accuracy", "test_loss",
                                             "test_accuracy", "lambda",     "mmd_value",      "wall_seconds"};
  return cols;
}

struct ReportRow {
  std::string name;
  double training_loss = NAN;
  double training_accuracy = NAN;
  double testing_loss = NAN;
  double testing_accuracy = NAN;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double wall_seconds = 0.0;
  std::string status = "ok";  // "ok" or the failure message
};

struct SweepReport {
  std::vector<ReportRow> rows;

  bool all_ok() const {
    return std::all_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.status == "ok"; });
  }
};

struct RunOptions {
  std::size_t parallel = 1;
  /// false writes wall_seconds as 0 everywhere (byte-reproducible outputs).
  bool record_timing = true;
  std::ostream* log = nullptr;
};

inline csv::Row to_row(const MetricsRecord& r) {
  return {std::to_string(r.epoch), csv::format(r.train_loss),    csv::format(r.train_accuracy),
          csv::format(r.test_loss), csv::format(r.test_accuracy), csv::format(r.lambda),
          csv::format(r.mmd_value), csv::format(r.wall_seconds, 6)};
}

/// Writes report.csv. A status column is appended only when some run failed.
inline void write_report(const std::filesystem::path& path, const SweepReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const bool flag = !report.all_ok();
  csv::Row header = report_columns();
  if (flag) header.push_back("status");
  csv::write_row(out, header);
  for (const ReportRow& r : report.rows) {
    csv::Row row{r.name,
                 csv::format(r.training_loss),
                 csv::format(r.training_accuracy),
                 csv::format(r.testing_loss),
                 csv::format(r.testing_accuracy),
                 std::to_string(r.seed),
                 std::to_string(r.epochs),
                 csv::format(r.wall_seconds, 6)};
    if (flag) row.push_back(r.status);
    csv::write_row(out, row);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

namespace detail {

inline json split_json(const DatasetManifest& m) {
  return {{"total", m.size()},
          {"diseased", m.count(Label::diseased)},
          {"healthy", m.count(Label::healthy)}};
}

template <typename T>
ReportRow run_typed(const RunSpec& spec, const RunOptions& opts) {
  namespace fs = std::filesystem;
  const auto start = std::chrono::steady_clock::now();
  ReportRow row;
  row.name = spec.name;
  row.seed = spec.train.seed;
  row.epochs = spec.train.epochs;

  const fs::path dir = spec.output_dir;
  fs::create_directories(dir);

  DomainManifests manifests;
  if (const auto* syn = std::get_if<SyntheticSpec>(&spec.data)) {
    const fs::path data_dir = dir / "data";
    fs::remove_all(data_dir);
    manifests = generate_synthetic(*syn, data_dir);
  } else {
    manifests = scan_dataset(std::get<DatasetRoot>(spec.data).root);
  }
  const SplitManifests source_split = split(manifests.source, spec.train_fraction, spec.train.seed);
  const SplitManifests target_split = split(manifests.target, spec.train_fraction, spec.train.seed);

  json meta;
  meta["config"] = to_json(spec);
  meta["seed"] = spec.train.seed;
  meta["split"] = {
      {"train_fraction", spec.train_fraction},
      {"stratified", true},
      {"source_train", split_json(source_split.train)},
      {"source_held_out", split_json(source_split.test)},
      {"target_train_unlabeled", split_json(target_split.train)},
      {"target_test", split_json(target_split.test)},
  };
  meta["metrics"] = {
      {"training", "source-domain train split, eval mode"},
      {"testing", "target-domain held-out split, eval mode"},
      {"fitting_baseline", "adapt_on = off: source-only supervised training, same evaluation splits"},
  };
  {
    std::ofstream out(dir / "run_meta.json");
    out << meta.dump(2) << '\n';
  }

  std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw IoError("cannot write " + (dir / "metrics.csv").string());
  csv::write_row(metrics, metrics_columns());

  ImageLoader<T> loader(image_side(spec.data));
  Model<T> model = build_model<T>(spec.model, spec.train.seed);
  TrainData<T> data{source_split.train, target_split.train, target_split.test, &loader};
  TrainConfig cfg = spec.train;
  cfg.record_timing = opts.record_timing;

  FitHooks hooks;
  hooks.on_epoch_end = [&](const MetricsRecord& r) {
    csv::write_row(metrics, to_row(r));
    metrics.flush();
  };
  const std::vector<MetricsRecord> records = fit(model, data, cfg, hooks);
  const MetricsRecord& last = records.back();
  row.training_loss = last.train_loss;
  row.training_accuracy = last.train_accuracy;
  row.testing_loss = last.test_loss;
  row.testing_accuracy = last.test_accuracy;
  if (opts.record_timing) {
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return row;
}

}  // namespace detail

/// Trains one spec into spec.output_dir. Failures are reported in the
/// row's status, not thrown.
inline ReportRow run_one(const RunSpec& spec, const RunOptions& opts = {}) {
  try {
    return spec.precision == Precision::float64 ? detail::run_typed<double>(spec, opts)
                                                : detail::run_typed<float>(spec, opts);
  } catch (const std::exception& e) {
    ReportRow row;
    row.name = spec.name;
    row.seed = spec.train.seed;
    row.epochs = spec.train.epochs;
    row.status = std::string("error: ") + e.what();
    return row;
  }
}

/// Runs every spec (up to opts.parallel at a time, each single-threaded)
/// into `<out>/<name>/`, then writes `<out>/report.csv` in spec order.
inline SweepReport run(std::vector<RunSpec> specs, const std::filesystem::path& out, const RunOptions& opts = {}) {
  std::set<std::string> names;
  for (auto& s : specs) {
    if (!names.insert(s.name).second) throw ConfigError("name: duplicate run name '" + s.name + "'");
    s.output_dir = out / s.name;
  }
  std::filesystem::create_directories(out);
  SweepReport report;
  report.rows.resize(specs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      report.rows[i] = run_one(specs[i], opts);
      if (opts.log) {
        std::lock_guard lock(log_mutex);
        const ReportRow& r = report.rows[i];
        *opts.log << r.name << ": " << (r.status == "ok" ? "test_accuracy " + csv::format(r.testing_accuracy, 4) : r.status)
                  << '\n';
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(opts.parallel, 1, std::max<std::size_t>(specs.size(), 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  write_report(out / "report.csv", report);
  return report;
}

/// Side-by-side of a produced report against a reference table.
struct ComparisonRow {
  std::string name;
  std::array<double, 4> delta{};  // report - reference, per metric column
  bool in_reference = false;
  std::optional<double> report_gain;     // testing_accuracy - fitting's, report side
  std::optional<double> reference_gain;  // same on the reference side
  bool fails_baseline = false;           // adapted row not above fitting in the report
};

struct Comparison {
  std::vector<ComparisonRow> rows;
};

namespace detail {

struct ParsedReport {
  std::vector<std::string> names;
  std::map<std::string, std::array<double, 4>> metrics;
};

inline double parse_metric(const std::string& s) {
  if (s.empty()) return NAN;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ConfigError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("report: bad number '" + s + "'");
  }
}

inline ParsedReport read_report(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw ConfigError(path.string() + ": empty report");
  const auto& cols = report_columns();
  const csv::Row& header = rows.front();
  if (header.size() < cols.size() || !std::equal(cols.begin(), cols.end(), header.begin())) {
    std::string expected;
    for (const auto& c : cols) expected += (expected.empty() ? "" : ",") + c;
    throw ConfigError(path.string() + ": schema mismatch, expected columns " + expected);
  }
  ParsedReport out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const csv::Row& r = rows[i];
    if (r.size() == 1 && r[0].empty()) continue;
    if (r.size() != header.size()) throw ConfigError(path.string() + ": row " + std::to_string(i) + " has wrong width");
    out.names.push_back(r[0]);
    out.metrics[r[0]] = {parse_metric(r[1]), parse_metric(r[2]), parse_metric(r[3]), parse_metric(r[4])};
  }
  return out;
}

}  // namespace detail

inline constexpr const char* kBaselineName = "fitting";

inline Comparison compare_report(const std::filesystem::path& report_path, const std::filesystem::path& reference_path) {
  const auto report = detail::read_report(report_path);
  const auto reference = detail::read_report(reference_path);
  auto baseline = [](const detail::ParsedReport& p) -> std::optional<double> {
    auto it = p.metrics.find(kBaselineName);
    if (it == p.metrics.end()) return std::nullopt;
    return it->second[3];
  };
  const auto report_base = baseline(report);
  const auto reference_base = baseline(reference);

  Comparison out;
  for (const std::string& name : report.names) {
    ComparisonRow row;
    row.name = name;
    const auto& mine = report.metrics.at(name);
    auto ref = reference.metrics.find(name);
    row.in_reference = ref != reference.metrics.end();
    for (std::size_t k = 0; k < 4; ++k) row.delta[k] = row.in_reference ? mine[k] - ref->second[k] : NAN;
    if (name != kBaselineName) {
      if (report_base) {
        row.report_gain = mine[3] - *report_base;
        row.fails_baseline = !(*row.report_gain > 0.0);
      }
      if (reference_base && row.in_reference) row.reference_gain = ref->second[3] - *reference_base;
    }
    out.rows.push_back(row);
  }
  return out;
}

inline void print_comparison(std::ostream& out, const Comparison& c) {
  auto num = [](std::optional<double> v) {
    if (!v || std::isnan(*v)) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.4f", *v);
    return std::string(buf);
  };
  out << std::left << std::setw(22) << "name" << std::right << std::setw(12) << "d_trn_loss" << std::setw(12)
      << "d_trn_acc" << std::setw(12) << "d_tst_loss" << std::setw(12) << "d_tst_acc" << std::setw(14) << "gain(report)"
      << std::setw(14) << "gain(ref)" << "  flag\n";
  for (const auto& r : c.rows) {
    out << std::left << std::setw(22) << r.name << std::right;
    for (double d : r.delta) out << std::setw(12) << num(d);
    out << std::setw(14) << num(r.report_gain) << std::setw(14) << num(r.reference_gain)
        << (r.fails_baseline ? "  does-not-beat-fitting" : "") << '\n';
  }
}

}  // namespace mmdnet
