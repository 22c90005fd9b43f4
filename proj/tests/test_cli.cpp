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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mmdnet/config.hpp"
#include "mmdnet/csv.hpp"
#include "mmdnet/runner.hpp"
#include "mmdnet/testing/oracles.hpp"

namespace mmdnet {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("mmdnet_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string config_error(const json& doc) {
  try {
    parse_config_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, DefaultsFilled) {
  const auto specs = parse_config_json(json{{"name", "a"}});
  ASSERT_EQ(specs.size(), 1u);
  const RunSpec& s = specs[0];
  EXPECT_EQ(s.train.adam.learning_rate, 0.0005);
  EXPECT_EQ(s.train.batch_size, 16u);
  EXPECT_EQ(s.train.epochs, 30u);
  EXPECT_EQ(s.train.adaptation.adapt_on, AdaptOn::features);
  EXPECT_EQ(s.train.lambda_max, 1.0);
  EXPECT_EQ(s.train.gamma, 10.0);
  ASSERT_TRUE(s.model.max_norm);
  EXPECT_EQ(*s.model.max_norm, 3.0);
  EXPECT_EQ(s.model.conv_filters, (std::vector<std::size_t>{16, 32}));
  EXPECT_EQ(s.model.input_side, 64u);
  EXPECT_EQ(s.precision, Precision::float32);
}

TEST(Config, ErrorsNameTheKey) {
  EXPECT_NE(config_error({{"name", "a"}, {"conv_filters", json::array()}}).find("conv_filters"), std::string::npos);
  EXPECT_NE(config_error({{"name", "a"}, {"lerning_rate", 0.1}}).find("lerning_rate"), std::string::npos);
  EXPECT_NE(config_error({{"name", "a"}, {"adapt_on", "both"}}).find("adapt_on"), std::string::npos);
  EXPECT_NE(config_error({{"name", "a"}, {"batch_size", -3}}).find("batch_size"), std::string::npos);
  EXPECT_NE(config_error({{"conv_filters", {4}}}).find("name"), std::string::npos);
  EXPECT_NE(config_error({{"runs", {{{"name", "a"}}, {{"name", "a"}}}}}).find("duplicate"), std::string::npos);
  EXPECT_NE(config_error({{"runs", {{{"name", "a"}, {"epochs", "x"}}}}}).find("runs[0].epochs"), std::string::npos);
  EXPECT_NE(config_error({{"name", "a"}, {"kernel_multipliers", {1.0, -1.0}}}).find("kernel_multipliers"),
            std::string::npos);
}

TEST(Config, DefaultsMergeUnderRuns) {
  const auto specs = parse_config_json(
      {{"defaults", {{"epochs", 3}, {"lambda_max", 0.5}}},
       {"runs", {{{"name", "a"}}, {{"name", "b"}, {"epochs", 7}, {"max_norm_cap", nullptr}}}}});
  ASSERT_EQ(specs.size(), 2u);
  EXPECT_EQ(specs[0].train.epochs, 3u);
  EXPECT_EQ(specs[1].train.epochs, 7u);
  EXPECT_EQ(specs[1].train.lambda_max, 0.5);
  EXPECT_FALSE(specs[1].model.max_norm);
}

TEST(Config, DataRootRelativeToConfigFile) {
  const fs::path dir = scratch("cfg");
  write_text(dir / "c.json", R"({"name": "r", "data": {"root": "imgs", "image_side": 32}})");
  const auto specs = parse_config(dir / "c.json");
  const auto& root = std::get<DatasetRoot>(specs[0].data);
  EXPECT_EQ(root.root, dir / "imgs");
  EXPECT_EQ(specs[0].model.input_side, 32u);
  write_text(dir / "bad.json", "{ not json");
  EXPECT_THROW(parse_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(parse_config(dir / "absent.json"), IoError);
}

TEST(Config, ToJsonRoundTrips) {
  RunSpec s = parse_config_json(json{{"name", "x"}, {"conv_filters", {4, 8}}, {"estimator", "unbiased"},
                                     {"kernel_bandwidths", {0.5, 2.0}}, {"seed", 9}})[0];
  const RunSpec back = parse_run(to_json(s), "");
  EXPECT_EQ(to_json(back), to_json(s));
  EXPECT_EQ(back.train.adaptation.kernel.sigmas, (std::vector<double>{0.5, 2.0}));
}

TEST(Config, ShippedConfigsParse) {
  const fs::path dir = fs::path(MMDNET_SOURCE_DIR) / "configs";
  EXPECT_EQ(parse_config(dir / "single_run.json").size(), 1u);
  const auto modes = parse_config(dir / "adapt_modes.json");
  ASSERT_EQ(modes.size(), 4u);
  EXPECT_EQ(modes[2].train.adaptation.adapt_on, AdaptOn::predictions);
  EXPECT_FALSE(modes[3].train.adaptation.kernel.median_heuristic);
  EXPECT_EQ(std::get<DatasetRoot>(parse_config(dir / "dataset_root.json")[0].data).image_side, 224u);
  const auto spec = detail::parse_synthetic(json::parse(read_text(dir / "synthetic_spec.json")), "spec", 0);
  EXPECT_EQ(spec, SyntheticSpec{});
}

TEST(Sweep, BuiltinTableRows) {
  const auto specs = builtin_table1_sweep();
  ASSERT_EQ(specs.size(), 6u);
  const std::vector<std::string> names{"fitting", "mdd_1layer_16", "mdd_2layer_16_32", "mdd_3layer_16_32_64",
                                       "mdd_2layer_4_8", "mdd_2layer_8_16"};
  const std::vector<std::vector<std::size_t>> filters{{16, 32}, {16}, {16, 32}, {16, 32, 64}, {4, 8}, {8, 16}};
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(specs[i].name, names[i]);
    EXPECT_EQ(specs[i].model.conv_filters, filters[i]);
    EXPECT_EQ(specs[i].train.adaptation.adapt_on, i == 0 ? AdaptOn::off : AdaptOn::features);
  }
}

TEST(Csv, EscapesAndRoundTrips) {
  const std::vector<csv::Row> rows{{"a", "b,c", "say \"hi\""}, {"line\nbreak", "", "x"}};
  std::ostringstream out;
  for (const auto& r : rows) csv::write_row(out, r);
  EXPECT_EQ(out.str(), "a,\"b,c\",\"say \"\"hi\"\"\"\r\n\"line\nbreak\",,x\r\n");
  EXPECT_EQ(csv::parse(out.str()), rows);
  EXPECT_EQ(csv::parse("p,q\nr,s\n"), (std::vector<csv::Row>{{"p", "q"}, {"r", "s"}}));
  EXPECT_THROW(csv::parse("\"open"), IoError);
  EXPECT_EQ(csv::format(0.1), "0.1");
  EXPECT_EQ(csv::format(NAN), "");
}

TEST(Report, StatusColumnOnlyOnFailure) {
  const fs::path dir = scratch("report");
  SweepReport rep;
  rep.rows.push_back({"fitting", 0.5, 0.75, 0.6, 0.625, 1, 30, 0.0, "ok"});
  write_report(dir / "ok.csv", rep);
  const auto ok = csv::read_file(dir / "ok.csv");
  EXPECT_EQ(ok[0], report_columns());
  EXPECT_EQ(ok[1], (csv::Row{"fitting", "0.5", "0.75", "0.6", "0.625", "1", "30", "0"}));

  rep.rows.push_back({"broken", NAN, NAN, NAN, NAN, 1, 30, 0.0, "error: boom, really"});
  write_report(dir / "bad.csv", rep);
  const auto bad = csv::read_file(dir / "bad.csv");
  EXPECT_EQ(bad[0].back(), "status");
  EXPECT_EQ(bad[2].back(), "error: boom, really");
  EXPECT_EQ(bad[2][1], "");
  EXPECT_FALSE(rep.all_ok());
}

const char* kReference =
    "name,training_loss,training_accuracy,testing_loss,testing_accuracy,seed,epochs,wall_seconds\n"
    "fitting,0.6337,0.6483,0.6705,0.6134,,,\n"
    "mdd_2layer_16_32,0.4945,0.6534,0.8294,0.6617,,,\n";

TEST(Compare, GainsAndDeltas) {
  const fs::path dir = scratch("compare");
  write_text(dir / "ref.csv", kReference);
  const Comparison same = compare_report(dir / "ref.csv", dir / "ref.csv");
  ASSERT_EQ(same.rows.size(), 2u);
  for (const auto& r : same.rows) {
    for (double d : r.delta) EXPECT_EQ(d, 0.0);
  }
  ASSERT_TRUE(same.rows[1].reference_gain);
  EXPECT_NEAR(*same.rows[1].reference_gain, 0.0483, 1e-12);
  EXPECT_NEAR(*same.rows[1].report_gain, 0.0483, 1e-12);
  EXPECT_FALSE(same.rows[1].fails_baseline);
  EXPECT_FALSE(same.rows[0].report_gain);

  write_text(dir / "mine.csv",
             "name,training_loss,training_accuracy,testing_loss,testing_accuracy,seed,epochs,wall_seconds\r\n"
             "fitting,0.5,0.7,0.6,0.6,0,30,0\r\n"
             "mdd_2layer_16_32,0.5,0.7,0.6,0.55,0,30,0\r\n"
             "extra,1,1,1,1,0,30,0\r\n");
  const Comparison c = compare_report(dir / "mine.csv", dir / "ref.csv");
  ASSERT_EQ(c.rows.size(), 3u);
  EXPECT_NEAR(c.rows[0].delta[3], 0.6 - 0.6134, 1e-12);
  EXPECT_TRUE(c.rows[1].fails_baseline);
  EXPECT_FALSE(c.rows[2].in_reference);
  EXPECT_TRUE(std::isnan(c.rows[2].delta[0]));
  std::ostringstream printed;
  print_comparison(printed, c);
  EXPECT_NE(printed.str().find("does-not-beat-fitting"), std::string::npos);
  EXPECT_NE(printed.str().find("+0.0483"), std::string::npos);
}

TEST(Compare, SchemaMismatch) {
  const fs::path dir = scratch("schema");
  write_text(dir / "ref.csv", kReference);
  write_text(dir / "short.csv", "name,training_loss,training_accuracy,testing_loss\nfitting,1,1,1\n");
  try {
    compare_report(dir / "short.csv", dir / "ref.csv");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("schema"), std::string::npos);
  }
  write_text(dir / "nan.csv",
             "name,training_loss,training_accuracy,testing_loss,testing_accuracy,seed,epochs,wall_seconds\n"
             "fitting,abc,1,1,1,0,1,0\n");
  EXPECT_THROW(compare_report(dir / "nan.csv", dir / "ref.csv"), ConfigError);
}

TEST(Compare, ShippedReferenceTableParses) {
  const fs::path ref = fs::path(MMDNET_SOURCE_DIR) / "data" / "table1_reference.csv";
  const Comparison c = compare_report(ref, ref);
  ASSERT_EQ(c.rows.size(), 6u);
  EXPECT_NEAR(*c.rows[2].reference_gain, 0.6617 - 0.6134, 1e-12);
}

// small end-to-end sweep: outputs land where documented, reruns are byte-identical
TEST(Runner, TinySweepIsReproducible) {
  SyntheticSpec data;
  data.samples_per_class = 6;
  data.side = 32;
  auto specs = builtin_table1_sweep(data, 2, 2);
  specs.resize(2);
  for (auto& s : specs) {
    s.model.conv_filters = {2};
    s.model.feature_units = 4;
    s.train.batch_size = 4;
  }
  RunOptions opts;
  opts.record_timing = false;
  const fs::path a = scratch("sweep_a"), b = scratch("sweep_b");
  const SweepReport ra = run(specs, a, opts);
  opts.parallel = 2;
  run(specs, b, opts);
  ASSERT_TRUE(ra.all_ok()) << ra.rows[0].status;
  EXPECT_EQ(read_text(a / "report.csv"), read_text(b / "report.csv"));
  for (const char* name : {"fitting", "mdd_1layer_16"}) {
    EXPECT_EQ(read_text(a / name / "metrics.csv"), read_text(b / name / "metrics.csv"));
    EXPECT_TRUE(fs::exists(a / name / "run_meta.json"));
    const auto meta = json::parse(read_text(a / name / "run_meta.json"));
    EXPECT_EQ(meta["split"]["source_train"]["total"], 8);
    EXPECT_EQ(meta["config"]["name"], name);
  }
  const auto rows = csv::read_file(a / "fitting" / "metrics.csv");
  EXPECT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][5], "0");  // lambda column, epoch 0
}

TEST(Runner, FailureBecomesStatus) {
  RunSpec s = builtin_table1_sweep()[0];
  s.data = DatasetRoot{"/nonexistent/mmdnet", 16};
  s.model.input_side = 16;
  const fs::path dir = scratch("fail");
  const SweepReport rep = run({s}, dir);
  EXPECT_FALSE(rep.all_ok());
  EXPECT_NE(rep.rows[0].status.find("missing class directory"), std::string::npos);
  EXPECT_NE(read_text(dir / "report.csv").find("status"), std::string::npos);
}

}  // namespace
}  // namespace mmdnet
