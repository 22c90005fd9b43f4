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

// Command-line front end: train, sweep-table1, gen-data, compare, selftest.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmdnet/mmdnet.hpp"
#include "mmdnet/selftest.hpp"

namespace fs = std::filesystem;
using namespace mmdnet;

namespace {

int finish(const SweepReport& report, const fs::path& out) {
  std::cout << "report: " << (out / "report.csv").string() << '\n';
  return report.all_ok() ? EXIT_SUCCESS : EXIT_FAILURE;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"mmdnet: CNN training with MMD domain adaptation"};
  app.require_subcommand(1);

  RunOptions opts;
  opts.log = &std::cerr;
  bool no_timing = false;

  // train
  auto* train = app.add_subcommand("train", "run every spec in a JSON config");
  std::string config_path, out_dir;
  train->add_option("--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--parallel", opts.parallel, "runs in flight at once")->check(CLI::PositiveNumber);
  train->add_flag("--no-timing", no_timing, "write wall_seconds as 0 (byte-reproducible output)");

  // sweep-table1
  auto* sweep = app.add_subcommand("sweep-table1", "the six-row baseline/adaptation sweep");
  std::string data = "synthetic";
  std::uint64_t seed = 0;
  std::size_t epochs = 30;
  SyntheticSpec synth;
  sweep->add_option("--data", data, "'synthetic' or a dataset root")->capture_default_str();
  sweep->add_option("--out", out_dir, "output directory")->required();
  sweep->add_option("--seed", seed, "run seed")->capture_default_str();
  sweep->add_option("--epochs", epochs, "epochs per run")->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("--parallel", opts.parallel, "runs in flight at once")->check(CLI::PositiveNumber);
  sweep->add_option("--samples-per-class", synth.samples_per_class, "synthetic images per domain and class")
      ->capture_default_str();
  sweep->add_option("--side", synth.side, "synthetic image side / dataset resize target")->capture_default_str();
  sweep->add_flag("--no-timing", no_timing, "write wall_seconds as 0 (byte-reproducible output)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic two-domain dataset");
  std::string spec_path;
  gen->add_option("--spec", spec_path, "synthetic spec (JSON object)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "output root")->required();

  // compare
  auto* compare = app.add_subcommand("compare", "deltas between a report and a reference table");
  std::string report_path, reference_path;
  compare->add_option("--report", report_path)->required()->check(CLI::ExistingFile);
  compare->add_option("--reference", reference_path)->required()->check(CLI::ExistingFile);

  auto* selftest = app.add_subcommand("selftest", "gradient checks and oracle suites");

  CLI11_PARSE(app, argc, argv);
  opts.record_timing = !no_timing;

  try {
    if (*train) {
      return finish(run(parse_config(config_path), out_dir, opts), out_dir);
    }
    if (*sweep) {
      DataSource source;
      if (data == "synthetic") {
        synth.seed = seed;
        validate(synth);
        source = synth;
      } else {
        source = DatasetRoot{data, sweep->count("--side") ? synth.side : kDefaultImageSide};
      }
      return finish(run(builtin_table1_sweep(source, seed, epochs), out_dir, opts), out_dir);
    }
    if (*gen) {
      std::ifstream in(spec_path);
      const nlohmann::json doc = nlohmann::json::parse(in);
      const SyntheticSpec spec = detail::parse_synthetic(doc, "spec", 0);
      const DomainManifests m = generate_synthetic(spec, out_dir);
      std::cout << "wrote " << m.source.size() + m.target.size() << " images under " << out_dir << '\n';
      return EXIT_SUCCESS;
    }
    if (*compare) {
      print_comparison(std::cout, compare_report(report_path, reference_path));
      return EXIT_SUCCESS;
    }
    if (*selftest) {
      return run_selftest(std::cout) ? EXIT_SUCCESS : EXIT_FAILURE;
    }
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << spec_path << ": " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return EXIT_FAILURE;
}
