// Copyright 2026 The fedtrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// fedtrack: run offline federated training or closed-loop tracking
// experiments and write CSV/JSON reports.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedtrack/error.hpp"
#include "fedtrack/experiment.hpp"

namespace {

using namespace fedtrack;

struct Options {
  int case_id = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> strategies;
  int rounds = -1;
  double duration = -1.0;
  std::string config;
  std::string out = "out";
  std::string pretrained;
};

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

harness::ExperimentSpec resolve(harness::ExperimentSpec spec, const Options& o) {
  if (!o.config.empty()) spec = harness::spec_from_json(read_file(o.config), spec);
  if (o.case_id != 0) {
    if (o.case_id < 1 || o.case_id > 3) throw ConfigError("--case must be 1, 2 or 3");
    spec.case_id = static_cast<sim::CaseId>(o.case_id);
    spec.world.reset();
  }
  if (!o.seeds.empty()) spec.seeds = o.seeds;
  if (o.rounds >= 0) spec.rounds = o.rounds;
  spec.out_dir = o.out;
  spec.validate();
  return spec;
}

std::filesystem::path seed_dir(const harness::ExperimentSpec& spec, std::uint64_t seed) {
  return spec.out_dir / ("seed_" + std::to_string(seed));
}

int run_offline(const Options& o) {
  auto spec = harness::ExperimentSpec::offline_defaults();
  spec = resolve(spec, o);
  if (!o.strategies.empty()) {
    spec.strategies.clear();
    for (const auto& s : o.strategies) spec.strategies.push_back(fl::parse_strategy(s));
  }
  if (o.duration >= 0.0) spec.collect_s = o.duration;
  spec.validate();
  for (auto seed : spec.seeds) {
    const auto r = harness::run_offline_fl(spec, seed);
    harness::write_offline_outputs(seed_dir(spec, seed), spec, r);
    for (const auto& c : r.curves) {
      std::cout << "seed " << seed << ' ' << fl::to_string(c.strategy) << " final test MSE " << c.test_mse.back()
                << '\n';
    }
  }
  return 0;
}

int run_e2e(const Options& o) {
  auto spec = harness::ExperimentSpec::end_to_end_defaults();
  spec = resolve(spec, o);
  if (!o.strategies.empty()) {
    if (o.strategies.size() != 1) throw ConfigError("e2e takes a single --strategy");
    if (o.strategies.front() == "fixed") {
      spec.online_strategy.reset();
    } else {
      spec.online_strategy = fl::parse_strategy(o.strategies.front());
    }
  }
  if (o.duration >= 0.0) spec.duration_s = o.duration;
  spec.validate();

  WeightBlob weights = o.pretrained.empty() ? harness::pretrain(spec) : WeightBlob::load(o.pretrained);
  std::filesystem::create_directories(spec.out_dir);
  if (o.pretrained.empty()) weights.save(spec.out_dir / "pretrained.ftwb");

  for (auto seed : spec.seeds) {
    const auto r = harness::run_end_to_end(spec, seed, weights);
    harness::write_end_to_end_outputs(seed_dir(spec, seed), spec, r);
    const auto& m = r.report;
    std::cout << "seed " << seed << " pred_error " << m.prediction_error << " tracking_distance "
              << m.tracking_distance << " uncertainty " << m.uncertainty << " speed_change " << m.speed_change
              << " total_cost " << m.total_cost << " bytes " << m.comm_bytes << " rate " << m.comm_rate
              << (r.target_lost ? " TARGET-LOST" : "") << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated multi-robot target tracking experiments"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--case", o.case_id, "Team scenario (1, 2 or 3)");
    sub->add_option("--seeds", o.seeds, "Seeds to run");
    sub->add_option("--strategy", o.strategies, "fedavg, fedprox, fedper, dronefl (e2e also: fixed)");
    sub->add_option("--rounds", o.rounds, "Global rounds (offline)");
    sub->add_option("--duration", o.duration, "Simulated seconds (offline: data collection)");
    sub->add_option("--config", o.config, "Experiment JSON")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory");
  };
  auto* offline = app.add_subcommand("offline", "Offline federated training on pre-collected logs");
  add_common(offline);
  auto* e2e = app.add_subcommand("e2e", "Closed-loop tracking with online federated updates");
  add_common(e2e);
  e2e->add_option("--pretrained", o.pretrained, "Weight blob to deploy instead of pretraining")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorCategory::kConfig);
  }

  try {
    return offline->parsed() ? run_offline(o) : run_e2e(o);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.category()) << "]: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error [io]: " << e.what() << '\n';
    return exit_code(ErrorCategory::kIo);
  }
}
