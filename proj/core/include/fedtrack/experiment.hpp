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

// Experiment orchestration: team scenarios, offline federated training on
// pre-collected logs, and the closed detect/predict/fuse/plan/act loop.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedtrack/federated.hpp"
#include "fedtrack/fusion.hpp"
#include "fedtrack/metrics.hpp"
#include "fedtrack/perception.hpp"
#include "fedtrack/planner.hpp"
#include "fedtrack/predictor.hpp"
#include "fedtrack/sim.hpp"

namespace fedtrack::harness {

enum class Mode { kOfflineFL, kEndToEnd };

/// Team scenario with random target placement. Altitudes cycle through
/// 10, 15, 20, 25 m; robots start next to their first target.
sim::WorldConfig build_case(sim::CaseId case_id, std::uint64_t seed);

/// Two robots sharing one target. With `heterogeneous` the robots fly at 10 m
/// and 25 m, otherwise both at `homogeneous_altitude`.
sim::WorldConfig shared_target_world(std::uint64_t seed, bool heterogeneous, double homogeneous_altitude = 10.0);

struct ExperimentSpec {
  Mode mode = Mode::kOfflineFL;
  sim::CaseId case_id = sim::CaseId::kCase1;
  std::optional<sim::WorldConfig> world;  // replaces the case scenario when set
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  predictor::PredictorConfig model;
  perception::CameraModel camera;

  // Offline.
  std::vector<fl::Strategy> strategies = {fl::Strategy::kFedAvg, fl::Strategy::kFedProx, fl::Strategy::kFedPer,
                                          fl::Strategy::kDroneFL};
  int rounds = 50;
  double collect_s = 120.0;      // scripted data collection per seed
  double follow_offset = 5.0;    // follower standoff radius bound, m
  double follow_hold_s = 4.0;    // a new random standoff is drawn this often; 0 keeps it fixed
  double split = 0.8;            // chronological train fraction per robot
  int local_epochs = 10;
  std::size_t batch_size = 32;
  predictor::AdamConfig adam;
  double prox_mu = 0.01;

  // End-to-end.
  double duration_s = 500.0;
  std::optional<fl::Strategy> online_strategy = fl::Strategy::kDroneFL;  // nullopt: fixed weights
  double round_period_s = 100.0;
  int warmup_steps = 10;
  double target_lost_s = 30.0;
  bool oracle_predictions = false;  // robots report ground truth instead of the network output
  bool fuse_all_steps = false;      // fuse every predicted step, not just the first
  planner::PlannerConfig planner;
  fusion::FusionConfig fusion;

  // Pretraining for end-to-end runs.
  std::uint64_t pretrain_seed = 1000;
  double pretrain_pixel_noise = 1.0;
  int pretrain_rounds = 10;

  std::filesystem::path out_dir;

  /// Mode-specific defaults (window lengths).
  static ExperimentSpec offline_defaults();
  static ExperimentSpec end_to_end_defaults();

  void validate() const;
};

std::string spec_to_json(const ExperimentSpec& spec);
/// Fields absent from the JSON keep the values of `base`.
ExperimentSpec spec_from_json(const std::string& text, ExperimentSpec base);

/// World actually used for a seed: the explicit world with its seed replaced,
/// or the case scenario.
sim::WorldConfig resolve_world(const ExperimentSpec& spec, std::uint64_t seed);

struct CollectedData {
  std::map<int, std::vector<SampleWindow>> train;  // per robot
  std::map<int, std::vector<SampleWindow>> test;
};

/// Scripted follower run with ground-truth labels, split chronologically.
CollectedData collect_offline_data(const ExperimentSpec& spec, const sim::WorldConfig& world);

struct StrategyCurve {
  fl::Strategy strategy = fl::Strategy::kDroneFL;
  std::vector<double> test_mse;  // index 0 before any round, then one per round
  WeightBlob final_global;
};

struct OfflineResult {
  std::uint64_t seed = 0;
  std::vector<StrategyCurve> curves;
  std::vector<std::string> round_log;  // JSON lines
  fl::CommLedger ledger;
};

OfflineResult run_offline_fl(const ExperimentSpec& spec, std::uint64_t seed);

/// DroneFL weights trained offline on a separate world for transfer.
WeightBlob pretrain(const ExperimentSpec& spec);

struct EndToEndResult {
  std::uint64_t seed = 0;
  MetricsReport report;
  RunLog log;
  fl::CommLedger ledger;
  std::vector<std::string> round_log;
  std::string tracks_csv;
  std::string planner_csv;
  std::int64_t steps = 0;
  int rounds = 0;
  std::size_t blob_bytes = 0;
  std::size_t feedback_messages = 0;
  bool target_lost = false;
};

EndToEndResult run_end_to_end(const ExperimentSpec& spec, std::uint64_t seed, const WeightBlob& pretrained);

/// Steady-state byte count: two blob transfers per robot per round, one
/// control per robot per step, plus the counted prediction and feedback
/// messages.
double expected_bytes(const EndToEndResult& result, int robots, int future);

// Output files.
void write_offline_outputs(const std::filesystem::path& dir, const ExperimentSpec& spec, const OfflineResult& r);
void write_end_to_end_outputs(const std::filesystem::path& dir, const ExperimentSpec& spec,
                              const EndToEndResult& r);
void write_offline_metrics_csv(std::ostream& os, const OfflineResult& r);

}  // namespace fedtrack::harness
