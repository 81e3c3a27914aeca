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

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

namespace fedtrack::harness {

using Vec2 = Eigen::Vector2d;

// Raw per-step records of a closed-loop run.
struct PredictionSample {
  int robot = 0;
  int target = 0;
  std::int64_t tick = 0;  // tick the prediction was made at
  Vec2 predicted = Vec2::Zero();
  Vec2 truth = Vec2::Zero();  // ground truth one step later
};

struct DistanceSample {
  int robot = 0;
  int target = 0;
  std::int64_t tick = 0;
  double dist2 = 0.0;
};

struct TraceSample {
  int target = 0;
  std::int64_t tick = 0;
  double trace = 0.0;
};

struct ControlSample {
  int robot = 0;
  std::int64_t tick = 0;
  Vec2 u = Vec2::Zero();
  Vec2 previous = Vec2::Zero();
  double J = 0.0;
  bool planned = false;  // false while the robot had no live track
};

struct RunLog {
  std::vector<PredictionSample> predictions;
  std::vector<DistanceSample> distances;
  std::vector<TraceSample> traces;
  std::vector<ControlSample> controls;
};

struct PairMetrics {
  int robot = 0;
  int target = 0;
  double prediction_error = 0.0;
  std::size_t prediction_samples = 0;
  double tracking_distance = 0.0;
  std::size_t distance_samples = 0;
};

struct MetricsReport {
  double prediction_error = 0.0;   // m^2
  double tracking_distance = 0.0;  // m^2
  double uncertainty = 0.0;        // mean Trace(P), m^2 scale
  double speed_change = 0.0;       // mean |u_t - u_{t-1}|^2
  double total_cost = 0.0;         // mean selected J over planned steps
  std::size_t prediction_samples = 0;
  std::size_t distance_samples = 0;
  std::size_t trace_samples = 0;
  std::size_t control_samples = 0;
  std::size_t planned_samples = 0;
  std::size_t comm_bytes = 0;
  double comm_rate = 0.0;  // bytes per second
  double duration_s = 0.0;
  bool target_lost = false;
  std::vector<PairMetrics> pairs;
};

/// Aggregates every record with tick >= first_tick. Empty input yields an
/// all-zero report.
MetricsReport compute_metrics(const RunLog& log, std::int64_t first_tick = 0);

void write_metrics_csv(std::ostream& os, const MetricsReport& report);

}  // namespace fedtrack::harness
