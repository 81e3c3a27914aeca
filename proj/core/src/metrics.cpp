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

#include "fedtrack/metrics.hpp"

#include <iomanip>
#include <map>
#include <ostream>
#include <utility>

namespace fedtrack::harness {

namespace {

double mean(double sum, std::size_t n) { return n == 0 ? 0.0 : sum / static_cast<double>(n); }

struct Acc {
  double pred = 0.0;
  std::size_t n_pred = 0;
  double dist = 0.0;
  std::size_t n_dist = 0;
};

}  // namespace

MetricsReport compute_metrics(const RunLog& log, std::int64_t first_tick) {
  MetricsReport r;
  std::map<std::pair<int, int>, Acc> pairs;
  double pred = 0.0, dist = 0.0, trace = 0.0, speed = 0.0, cost = 0.0;

  for (const auto& s : log.predictions) {
    if (s.tick < first_tick) continue;
    const double e = (s.predicted - s.truth).squaredNorm();
    pred += e;
    ++r.prediction_samples;
    auto& a = pairs[{s.robot, s.target}];
    a.pred += e;
    ++a.n_pred;
  }
  for (const auto& s : log.distances) {
    if (s.tick < first_tick) continue;
    dist += s.dist2;
    ++r.distance_samples;
    auto& a = pairs[{s.robot, s.target}];
    a.dist += s.dist2;
    ++a.n_dist;
  }
  for (const auto& s : log.traces) {
    if (s.tick < first_tick) continue;
    trace += s.trace;
    ++r.trace_samples;
  }
  for (const auto& s : log.controls) {
    if (s.tick < first_tick) continue;
    speed += (s.u - s.previous).squaredNorm();
    ++r.control_samples;
    if (s.planned) {
      cost += s.J;
      ++r.planned_samples;
    }
  }

  r.prediction_error = mean(pred, r.prediction_samples);
  r.tracking_distance = mean(dist, r.distance_samples);
  r.uncertainty = mean(trace, r.trace_samples);
  r.speed_change = mean(speed, r.control_samples);
  r.total_cost = mean(cost, r.planned_samples);
  for (const auto& [key, a] : pairs) {
    r.pairs.push_back({key.first, key.second, mean(a.pred, a.n_pred), a.n_pred, mean(a.dist, a.n_dist), a.n_dist});
  }
  return r;
}

void write_metrics_csv(std::ostream& os, const MetricsReport& report) {
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(12);
  os << "scope,robot,target,prediction_error,tracking_distance,uncertainty,speed_change,total_cost,comm_bytes,"
        "comm_rate,target_lost\n";
  os << "all,-1,-1," << report.prediction_error << ',' << report.tracking_distance << ',' << report.uncertainty
     << ',' << report.speed_change << ',' << report.total_cost << ',' << report.comm_bytes << ','
     << report.comm_rate << ',' << (report.target_lost ? 1 : 0) << '\n';
  for (const auto& p : report.pairs) {
    os << "pair," << p.robot << ',' << p.target << ',' << p.prediction_error << ',' << p.tracking_distance
       << ",,,,,,\n";
  }
  os.flags(flags);
  os.precision(precision);
}

}  // namespace fedtrack::harness
