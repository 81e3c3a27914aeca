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

// Hot paths of one closed-loop tick and one local training step.

#include <map>
#include <random>
#include <set>
#include <vector>

#include <benchmark/benchmark.h>

#include "fedtrack/experiment.hpp"

namespace {

using namespace fedtrack;
using Vec2 = Eigen::Vector2d;

SampleWindow window(const predictor::PredictorConfig& c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  SampleWindow w;
  w.features = Eigen::MatrixXd::Zero(c.past, kFeatureWidth);
  for (int r = 0; r < c.past; ++r) {
    w.features(r, 0) = 0.5 + 0.05 * n(rng);
    w.features(r, 1) = 0.5 + 0.05 * n(rng);
    w.features(r, 2) = 0.1;
    w.features(r, 3) = 0.05;
    w.features(r, kOdomX) = 50.0 + 0.1 * r;
    w.features(r, kOdomY) = 40.0;
    w.features(r, kOdomZ) = 15.0;
  }
  w.anchor = Vec2(50.0 + 0.1 * (c.past - 1), 40.0);
  w.altitude = 15.0;
  w.labels = Eigen::MatrixXd::Constant(c.future, 2, 50.0);
  return w;
}

void BM_Forward(benchmark::State& state) {
  predictor::PredictorConfig c;
  c.future = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  const predictor::Predictor p(c, predictor::init_weights(c, 1));
  const auto w = window(c, rng);
  for (auto _ : state) benchmark::DoNotOptimize(p.predict(w));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(5);

void BM_LossAndGradient(benchmark::State& state) {
  predictor::PredictorConfig c;
  const auto layout = predictor::ParamLayout::for_config(c);
  const auto params = predictor::init_parameters(c, 2);
  std::mt19937_64 rng(2);
  std::vector<predictor::PreparedWindow> batch;
  for (int i = 0; i < state.range(0); ++i) batch.push_back(predictor::prepare(c, window(c, rng)));
  for (auto _ : state) benchmark::DoNotOptimize(predictor::loss_and_gradient(c, layout, params, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGradient)->Arg(1)->Arg(32);

void BM_FuseMeasurement(benchmark::State& state) {
  fusion::FusedTrack track(1, Vec2(10, 10), fusion::FusionConfig{}, 0.2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto _ : state) {
    track = fusion::predict_track(std::move(track), 0.2);
    track = fusion::fuse_measurement(std::move(track), 1, Vec2(10 + n(rng), 10 + n(rng))).track;
  }
  benchmark::DoNotOptimize(track.state());
}
BENCHMARK(BM_FuseMeasurement);

void BM_PlanStep(benchmark::State& state) {
  const auto world = harness::build_case(static_cast<sim::CaseId>(state.range(0)), 1);
  const auto ws = sim::initial_state(world);
  std::map<int, fusion::FusedTrack> tracks;
  for (const auto& t : ws.targets) tracks.emplace(t.id, fusion::FusedTrack(t.id, t.position, fusion::FusionConfig{}, 0.2));
  const planner::PlannerConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(planner::plan_step(ws.robots, tracks, world.assignments, cfg, world.dt));
  }
}
BENCHMARK(BM_PlanStep)->Arg(1)->Arg(2)->Arg(3);

}  // namespace
BENCHMARK_MAIN();
