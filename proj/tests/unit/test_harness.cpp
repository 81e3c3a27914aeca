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

#include <cmath>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "fedtrack/error.hpp"
#include "fedtrack/experiment.hpp"

namespace fedtrack::harness {
namespace {

TEST(Metrics, HandAggregation) {
  RunLog log;
  log.predictions = {{1, 1, 0, Vec2(0, 0), Vec2(3, 4)}, {1, 1, 1, Vec2(1, 1), Vec2(1, 2)}, {2, 2, 1, Vec2(0, 0), Vec2(0, 2)}};
  log.distances = {{1, 1, 0, 9.0}, {1, 1, 1, 1.0}, {2, 2, 1, 4.0}};
  log.traces = {{1, 0, 2.0}, {1, 1, 4.0}};
  log.controls = {{1, 0, Vec2(1, 0), Vec2(0, 0), 5.0, true}, {1, 1, Vec2(1, 1), Vec2(1, 0), 7.0, false}};

  const auto all = compute_metrics(log);
  EXPECT_DOUBLE_EQ(all.prediction_error, (25.0 + 1.0 + 4.0) / 3.0);
  EXPECT_DOUBLE_EQ(all.tracking_distance, 14.0 / 3.0);
  EXPECT_DOUBLE_EQ(all.uncertainty, 3.0);
  EXPECT_DOUBLE_EQ(all.speed_change, 1.0);
  EXPECT_DOUBLE_EQ(all.total_cost, 5.0);
  ASSERT_EQ(all.pairs.size(), 2u);
  EXPECT_DOUBLE_EQ(all.pairs[0].prediction_error, 13.0);
  EXPECT_DOUBLE_EQ(all.pairs[1].tracking_distance, 4.0);

  const auto late = compute_metrics(log, 1);
  EXPECT_DOUBLE_EQ(late.prediction_error, 2.5);
  EXPECT_EQ(late.distance_samples, 2u);
  EXPECT_EQ(late.planned_samples, 0u);
  EXPECT_DOUBLE_EQ(late.total_cost, 0.0);

  const auto empty = compute_metrics(RunLog{});
  EXPECT_EQ(empty.prediction_error, 0.0);
  EXPECT_TRUE(empty.pairs.empty());

  std::ostringstream os;
  write_metrics_csv(os, all);
  const auto csv = os.str();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Scenarios, CaseShapes) {
  const struct {
    sim::CaseId id;
    std::size_t robots, targets;
  } cases[] = {{sim::CaseId::kCase1, 2, 2}, {sim::CaseId::kCase2, 3, 3}, {sim::CaseId::kCase3, 4, 6}};
  for (const auto& c : cases) {
    const auto w = build_case(c.id, 7);
    EXPECT_EQ(w.robots.size(), c.robots);
    EXPECT_EQ(w.targets.size(), c.targets);
    std::set<double> altitudes;
    for (const auto& r : w.robots) altitudes.insert(r.altitude);
    EXPECT_EQ(altitudes.size(), c.robots);
    EXPECT_NO_THROW(w.validate());
  }
  EXPECT_EQ(dump_world_config(build_case(sim::CaseId::kCase2, 3)),
            dump_world_config(build_case(sim::CaseId::kCase2, 3)));
  EXPECT_NE(dump_world_config(build_case(sim::CaseId::kCase2, 3)),
            dump_world_config(build_case(sim::CaseId::kCase2, 4)));

  const auto het = shared_target_world(1, true);
  EXPECT_EQ(het.robots[0].altitude, 10.0);
  EXPECT_EQ(het.robots[1].altitude, 25.0);
  const auto hom = shared_target_world(1, false, 15.0);
  EXPECT_EQ(hom.robots[0].altitude, hom.robots[1].altitude);
}

TEST(Spec, JsonRoundTripAndValidation) {
  auto spec = ExperimentSpec::end_to_end_defaults();
  spec.seeds = {4, 5};
  spec.duration_s = 123.0;
  spec.online_strategy.reset();
  spec.planner.alpha = 7.0;
  const auto back = spec_from_json(spec_to_json(spec), ExperimentSpec{});
  EXPECT_EQ(spec_to_json(back), spec_to_json(spec));
  EXPECT_FALSE(back.online_strategy.has_value());

  const auto partial = spec_from_json(R"({"rounds": 3})", ExperimentSpec::offline_defaults());
  EXPECT_EQ(partial.rounds, 3);
  EXPECT_EQ(partial.model.future, 5);
  EXPECT_THROW(spec_from_json("[1,2", ExperimentSpec{}), ConfigError);

  auto bad = ExperimentSpec::offline_defaults();
  bad.split = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = ExperimentSpec::offline_defaults();
  bad.seeds.clear();
  EXPECT_THROW(bad.validate(), ConfigError);
}

ExperimentSpec tiny_offline() {
  auto s = ExperimentSpec::offline_defaults();
  s.model.d_model = 8;
  s.model.d_ff = 16;
  s.seeds = {1};
  s.rounds = 2;
  s.collect_s = 30.0;
  s.local_epochs = 1;
  return s;
}

TEST(Offline, CollectionSplitsChronologically) {
  const auto spec = tiny_offline();
  const auto world = resolve_world(spec, 1);
  const auto data = collect_offline_data(spec, world);
  ASSERT_EQ(data.train.size(), 2u);
  for (const auto& [robot, train] : data.train) {
    const auto& test = data.test.at(robot);
    ASSERT_FALSE(train.empty());
    ASSERT_FALSE(test.empty());
    const double frac = static_cast<double>(train.size()) / static_cast<double>(train.size() + test.size());
    EXPECT_NEAR(frac, 0.8, 0.02);
    EXPECT_LT(train.back().end_tick, test.front().end_tick);
    for (const auto& w : train) {
      EXPECT_EQ(w.features.rows(), spec.model.past);
      EXPECT_EQ(w.labels.rows(), spec.model.future);
    }
  }
}

TEST(Offline, CurvesAndBytes) {
  const auto spec = tiny_offline();
  const auto r = run_offline_fl(spec, 1);
  ASSERT_EQ(r.curves.size(), 4u);
  std::size_t expected = 0;
  for (const auto& c : r.curves) {
    ASSERT_EQ(c.test_mse.size(), 3u);
    for (double v : c.test_mse) EXPECT_TRUE(std::isfinite(v));
    expected += 2u * 2u * 2u * c.final_global.byte_size();  // rounds x robots x (up + down)
  }
  EXPECT_EQ(r.ledger.total_bytes(), expected);
  EXPECT_EQ(r.round_log.size(), 8u);

  const auto again = run_offline_fl(spec, 1);
  for (std::size_t i = 0; i < r.curves.size(); ++i) EXPECT_EQ(r.curves[i].test_mse, again.curves[i].test_mse);
}

ExperimentSpec tiny_e2e() {
  auto s = ExperimentSpec::end_to_end_defaults();
  s.model.d_model = 8;
  s.model.d_ff = 16;
  s.seeds = {1};
  s.duration_s = 40.0;
  s.round_period_s = 20.0;
  s.local_epochs = 1;
  return s;
}

TEST(EndToEnd, BytesFollowTheSteadyStateFormula) {
  const auto spec = tiny_e2e();
  const auto model = fl::model_config_for(fl::Strategy::kDroneFL, spec.model);
  const auto r = run_end_to_end(spec, 1, predictor::init_weights(model, 1));
  EXPECT_EQ(r.steps, 200);
  EXPECT_EQ(r.rounds, 2);
  EXPECT_EQ(static_cast<double>(r.ledger.total_bytes()), expected_bytes(r, 2, spec.model.future));
  EXPECT_EQ(r.ledger.count_of(fl::MessageKind::kControl), 400u);
  EXPECT_TRUE(std::isfinite(r.report.tracking_distance));
  EXPECT_GT(r.report.distance_samples, 0u);
  EXPECT_NEAR(r.report.comm_rate, static_cast<double>(r.ledger.total_bytes()) / 40.0, 1e-9);
}

TEST(EndToEnd, FixedWeightsAreDeterministicAndSendNoBlobs) {
  auto spec = tiny_e2e();
  spec.online_strategy.reset();
  const auto model = fl::model_config_for(fl::Strategy::kDroneFL, spec.model);
  const auto w = predictor::init_weights(model, 2);
  const auto a = run_end_to_end(spec, 3, w);
  const auto b = run_end_to_end(spec, 3, w);
  EXPECT_EQ(a.rounds, 0);
  EXPECT_EQ(a.ledger.bytes_of(fl::MessageKind::kWeightsUp), 0u);
  EXPECT_EQ(a.tracks_csv, b.tracks_csv);
  EXPECT_EQ(a.planner_csv, b.planner_csv);
}

TEST(EndToEnd, OraclePredictionsTrackClosely) {
  auto spec = tiny_e2e();
  spec.online_strategy.reset();
  spec.oracle_predictions = true;
  spec.duration_s = 60.0;
  const auto model = fl::model_config_for(fl::Strategy::kDroneFL, spec.model);
  const auto r = run_end_to_end(spec, 1, predictor::init_weights(model, 1));
  EXPECT_FALSE(r.target_lost);
  EXPECT_LT(r.report.prediction_error, 1e-9);
  EXPECT_LT(r.report.tracking_distance, 10.0);
}

TEST(EndToEnd, ReportMatchesARecomputationFromTheRawLog) {
  const auto spec = tiny_e2e();
  const auto model = fl::model_config_for(fl::Strategy::kDroneFL, spec.model);
  const auto r = run_end_to_end(spec, 2, predictor::init_weights(model, 3));
  double pred = 0.0, dist = 0.0;
  std::size_t np = 0, nd = 0;
  for (const auto& s : r.log.predictions) {
    if (s.tick < spec.warmup_steps) continue;
    pred += (s.predicted - s.truth).squaredNorm();
    ++np;
  }
  for (const auto& s : r.log.distances) {
    if (s.tick < spec.warmup_steps) continue;
    dist += s.dist2;
    ++nd;
  }
  ASSERT_GT(np, 0u);
  EXPECT_NEAR(r.report.prediction_error, pred / static_cast<double>(np), 1e-9);
  EXPECT_NEAR(r.report.tracking_distance, dist / static_cast<double>(nd), 1e-9);
  EXPECT_EQ(r.report.prediction_samples, np);
}

TEST(EndToEnd, LongerRunsOnlyExtendTheLogs) {
  auto spec = tiny_e2e();
  spec.online_strategy.reset();
  const auto model = fl::model_config_for(fl::Strategy::kDroneFL, spec.model);
  const auto w = predictor::init_weights(model, 4);
  spec.duration_s = 20.0;
  const auto short_run = run_end_to_end(spec, 5, w);
  spec.duration_s = 40.0;
  const auto long_run = run_end_to_end(spec, 5, w);
  EXPECT_EQ(long_run.tracks_csv.compare(0, short_run.tracks_csv.size(), short_run.tracks_csv), 0);
  EXPECT_EQ(long_run.planner_csv.compare(0, short_run.planner_csv.size(), short_run.planner_csv), 0);
  EXPECT_GT(long_run.tracks_csv.size(), short_run.tracks_csv.size());
}

TEST(EndToEnd, FusingEveryPredictedStep) {
  auto spec = tiny_e2e();
  spec.model.future = 3;
  spec.fuse_all_steps = true;
  const auto model = fl::model_config_for(fl::Strategy::kDroneFL, spec.model);
  const auto a = run_end_to_end(spec, 1, predictor::init_weights(model, 6));
  const auto b = run_end_to_end(spec, 1, predictor::init_weights(model, 6));
  EXPECT_EQ(a.tracks_csv, b.tracks_csv);
  EXPECT_TRUE(std::isfinite(a.report.uncertainty));
  spec.fuse_all_steps = false;
  const auto first_only = run_end_to_end(spec, 1, predictor::init_weights(model, 6));
  EXPECT_NE(a.tracks_csv, first_only.tracks_csv);
}

TEST(EndToEnd, RejectsAMismatchedBlob) {
  const auto spec = tiny_e2e();
  auto other = fl::model_config_for(fl::Strategy::kDroneFL, spec.model);
  other.d_model = 16;
  other.d_ff = 32;
  EXPECT_THROW(run_end_to_end(spec, 1, predictor::init_weights(other, 1)), StructuralError);
}

TEST(Outputs, FilesAreWritten) {
  const auto dir = std::filesystem::temp_directory_path() / "fedtrack_harness_test";
  std::filesystem::remove_all(dir);
  auto spec = tiny_e2e();
  spec.duration_s = 4.0;
  spec.online_strategy.reset();
  const auto model = fl::model_config_for(fl::Strategy::kDroneFL, spec.model);
  const auto r = run_end_to_end(spec, 1, predictor::init_weights(model, 1));
  write_end_to_end_outputs(dir, spec, r);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) files += e.is_regular_file() ? 1 : 0;
  EXPECT_GE(files, 3u);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace fedtrack::harness
