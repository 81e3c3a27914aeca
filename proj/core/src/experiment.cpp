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

#include "fedtrack/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "fedtrack/error.hpp"

namespace fedtrack::harness {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum SeedTag : std::uint64_t {
  kTagPlacement = 1,
  kTagTargets = 2,
  kTagInit = 3,
  kTagOffsets = 4,
  kTagDetect = 100,
  kTagClient = 200,
};

constexpr double kAltitudes[] = {10.0, 15.0, 20.0, 25.0};

Vec2 clamp_to_field(const Vec2& p, double width, double height) {
  return {std::clamp(p.x(), 0.0, width), std::clamp(p.y(), 0.0, height)};
}

std::vector<sim::TargetSpec> random_targets(int count, std::uint64_t seed, const sim::MotionModel& motion,
                                            double width, double height) {
  sim::Rng rng(derive_seed(seed, kTagPlacement));
  std::uniform_real_distribution<double> ux(20.0, width - 20.0);
  std::uniform_real_distribution<double> uy(20.0, height - 20.0);
  std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
  std::vector<sim::TargetSpec> out;
  for (int i = 1; i <= count; ++i) {
    sim::TargetSpec t;
    t.id = i;
    t.position = Vec2(ux(rng), uy(rng));
    t.heading = heading(rng);
    t.motion = motion;
    out.push_back(t);
  }
  return out;
}

void place_robots_near_targets(sim::WorldConfig& w) {
  for (auto& r : w.robots) {
    const int first = *w.assigned(r.id).begin();
    auto it = std::find_if(w.targets.begin(), w.targets.end(), [&](const auto& t) { return t.id == first; });
    r.position = clamp_to_field(it->position + Vec2(-1.5, 0.0), w.width, w.height);
  }
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

sim::WorldConfig build_case(sim::CaseId case_id, std::uint64_t seed) {
  sim::WorldConfig w;
  w.seed = seed;
  w.case_id = case_id;
  int robots = 0;
  int targets = 0;
  sim::MotionModel motion = sim::ConstantVelocity{0.5};
  switch (case_id) {
    case sim::CaseId::kCase1:
      robots = 2;
      targets = 2;
      w.assignments = {{1, {1}}, {2, {2}}};
      break;
    case sim::CaseId::kCase2:
      robots = 3;
      targets = 3;
      motion = sim::RandomWalk{0.5, 0.1};
      w.assignments = {{1, {1, 2, 3}}, {2, {1, 2}}, {3, {2, 3}}};
      break;
    case sim::CaseId::kCase3:
      robots = 4;
      targets = 6;
      w.assignments = {{1, {1, 2, 3, 4, 5, 6}}, {2, {1, 2}}, {3, {3, 4}}, {4, {5, 6}}};
      break;
    default:
      throw ConfigError("unknown case id " + std::to_string(static_cast<int>(case_id)));
  }
  w.targets = random_targets(targets, seed, motion, w.width, w.height);
  for (int i = 1; i <= robots; ++i) w.robots.push_back({i, Vec2::Zero(), kAltitudes[(i - 1) % 4]});
  place_robots_near_targets(w);
  w.validate();
  return w;
}

sim::WorldConfig shared_target_world(std::uint64_t seed, bool heterogeneous, double homogeneous_altitude) {
  sim::WorldConfig w;
  w.seed = seed;
  w.case_id = sim::CaseId::kCustom;
  w.targets = random_targets(1, seed, sim::ConstantVelocity{0.5}, w.width, w.height);
  w.robots = {{1, Vec2::Zero(), heterogeneous ? 10.0 : homogeneous_altitude},
              {2, Vec2::Zero(), heterogeneous ? 25.0 : homogeneous_altitude}};
  w.require_distinct_altitudes = heterogeneous;
  w.assignments = {{1, {1}}, {2, {1}}};
  place_robots_near_targets(w);
  w.validate();
  return w;
}

ExperimentSpec ExperimentSpec::offline_defaults() {
  ExperimentSpec s;
  s.mode = Mode::kOfflineFL;
  s.model.past = 10;
  s.model.future = 5;
  return s;
}

ExperimentSpec ExperimentSpec::end_to_end_defaults() {
  ExperimentSpec s;
  s.mode = Mode::kEndToEnd;
  s.model.past = 10;
  s.model.future = 1;
  s.strategies = {fl::Strategy::kDroneFL};
  return s;
}

void ExperimentSpec::validate() const {
  model.validate();
  camera.validate();
  planner.validate();
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (rounds < 0 || pretrain_rounds < 0) throw ConfigError("round counts must be non-negative");
  if (!(split > 0.0 && split < 1.0)) throw ConfigError("split must lie in (0, 1)");
  if (collect_s < 0.0 || duration_s < 0.0) throw ConfigError("durations must be non-negative");
  if (!(follow_offset >= 0.0) || !(follow_hold_s >= 0.0)) throw ConfigError("follower standoff must be non-negative");
  if (!(round_period_s > 0.0)) throw ConfigError("round period must be positive");
  if (warmup_steps < 0) throw ConfigError("warmup must be non-negative");
  if (!(target_lost_s > 0.0)) throw ConfigError("target-lost timeout must be positive");
  if (mode == Mode::kOfflineFL && strategies.empty()) throw ConfigError("no strategies to compare");
  if (world) world->validate();
}

sim::WorldConfig resolve_world(const ExperimentSpec& spec, std::uint64_t seed) {
  if (spec.world) {
    sim::WorldConfig w = *spec.world;
    w.seed = seed;
    w.validate();
    return w;
  }
  return build_case(spec.case_id, seed);
}

CollectedData collect_offline_data(const ExperimentSpec& spec, const sim::WorldConfig& world) {
  world.validate();
  sim::WorldState ws = sim::initial_state(world);
  sim::Rng target_rng(derive_seed(world.seed, kTagTargets));
  sim::Rng offset_rng(derive_seed(world.seed, kTagOffsets));
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);

  const auto steps = static_cast<std::int64_t>(std::llround(spec.collect_s / world.dt));
  std::map<int, perception::OnboardLog> logs;
  std::map<int, sim::Rng> detect_rng;
  std::map<int, Vec2> offset;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto hold_ticks =
      spec.follow_hold_s > 0.0 ? std::max<std::int64_t>(1, std::llround(spec.follow_hold_s / world.dt)) : 0;
  for (const auto& r : world.robots) {
    logs.emplace(r.id, perception::OnboardLog(r.id, static_cast<std::size_t>(steps) + 1));
    detect_rng.emplace(r.id, sim::Rng(derive_seed(world.seed, kTagDetect + static_cast<std::uint64_t>(r.id))));
    const double a = angle(offset_rng);
    offset[r.id] = spec.follow_offset * Vec2(std::cos(a), std::sin(a));
  }

  for (std::int64_t tick = 0; tick < steps; ++tick) {
    for (auto& robot : ws.robots) {
      const auto& assigned = world.assigned(robot.id());
      const auto dets =
          perception::detect(spec.camera, robot, ws.targets, ws.tick, ws.time(), detect_rng.at(robot.id()));
      for (const auto& d : dets) {
        if (!assigned.count(d.target)) continue;
        logs.at(robot.id()).append(d, robot.odometry(), ws.target(d.target).position);
      }
      if (hold_ticks > 0 && tick % hold_ticks == 0) {
        // Uniform over the disk so hover and far-off geometry both appear.
        const double rho = spec.follow_offset * std::sqrt(unit(offset_rng));
        const double a = angle(offset_rng);
        offset[robot.id()] = rho * Vec2(std::cos(a), std::sin(a));
      }
      const Vec2 goal =
          clamp_to_field(ws.target(*assigned.begin()).position + offset[robot.id()], world.width, world.height);
      robot = sim::step_robot(robot, (goal - robot.position()) / world.dt, world.dt, world.u_max).state;
    }
    ws = sim::step_targets(std::move(ws), target_rng);
  }

  CollectedData data;
  std::size_t total = 0;
  for (const auto& [id, log] : logs) {
    auto windows = perception::extract_windows(log, spec.model.past, spec.model.future);
    std::stable_sort(windows.begin(), windows.end(),
                     [](const SampleWindow& a, const SampleWindow& b) { return a.end_tick < b.end_tick; });
    const auto n_train = static_cast<std::size_t>(std::floor(spec.split * static_cast<double>(windows.size())));
    data.train[id].assign(windows.begin(), windows.begin() + static_cast<std::ptrdiff_t>(n_train));
    data.test[id].assign(windows.begin() + static_cast<std::ptrdiff_t>(n_train), windows.end());
    total += windows.size();
  }
  if (total == 0) throw DataVolumeError("data collection produced no complete window");
  return data;
}

OfflineResult run_offline_fl(const ExperimentSpec& spec, std::uint64_t seed) {
  spec.validate();
  const sim::WorldConfig world = resolve_world(spec, seed);
  const CollectedData data = collect_offline_data(spec, world);

  OfflineResult result;
  result.seed = seed;
  fl::MessageBus bus(result.ledger);
  std::size_t cumulative = 0;

  for (fl::Strategy strategy : spec.strategies) {
    const auto cfg = fl::model_config_for(strategy, spec.model);
    fl::RoundPlan plan;
    plan.local_epochs = spec.local_epochs;
    plan.batch_size = spec.batch_size;
    plan.adam = spec.adam;
    plan.strategy.kind = strategy;
    plan.strategy.prox_mu = spec.prox_mu;

    std::vector<fl::RobotClient> clients;
    for (const auto& [id, train] : data.train) {
      fl::RobotClient c;
      c.id = id;
      c.train_set = train;
      c.rng.seed(derive_seed(seed, kTagClient + static_cast<std::uint64_t>(id)));
      clients.push_back(std::move(c));
    }

    auto test_mse = [&](const std::vector<WeightBlob>& models) {
      std::vector<double> per_robot;
      for (std::size_t i = 0; i < clients.size(); ++i) {
        const auto& test = data.test.at(clients[i].id);
        if (test.empty()) continue;
        per_robot.push_back(predictor::evaluate_mse(cfg, models[i], test));
      }
      return mean_of(per_robot);
    };

    StrategyCurve curve;
    curve.strategy = strategy;
    WeightBlob global = predictor::init_weights(cfg, derive_seed(seed, kTagInit));
    curve.test_mse.push_back(test_mse(std::vector<WeightBlob>(clients.size(), global)));

    for (int r = 1; r <= spec.rounds; ++r) {
      plan.round_index = r;
      auto round = fl::run_round(plan, cfg, global, clients, bus, static_cast<double>(r));
      global = std::move(round.global);
      cumulative += round.bytes;
      const double mse = test_mse(round.local_models);
      curve.test_mse.push_back(mse);
      result.round_log.push_back(
          fl::round_log_line(r, strategy, round.train_loss, mse, global.byte_size(), cumulative));
    }
    curve.final_global = std::move(global);
    result.curves.push_back(std::move(curve));
  }
  return result;
}

WeightBlob pretrain(const ExperimentSpec& spec) {
  ExperimentSpec p = spec;
  p.mode = Mode::kOfflineFL;
  p.strategies = {fl::Strategy::kDroneFL};
  p.rounds = spec.pretrain_rounds;
  p.camera.pixel_noise_std = spec.pretrain_pixel_noise;
  p.seeds = {spec.pretrain_seed};
  return run_offline_fl(p, spec.pretrain_seed).curves.front().final_global;
}

namespace {

struct PendingLabel {
  std::int64_t tick = -1;
  Vec2 position = Vec2::Zero();
};

}  // namespace

EndToEndResult run_end_to_end(const ExperimentSpec& spec, std::uint64_t seed, const WeightBlob& pretrained) {
  spec.validate();
  const sim::WorldConfig world = resolve_world(spec, seed);
  const fl::Strategy model_kind = spec.online_strategy.value_or(fl::Strategy::kDroneFL);
  const auto cfg = fl::model_config_for(model_kind, spec.model);
  predictor::check_layout(cfg, pretrained);

  planner::PlannerConfig pcfg = spec.planner;
  pcfg.width = world.width;
  pcfg.height = world.height;
  pcfg.u_max = world.u_max;

  EndToEndResult out;
  out.seed = seed;
  out.blob_bytes = pretrained.byte_size();
  fl::MessageBus bus(out.ledger);

  const double dt = world.dt;
  const auto steps = static_cast<std::int64_t>(std::llround(spec.duration_s / dt));
  const auto period_ticks = std::max<std::int64_t>(1, std::llround(spec.round_period_s / dt));
  const auto lost_ticks = static_cast<std::int64_t>(std::ceil(spec.target_lost_s / dt - 1e-9));

  sim::WorldState ws = sim::initial_state(world);
  sim::Rng target_rng(derive_seed(seed, kTagTargets));

  std::map<int, perception::OnboardLog> logs;
  std::map<int, sim::Rng> detect_rng;
  std::map<int, predictor::Predictor> predictors;
  std::map<int, std::map<int, PendingLabel>> pending;
  std::map<int, Vec2> previous_u;
  std::vector<fl::RobotClient> clients;
  for (const auto& r : world.robots) {
    logs.emplace(r.id, perception::OnboardLog(r.id, static_cast<std::size_t>(steps) + 1));
    detect_rng.emplace(r.id, sim::Rng(derive_seed(seed, kTagDetect + static_cast<std::uint64_t>(r.id))));
    predictors.emplace(r.id, predictor::Predictor(cfg, pretrained));
    previous_u[r.id] = Vec2::Zero();
    fl::RobotClient c;
    c.id = r.id;
    c.rng.seed(derive_seed(seed, kTagClient + static_cast<std::uint64_t>(r.id)));
    clients.push_back(std::move(c));
  }

  fl::RoundPlan plan;
  plan.local_epochs = spec.local_epochs;
  plan.batch_size = spec.batch_size;
  plan.adam = spec.adam;
  plan.strategy.kind = model_kind;
  plan.strategy.prox_mu = spec.prox_mu;
  WeightBlob global = pretrained;
  std::size_t cumulative = 0;

  std::ostringstream tracks_csv;
  std::ostringstream planner_csv;
  fusion::write_track_csv_header(tracks_csv);
  planner::write_planner_csv_header(planner_csv);

  std::map<int, fusion::FusedTrack> tracks;
  std::int64_t last_detection = 0;
  const std::size_t pred_bytes = fl::prediction_message_bytes(cfg.future);

  for (std::int64_t tick = 0; tick < steps; ++tick) {
    const double t = ws.time();
    // Ground truth one step ahead; the real world advances to it at the end.
    const sim::WorldState next = sim::step_targets(ws, target_rng);

    bool any_detection = false;
    for (const auto& robot : ws.robots) {
      const auto& assigned = world.assigned(robot.id());
      const auto dets = perception::detect(spec.camera, robot, ws.targets, tick, t, detect_rng.at(robot.id()));
      for (const auto& d : dets) {
        if (!assigned.count(d.target)) continue;
        std::optional<Vec2> label;
        const auto& p = pending[robot.id()][d.target];
        if (p.tick == tick) label = p.position;
        logs.at(robot.id()).append(d, robot.odometry(), label);
        any_detection = true;
      }
    }
    if (any_detection) {
      last_detection = tick;
    } else if (tick - last_detection >= lost_ticks) {
      out.target_lost = true;
      break;
    }

    std::map<int, std::vector<std::pair<int, Eigen::MatrixXd>>> measurements;
    for (const auto& robot : ws.robots) {
      for (int j : world.assigned(robot.id())) {
        const auto window = perception::latest_window(logs.at(robot.id()), j, cfg.past, tick);
        if (!window) continue;
        const Vec2 truth = next.target(j).position;
        Eigen::MatrixXd path = spec.oracle_predictions ? Eigen::MatrixXd(truth.transpose())
                                                       : predictors.at(robot.id()).predict(*window);
        if (!spec.fuse_all_steps) path.conservativeResize(1, Eigen::NoChange);
        const Vec2 z = path.row(0).transpose();
        bus.send(t, fl::robot_endpoint(robot.id()), fl::kCloudEndpoint, fl::MessageKind::kPrediction, pred_bytes);
        measurements[j].push_back({robot.id(), std::move(path)});
        out.log.predictions.push_back({robot.id(), j, tick, z, truth});
      }
    }

    for (const auto& target : ws.targets) {
      const int j = target.id;
      auto it = tracks.find(j);
      const auto& ms = measurements[j];
      std::size_t first = 0;
      if (it == tracks.end()) {
        if (ms.empty()) continue;
        it = tracks.emplace(j, fusion::FusedTrack(j, ms.front().second.row(0).transpose(), spec.fusion, dt)).first;
        first = 1;
      } else {
        it->second = fusion::predict_track(std::move(it->second), dt);
      }
      for (std::size_t k = first; k < ms.size(); ++k) {
        const auto& [rid, path] = ms[k];
        it->second = fusion::fuse_measurement(std::move(it->second), rid, path.row(0).transpose()).track;
        for (Eigen::Index step = 1; step < path.rows(); ++step) {
          it->second = fusion::fuse_lead_measurement(std::move(it->second), rid, path.row(step).transpose(),
                                                     static_cast<double>(step) * dt)
                           .track;
        }
      }
      out.log.traces.push_back({j, tick, it->second.covariance().trace()});
      fusion::write_track_csv_row(tracks_csv, next.time(), it->second);
      for (const auto& robot : ws.robots) {
        if (!world.assigned(robot.id()).count(j)) continue;
        bus.send(t, fl::kCloudEndpoint, fl::robot_endpoint(robot.id()), fl::MessageKind::kTrackFeedback,
                 fl::track_feedback_message_bytes());
        ++out.feedback_messages;
        pending[robot.id()][j] = {tick + 1, it->second.position()};
      }
    }

    for (auto& robot : ws.robots) {
      const auto& assigned = world.assigned(robot.id());
      for (int j : assigned) {
        out.log.distances.push_back({robot.id(), j, tick, (robot.position() - ws.target(j).position).squaredNorm()});
      }
      std::set<int> live;
      for (int j : assigned) {
        if (tracks.count(j)) live.insert(j);
      }
      planner::RobotPlan chosen;
      if (!live.empty()) chosen = planner::plan_robot(robot, tracks, live, pcfg, dt, previous_u[robot.id()]);
      bus.send(t, fl::kCloudEndpoint, fl::robot_endpoint(robot.id()), fl::MessageKind::kControl,
               fl::control_message_bytes());
      planner::write_planner_csv_row(planner_csv, t, robot.id(), chosen);
      out.log.controls.push_back({robot.id(), tick, chosen.u, previous_u[robot.id()], chosen.J, !live.empty()});
      previous_u[robot.id()] = chosen.u;
      robot = sim::step_robot(robot, chosen.u, dt, world.u_max).state;
    }

    ws.targets = next.targets;
    ws.tick = next.tick;
    out.steps = tick + 1;

    if (spec.online_strategy && (tick + 1) % period_ticks == 0) {
      for (auto& c : clients) c.train_set = perception::extract_windows(logs.at(c.id), cfg.past, cfg.future);
      plan.round_index = ++out.rounds;
      auto round = fl::run_round(plan, cfg, global, clients, bus, ws.time());
      global = std::move(round.global);
      cumulative += round.bytes;
      for (std::size_t i = 0; i < clients.size(); ++i) predictors.at(clients[i].id).set_weights(round.local_models[i]);
      out.round_log.push_back(fl::round_log_line(out.rounds, model_kind, round.train_loss,
                                                 std::numeric_limits<double>::quiet_NaN(), global.byte_size(),
                                                 cumulative));
    }
  }

  out.report = compute_metrics(out.log, spec.warmup_steps);
  out.report.comm_bytes = out.ledger.total_bytes();
  out.report.duration_s = static_cast<double>(out.steps) * dt;
  out.report.comm_rate = out.steps > 0 ? out.ledger.rate(out.report.duration_s) : 0.0;
  out.report.target_lost = out.target_lost;

  // Aggregates must agree with the per-pair breakdown.
  double weighted = 0.0;
  std::size_t n = 0;
  for (const auto& p : out.report.pairs) {
    weighted += p.prediction_error * static_cast<double>(p.prediction_samples);
    n += p.prediction_samples;
  }
  const double recomputed = n == 0 ? 0.0 : weighted / static_cast<double>(n);
  if (std::abs(recomputed - out.report.prediction_error) > 1e-9 * std::max(1.0, std::abs(recomputed))) {
    throw NumericalError("metrics", "prediction error disagrees with its per-pair recomputation");
  }

  out.tracks_csv = tracks_csv.str();
  out.planner_csv = planner_csv.str();
  return out;
}

double expected_bytes(const EndToEndResult& r, int robots, int future) {
  const double blobs = 2.0 * robots * static_cast<double>(r.blob_bytes) * r.rounds;
  const double controls = static_cast<double>(robots) * static_cast<double>(r.steps) *
                          static_cast<double>(fl::control_message_bytes());
  const double predictions = static_cast<double>(r.ledger.count_of(fl::MessageKind::kPrediction)) *
                             static_cast<double>(fl::prediction_message_bytes(future));
  const double feedback =
      static_cast<double>(r.feedback_messages) * static_cast<double>(fl::track_feedback_message_bytes());
  return blobs + controls + predictions + feedback;
}

}  // namespace fedtrack::harness
