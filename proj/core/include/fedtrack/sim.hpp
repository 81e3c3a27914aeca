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

// Deterministic 2.5D world: ground targets on the field plane and UAVs at
// fixed altitudes driven by single-integrator velocity control.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace fedtrack::sim {

using Vec2 = Eigen::Vector2d;
using Rng = std::mt19937_64;

using RobotId = int;
using TargetId = int;

enum class CaseId { kCase1 = 1, kCase2 = 2, kCase3 = 3, kCustom = 0 };

struct ConstantVelocity {
  double speed = 0.5;
};

/// Velocity direction is perturbed per axis by N(0, noise_std) every step and
/// the speed is renormalized to `speed`.
struct RandomWalk {
  double speed = 0.5;
  double noise_std = 0.1;
};

using MotionModel = std::variant<ConstantVelocity, RandomWalk>;

double nominal_speed(const MotionModel& motion);

struct TargetSpec {
  TargetId id = 0;
  Vec2 position = Vec2::Zero();
  double heading = 0.0;  // radians, direction of the initial velocity
  MotionModel motion = ConstantVelocity{};
};

struct RobotSpec {
  RobotId id = 0;
  Vec2 position = Vec2::Zero();
  double altitude = 10.0;
};

struct WorldConfig {
  double width = 160.0;
  double height = 120.0;
  double dt = 0.2;
  std::uint64_t seed = 0;
  CaseId case_id = CaseId::kCustom;
  double u_max = 2.0;
  std::vector<RobotSpec> robots;
  std::vector<TargetSpec> targets;
  std::map<RobotId, std::set<TargetId>> assignments;
  // Distinct altitudes are required for the team cases; the matched-altitude
  // study switches this off.
  bool require_distinct_altitudes = true;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;

  const std::set<TargetId>& assigned(RobotId robot) const;
};

/// 12-vector: position xyz, orientation rpy, linear velocity xyz, angular
/// velocity xyz.
using Odometry = std::array<double, 12>;

struct TargetState {
  TargetId id = 0;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  MotionModel motion = ConstantVelocity{};
};

class RobotState {
 public:
  RobotState() = default;
  RobotState(RobotId id, Vec2 position, double altitude, Vec2 velocity = Vec2::Zero())
      : id_(id), position_(std::move(position)), velocity_(std::move(velocity)), altitude_(altitude) {}

  RobotId id() const { return id_; }
  const Vec2& position() const { return position_; }
  const Vec2& velocity() const { return velocity_; }
  double altitude() const { return altitude_; }

  /// Level attitude with a downward camera: rpy and angular rates are zero.
  Odometry odometry() const;

 private:
  friend struct RobotStepper;
  RobotId id_ = 0;
  Vec2 position_ = Vec2::Zero();
  Vec2 velocity_ = Vec2::Zero();
  double altitude_ = 0.0;
};

struct WorldState {
  std::int64_t tick = 0;
  double dt = 0.2;
  double width = 160.0;
  double height = 120.0;
  std::vector<TargetState> targets;
  std::vector<RobotState> robots;

  double time() const { return static_cast<double>(tick) * dt; }
  const TargetState& target(TargetId id) const;
  const RobotState& robot(RobotId id) const;
  RobotState& robot(RobotId id);
};

WorldState initial_state(const WorldConfig& config);

/// Advances every target by one dt with reflecting field boundaries.
WorldState step_targets(WorldState world, Rng& rng);

struct RobotStepReport {
  RobotState state;
  Vec2 applied = Vec2::Zero();
  bool clamped = false;
};

/// p' = p + dt * u, with u clamped to norm u_max.
RobotStepReport step_robot(const RobotState& robot, const Vec2& u, double dt, double u_max);

/// Structured-text (JSON) world configuration.
WorldConfig load_world_config(const std::filesystem::path& path);
WorldConfig parse_world_config(const std::string& text);
std::string dump_world_config(const WorldConfig& config);

/// State trajectory CSV: t,entity_kind,id,x,y,z,vx,vy
void write_state_csv_header(std::ostream& os);
void write_state_csv_rows(std::ostream& os, const WorldState& world);

}  // namespace fedtrack::sim
