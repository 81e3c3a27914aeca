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

#include "fedtrack/sim.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "fedtrack/error.hpp"

namespace fedtrack::sim {

using nlohmann::json;

double nominal_speed(const MotionModel& motion) {
  return std::visit([](const auto& m) { return m.speed; }, motion);
}

void WorldConfig::validate() const {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(width > 0.0) || !(height > 0.0)) throw ConfigError("field extent must be positive");
  if (!(u_max > 0.0)) throw ConfigError("u_max must be positive");
  if (robots.empty()) throw ConfigError("world has no robots");
  if (targets.empty()) throw ConfigError("world has no targets");

  std::set<RobotId> robot_ids;
  for (const auto& r : robots) {
    if (!robot_ids.insert(r.id).second) throw ConfigError("duplicate robot id " + std::to_string(r.id));
    if (!(r.altitude > 0.0)) throw ConfigError("robot " + std::to_string(r.id) + " altitude must be positive");
  }
  if (require_distinct_altitudes) {
    for (std::size_t a = 0; a < robots.size(); ++a) {
      for (std::size_t b = a + 1; b < robots.size(); ++b) {
        if (robots[a].altitude == robots[b].altitude) {
          throw ConfigError("robots " + std::to_string(robots[a].id) + " and " + std::to_string(robots[b].id) +
                            " share an altitude");
        }
      }
    }
  }

  std::set<TargetId> target_ids;
  for (const auto& t : targets) {
    if (!target_ids.insert(t.id).second) throw ConfigError("duplicate target id " + std::to_string(t.id));
    if (t.position.x() < 0.0 || t.position.x() > width || t.position.y() < 0.0 || t.position.y() > height) {
      throw ConfigError("target " + std::to_string(t.id) + " starts outside the field");
    }
    if (nominal_speed(t.motion) < 0.0) throw ConfigError("negative target speed");
  }

  std::set<TargetId> covered;
  for (const auto& [robot, set] : assignments) {
    if (!robot_ids.count(robot)) throw ConfigError("assignment for unknown robot " + std::to_string(robot));
    for (TargetId t : set) {
      if (!target_ids.count(t)) throw ConfigError("assignment to unknown target " + std::to_string(t));
      covered.insert(t);
    }
  }
  for (TargetId t : target_ids) {
    if (!covered.count(t)) throw ConfigError("target " + std::to_string(t) + " is not observed by any robot");
  }
  for (RobotId r : robot_ids) {
    auto it = assignments.find(r);
    if (it == assignments.end() || it->second.empty()) {
      throw ConfigError("robot " + std::to_string(r) + " has no assigned target");
    }
  }
}

const std::set<TargetId>& WorldConfig::assigned(RobotId robot) const {
  auto it = assignments.find(robot);
  if (it == assignments.end()) throw ConfigError("no assignment for robot " + std::to_string(robot));
  return it->second;
}

Odometry RobotState::odometry() const {
  return {position_.x(), position_.y(), altitude_, 0.0, 0.0, 0.0, velocity_.x(), velocity_.y(), 0.0, 0.0, 0.0, 0.0};
}

const TargetState& WorldState::target(TargetId id) const {
  for (const auto& t : targets) {
    if (t.id == id) return t;
  }
  throw StructuralError("unknown target " + std::to_string(id));
}

const RobotState& WorldState::robot(RobotId id) const {
  for (const auto& r : robots) {
    if (r.id() == id) return r;
  }
  throw StructuralError("unknown robot " + std::to_string(id));
}

RobotState& WorldState::robot(RobotId id) {
  return const_cast<RobotState&>(std::as_const(*this).robot(id));
}

WorldState initial_state(const WorldConfig& config) {
  config.validate();
  WorldState world;
  world.dt = config.dt;
  world.width = config.width;
  world.height = config.height;
  for (const auto& t : config.targets) {
    const double speed = nominal_speed(t.motion);
    world.targets.push_back(
        {t.id, t.position, Vec2(std::cos(t.heading), std::sin(t.heading)) * speed, t.motion});
  }
  for (const auto& r : config.robots) world.robots.emplace_back(r.id, r.position, r.altitude);
  return world;
}

namespace {

void reflect(double& pos, double& vel, double upper) {
  if (pos < 0.0) {
    pos = -pos;
    vel = -vel;
  } else if (pos > upper) {
    pos = 2.0 * upper - pos;
    vel = -vel;
  }
}

}  // namespace

WorldState step_targets(WorldState world, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& t : world.targets) {
    if (const auto* walk = std::get_if<RandomWalk>(&t.motion)) {
      Vec2 dir = t.velocity;
      const double nx = normal(rng);
      const double ny = normal(rng);
      dir += walk->noise_std * Vec2(nx, ny);
      const double n = dir.norm();
      // A degenerate direction keeps the previous heading.
      if (n > 0.0) t.velocity = dir * (walk->speed / n);
    }
    t.position += world.dt * t.velocity;
    reflect(t.position.x(), t.velocity.x(), world.width);
    reflect(t.position.y(), t.velocity.y(), world.height);
  }
  ++world.tick;
  return world;
}

struct RobotStepper {
  static void apply(RobotState& r, const Vec2& u, double dt) {
    r.position_ += dt * u;
    r.velocity_ = u;
  }
};

RobotStepReport step_robot(const RobotState& robot, const Vec2& u, double dt, double u_max) {
  RobotStepReport report{robot, u, false};
  const double n = u.norm();
  if (n > u_max) {
    report.applied = u * (u_max / n);
    report.clamped = true;
  }
  RobotStepper::apply(report.state, report.applied, dt);
  return report;
}

// --- configuration file -----------------------------------------------------

namespace {

Vec2 vec2_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("expected a 2-element array");
  return {j[0].get<double>(), j[1].get<double>()};
}

MotionModel motion_from(const json& j) {
  const std::string kind = j.value("kind", "constant_velocity");
  if (kind == "constant_velocity") return ConstantVelocity{j.value("speed", 0.5)};
  if (kind == "random_walk") return RandomWalk{j.value("speed", 0.5), j.value("noise_std", 0.1)};
  throw ConfigError("unknown motion kind '" + kind + "'");
}

json motion_to(const MotionModel& m) {
  if (const auto* walk = std::get_if<RandomWalk>(&m)) {
    return {{"kind", "random_walk"}, {"speed", walk->speed}, {"noise_std", walk->noise_std}};
  }
  return {{"kind", "constant_velocity"}, {"speed", std::get<ConstantVelocity>(m).speed}};
}

}  // namespace

WorldConfig parse_world_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("world config is not valid JSON: ") + e.what());
  }
  WorldConfig c;
  try {
    if (j.contains("field")) {
      const Vec2 f = vec2_from(j["field"]);
      c.width = f.x();
      c.height = f.y();
    }
    c.dt = j.value("dt", c.dt);
    c.seed = j.value("seed", std::uint64_t{0});
    c.u_max = j.value("u_max", c.u_max);
    c.require_distinct_altitudes = j.value("require_distinct_altitudes", true);
    const int case_number = j.value("case", 0);
    if (case_number < 0 || case_number > 3) throw ConfigError("case must be 1, 2, 3 (or 0 for custom)");
    c.case_id = static_cast<CaseId>(case_number);
    for (const auto& r : j.at("robots")) {
      c.robots.push_back({r.at("id").get<int>(), vec2_from(r.at("position")), r.at("altitude").get<double>()});
    }
    for (const auto& t : j.at("targets")) {
      c.targets.push_back({t.at("id").get<int>(), vec2_from(t.at("position")), t.value("heading", 0.0),
                           motion_from(t.value("motion", json::object()))});
    }
    for (const auto& [robot, targets] : j.at("assignments").items()) {
      auto& set = c.assignments[std::stoi(robot)];
      for (const auto& t : targets) set.insert(t.get<int>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed world config: ") + e.what());
  }
  c.validate();
  return c;
}

WorldConfig load_world_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open world config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_world_config(ss.str());
}

std::string dump_world_config(const WorldConfig& c) {
  json j;
  j["case"] = static_cast<int>(c.case_id);
  j["seed"] = c.seed;
  j["dt"] = c.dt;
  j["field"] = {c.width, c.height};
  j["u_max"] = c.u_max;
  j["require_distinct_altitudes"] = c.require_distinct_altitudes;
  j["robots"] = json::array();
  for (const auto& r : c.robots) {
    j["robots"].push_back({{"id", r.id}, {"position", {r.position.x(), r.position.y()}}, {"altitude", r.altitude}});
  }
  j["targets"] = json::array();
  for (const auto& t : c.targets) {
    j["targets"].push_back({{"id", t.id},
                            {"position", {t.position.x(), t.position.y()}},
                            {"heading", t.heading},
                            {"motion", motion_to(t.motion)}});
  }
  j["assignments"] = json::object();
  for (const auto& [robot, set] : c.assignments) {
    j["assignments"][std::to_string(robot)] = std::vector<int>(set.begin(), set.end());
  }
  return j.dump(2);
}

void write_state_csv_header(std::ostream& os) { os << "t,entity_kind,id,x,y,z,vx,vy\n"; }

void write_state_csv_rows(std::ostream& os, const WorldState& world) {
  const double t = world.time();
  for (const auto& tg : world.targets) {
    os << t << ",target," << tg.id << ',' << tg.position.x() << ',' << tg.position.y() << ",0," << tg.velocity.x()
       << ',' << tg.velocity.y() << '\n';
  }
  for (const auto& r : world.robots) {
    os << t << ",robot," << r.id() << ',' << r.position().x() << ',' << r.position().y() << ',' << r.altitude() << ','
       << r.velocity().x() << ',' << r.velocity().y() << '\n';
  }
}

}  // namespace fedtrack::sim
