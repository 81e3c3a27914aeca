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

#include "fedtrack/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <Eigen/LU>

#include "fedtrack/error.hpp"

namespace fedtrack::planner {

void PlannerConfig::validate() const {
  if (!(h > 0.0)) throw ConfigError("planner h must be positive");
  if (omega < 0.0 || alpha < 0.0 || beta < 0.0) throw ConfigError("planner weights must be non-negative");
  if (!(u_max > 0.0)) throw ConfigError("planner u_max must be positive");
  if (n_speed < 1 || n_heading < 1) throw ConfigError("planner grid must be non-empty");
  if (horizon < 1) throw ConfigError("planner horizon must be at least 1");
  if (!(d0 > 0.0)) throw ConfigError("planner d0 must be positive");
  if (!(width > 0.0 && height > 0.0)) throw ConfigError("planner field must be non-empty");
}

std::vector<Candidate> candidates(const PlannerConfig& cfg) {
  std::vector<Candidate> out;
  out.reserve(static_cast<std::size_t>(1 + cfg.n_speed * cfg.n_heading));
  out.push_back({Vec2::Zero(), -1});
  for (int s = 1; s <= cfg.n_speed; ++s) {
    const double speed = cfg.u_max * s / cfg.n_speed;
    for (int k = 0; k < cfg.n_heading; ++k) {
      const double th = 2.0 * std::numbers::pi * k / cfg.n_heading;
      out.push_back({Vec2(speed * std::cos(th), speed * std::sin(th)), k});
    }
  }
  return out;
}

double tracking_cost(const Vec2& p_next, const Vec2& z_next, double trace_p, const PlannerConfig& cfg) {
  return std::max((p_next - z_next).norm(), cfg.h) + cfg.alpha * trace_p;
}

namespace {

using fusion::Mat2;
using fusion::Mat4;

double hypothetical_update_trace(const fusion::FusedTrack& predicted, const Vec2& p_next, const PlannerConfig& cfg,
                                 int robot) {
  const double d = (p_next - predicted.position()).norm();
  const Mat2 R = predicted.measurement_covariance(robot) * (1.0 + (d / cfg.d0) * (d / cfg.d0));
  const Mat4& P = predicted.covariance();
  const Mat2 Ppp = P.topLeftCorner<2, 2>();
  const Mat2 S = Ppp + R;
  // Position block of (I - K H) P with K = P H^T S^-1.
  const Mat2 post = Ppp - Ppp * S.inverse() * Ppp;
  return post.trace();
}

bool inside(const Vec2& p, const PlannerConfig& cfg) {
  return p.x() >= 0.0 && p.x() <= cfg.width && p.y() >= 0.0 && p.y() <= cfg.height;
}

}  // namespace

double planned_trace(const fusion::FusedTrack& track, const Vec2& p_next, double dt, const PlannerConfig& cfg,
                     int robot) {
  return hypothetical_update_trace(fusion::predict_track(track, dt), p_next, cfg, robot);
}

std::vector<CandidateCost> evaluate_candidates(const sim::RobotState& robot,
                                               const std::map<int, fusion::FusedTrack>& tracks,
                                               const std::set<int>& assigned, const PlannerConfig& cfg, double dt,
                                               const Vec2& previous_u, std::span<const Candidate> cands) {
  // Rollouts of every assigned track, k = 0..horizon-1 steps ahead of the
  // fused estimate; entry k is the anchor for step k+1 of the robot.
  std::vector<std::vector<fusion::FusedTrack>> rollouts;
  std::vector<std::vector<fusion::FusedTrack>> predicted;
  for (int j : assigned) {
    auto it = tracks.find(j);
    if (it == tracks.end()) throw StructuralError("planner: no live track for target " + std::to_string(j));
    std::vector<fusion::FusedTrack> roll{it->second};
    std::vector<fusion::FusedTrack> pred;
    for (int k = 0; k < cfg.horizon; ++k) {
      pred.push_back(fusion::predict_track(roll.back(), dt));
      if (k + 1 < cfg.horizon) roll.push_back(pred.back());
    }
    rollouts.push_back(std::move(roll));
    predicted.push_back(std::move(pred));
  }

  std::vector<CandidateCost> out(cands.size());
  for (std::size_t c = 0; c < cands.size(); ++c) {
    const Vec2& u = cands[c].u;
    double J = 0.0;
    Vec2 p = robot.position();
    bool feasible = true;
    for (int k = 0; k < cfg.horizon; ++k) {
      p = p + u * dt;
      if (!inside(p, cfg)) {
        feasible = false;
        break;
      }
      for (std::size_t j = 0; j < rollouts.size(); ++j) {
        const double tr = hypothetical_update_trace(predicted[j][static_cast<std::size_t>(k)], p, cfg, robot.id());
        J += tracking_cost(p, rollouts[j][static_cast<std::size_t>(k)].position(), tr, cfg);
      }
    }
    J += cfg.omega * u.norm();
    if (cfg.beta > 0.0) J += cfg.beta * (u - previous_u).squaredNorm();
    out[c] = {J, feasible};
  }
  return out;
}

int select_candidate(std::span<const CandidateCost> costs, std::span<const Candidate> cands) {
  int best = -1;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!costs[i].feasible) continue;
    if (best < 0) {
      best = static_cast<int>(i);
      continue;
    }
    const auto b = static_cast<std::size_t>(best);
    if (costs[i].J < costs[b].J) {
      best = static_cast<int>(i);
    } else if (costs[i].J == costs[b].J) {
      const double ni = cands[i].u.norm();
      const double nb = cands[b].u.norm();
      if (ni < nb || (ni == nb && cands[i].heading < cands[b].heading)) best = static_cast<int>(i);
    }
  }
  return best;
}

RobotPlan plan_robot(const sim::RobotState& robot, const std::map<int, fusion::FusedTrack>& tracks,
                     const std::set<int>& assigned, const PlannerConfig& cfg, double dt, const Vec2& previous_u) {
  if (assigned.empty()) throw StructuralError("planner: robot " + std::to_string(robot.id()) + " has no targets");
  const auto cands = candidates(cfg);
  const auto costs = evaluate_candidates(robot, tracks, assigned, cfg, dt, previous_u, cands);
  RobotPlan plan;
  plan.n_candidates = static_cast<int>(cands.size());
  plan.n_infeasible =
      static_cast<int>(std::count_if(costs.begin(), costs.end(), [](const CandidateCost& c) { return !c.feasible; }));
  const int best = select_candidate(costs, cands);
  if (best < 0) {
    plan.infeasible_warning = true;
    plan.u = Vec2::Zero();
    plan.J = costs.front().J;
    return plan;
  }
  plan.u = cands[static_cast<std::size_t>(best)].u;
  plan.J = costs[static_cast<std::size_t>(best)].J;
  return plan;
}

std::map<int, RobotPlan> plan_step(std::span<const sim::RobotState> robots,
                                   const std::map<int, fusion::FusedTrack>& tracks,
                                   const std::map<int, std::set<int>>& assignments, const PlannerConfig& cfg,
                                   double dt, const std::map<int, Vec2>& previous_u) {
  cfg.validate();
  std::map<int, RobotPlan> out;
  for (const auto& r : robots) {
    auto a = assignments.find(r.id());
    if (a == assignments.end()) throw StructuralError("planner: robot " + std::to_string(r.id()) + " unassigned");
    auto pu = previous_u.find(r.id());
    out[r.id()] = plan_robot(r, tracks, a->second, cfg, dt, pu == previous_u.end() ? Vec2::Zero() : pu->second);
  }
  return out;
}

void write_planner_csv_header(std::ostream& os) { os << "t,robot_id,u_x,u_y,J_selected,n_candidates,n_infeasible\n"; }

void write_planner_csv_row(std::ostream& os, double t, int robot, const RobotPlan& plan) {
  os << t << ',' << robot << ',' << plan.u.x() << ',' << plan.u.y() << ',' << plan.J << ',' << plan.n_candidates
     << ',' << plan.n_infeasible << '\n';
}

}  // namespace fedtrack::planner
