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

#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "fedtrack/fusion.hpp"
#include "fedtrack/sim.hpp"

namespace fedtrack::planner {

using Vec2 = Eigen::Vector2d;

struct PlannerConfig {
  double omega = 0.005;  // control effort weight
  double alpha = 50.0;   // covariance trace weight
  double h = 2.0;        // distance clamp, m
  double u_max = 2.0;
  int n_speed = 3;
  int n_heading = 16;
  int horizon = 1;
  double beta = 0.0;   // optional speed-change weight
  double d0 = 10.0;    // planned measurement noise length scale, m
  double width = 160.0;
  double height = 120.0;

  void validate() const;
};

struct Candidate {
  Vec2 u = Vec2::Zero();
  int heading = -1;  // -1 for the zero control
};

/// Zero control first, then speeds u_max * s / n_speed for s = 1..n_speed,
/// each over headings 2 pi k / n_heading.
std::vector<Candidate> candidates(const PlannerConfig& cfg);

/// max(|p - z|, h) + alpha * trace_p.
double tracking_cost(const Vec2& p_next, const Vec2& z_next, double trace_p, const PlannerConfig& cfg);

/// Position-block trace after one predict step and a hypothetical update
/// with R_base * (1 + (d / d0)^2).
double planned_trace(const fusion::FusedTrack& track, const Vec2& p_next, double dt, const PlannerConfig& cfg,
                     int robot);

struct CandidateCost {
  double J = 0.0;
  bool feasible = true;
};

/// Cost of every candidate for one robot. Tracks must contain every target in
/// `assigned`.
std::vector<CandidateCost> evaluate_candidates(const sim::RobotState& robot,
                                               const std::map<int, fusion::FusedTrack>& tracks,
                                               const std::set<int>& assigned, const PlannerConfig& cfg, double dt,
                                               const Vec2& previous_u, std::span<const Candidate> cands);

/// Index of the argmin over feasible entries; ties go to the smaller control
/// norm, then the smaller heading index. -1 when nothing is feasible.
int select_candidate(std::span<const CandidateCost> costs, std::span<const Candidate> cands);

struct RobotPlan {
  Vec2 u = Vec2::Zero();
  double J = 0.0;
  int n_candidates = 0;
  int n_infeasible = 0;
  bool infeasible_warning = false;
};

RobotPlan plan_robot(const sim::RobotState& robot, const std::map<int, fusion::FusedTrack>& tracks,
                     const std::set<int>& assigned, const PlannerConfig& cfg, double dt,
                     const Vec2& previous_u = Vec2::Zero());

/// Independent per-robot selection. Every robot needs at least one assigned
/// target with a live track.
std::map<int, RobotPlan> plan_step(std::span<const sim::RobotState> robots,
                                   const std::map<int, fusion::FusedTrack>& tracks,
                                   const std::map<int, std::set<int>>& assignments, const PlannerConfig& cfg,
                                   double dt, const std::map<int, Vec2>& previous_u = {});

void write_planner_csv_header(std::ostream& os);
void write_planner_csv_row(std::ostream& os, double t, int robot, const RobotPlan& plan);

}  // namespace fedtrack::planner
