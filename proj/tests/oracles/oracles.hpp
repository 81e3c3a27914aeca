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

// Reference computations used by the tests. Everything here is written
// against plain arrays and Eigen only; nothing calls into the library code
// under test except where a function is explicitly a thin driver (the
// finite-difference oracle evaluates the library's scalar loss).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "fedtrack/predictor.hpp"
#include "fedtrack/window.hpp"

namespace oracle {

// --- pinhole -----------------------------------------------------------------

/// Normalized horizontal box centre of a ground point `dx` metres from the
/// nadir, for a square image of `pixels` and horizontal field of view `fov`.
inline double pinhole_centre(double dx, double altitude, double fov, int pixels) {
  const double focal = (pixels / 2.0) / std::tan(fov / 2.0);
  return 0.5 + focal * dx / altitude / pixels;
}

// --- window counting ---------------------------------------------------------

/// Number of sliding windows over a sorted tick list.
inline std::size_t window_count(const std::vector<long>& ticks, int past, int future) {
  std::size_t total = 0;
  std::size_t run = 0;
  for (std::size_t i = 0; i < ticks.size(); ++i) {
    run = (i > 0 && ticks[i] == ticks[i - 1] + 1) ? run + 1 : 1;
    const bool run_ends = i + 1 == ticks.size() || ticks[i + 1] != ticks[i] + 1;
    if (run_ends) {
      const long n = static_cast<long>(run) - past - future + 1;
      total += n > 0 ? static_cast<std::size_t>(n) : 0;
    }
  }
  return total;
}

// --- Kalman filter -----------------------------------------------------------

using M4 = Eigen::Matrix4d;
using M2 = Eigen::Matrix2d;
using V4 = Eigen::Vector4d;
using V2 = Eigen::Vector2d;

inline M4 cv_transition(double dt) {
  M4 F = M4::Identity();
  F(0, 2) = dt;
  F(1, 3) = dt;
  return F;
}

struct KfState {
  V4 x;
  M4 P;
};

inline KfState kf_predict(const KfState& s, const M4& Q, double dt) {
  const M4 F = cv_transition(dt);
  return {F * s.x, F * s.P * F.transpose() + Q};
}

/// Textbook update with H = [I 0]; returns the posterior.
inline KfState kf_update(const KfState& s, const V2& z, const M2& R) {
  Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
  H(0, 0) = 1.0;
  H(1, 1) = 1.0;
  const M2 S = H * s.P * H.transpose() + R;
  const Eigen::Matrix<double, 4, 2> K = s.P * H.transpose() * S.inverse();
  return {s.x + K * (z - H * s.x), (M4::Identity() - K * H) * s.P};
}

// --- planner -----------------------------------------------------------------

struct PlanTarget {
  V4 x;       // fused state
  M4 P;       // fused covariance
  M4 Q;       // process noise for one step
  M2 R;       // robot's measurement covariance
};

struct PlanInput {
  V2 robot;
  V2 previous_u = V2::Zero();
  std::vector<PlanTarget> targets;
  double dt = 0.2;
  double omega = 0.005, alpha = 50.0, h = 2.0, u_max = 2.0, beta = 0.0, d0 = 10.0;
  double width = 160.0, height = 120.0;
  int n_speed = 3, n_heading = 16;
};

struct PlanChoice {
  V2 u;
  double J = std::numeric_limits<double>::infinity();
  double runner_up = std::numeric_limits<double>::infinity();
  std::vector<double> costs;  // per candidate in grid order, +inf when infeasible
};

/// Exhaustive one-step search: zero control first, then speed rings outward,
/// headings counter-clockwise from +x.
inline PlanChoice brute_force_plan(const PlanInput& in) {
  std::vector<V2> grid{V2::Zero()};
  for (int s = 1; s <= in.n_speed; ++s) {
    for (int k = 0; k < in.n_heading; ++k) {
      const double a = 2.0 * std::numbers::pi * k / in.n_heading;
      const double v = in.u_max * s / in.n_speed;
      grid.emplace_back(v * std::cos(a), v * std::sin(a));
    }
  }
  PlanChoice best;
  for (const V2& u : grid) {
    const V2 p = in.robot + in.dt * u;
    double J = std::numeric_limits<double>::infinity();
    if (p.x() >= 0.0 && p.x() <= in.width && p.y() >= 0.0 && p.y() <= in.height) {
      J = 0.0;
      for (const auto& t : in.targets) {
        const KfState pred = kf_predict({t.x, t.P}, t.Q, in.dt);
        const double d = (p - pred.x.head<2>()).norm();
        const M2 R = t.R * (1.0 + (d / in.d0) * (d / in.d0));
        const double tr = kf_update(pred, pred.x.head<2>(), R).P.topLeftCorner<2, 2>().trace();
        J += std::max((p - t.x.head<2>()).norm(), in.h) + in.alpha * tr;
      }
      J += in.omega * u.norm() + in.beta * (u - in.previous_u).squaredNorm();
    }
    best.costs.push_back(J);
    if (J < best.J) {
      best.runner_up = best.J;
      best.J = J;
      best.u = u;
    } else if (J < best.runner_up) {
      best.runner_up = J;
    }
  }
  return best;
}

// --- normalization -----------------------------------------------------------

/// Per-column mean and population standard deviation.
inline void column_stats(const Eigen::MatrixXd& z, int col, double& mean, double& stddev) {
  mean = 0.0;
  for (int r = 0; r < z.rows(); ++r) mean += z(r, col);
  mean /= static_cast<double>(z.rows());
  double var = 0.0;
  for (int r = 0; r < z.rows(); ++r) var += (z(r, col) - mean) * (z(r, col) - mean);
  stddev = std::sqrt(var / static_cast<double>(z.rows()));
}

// --- finite differences ------------------------------------------------------

/// Central differences of the library's scalar loss evaluated in long double.
inline std::vector<long double> finite_difference_gradient(
    const fedtrack::predictor::PredictorConfig& config, const fedtrack::predictor::ParamLayout& layout,
    const std::vector<double>& params, const std::vector<fedtrack::predictor::PreparedWindow>& batch,
    long double step) {
  std::vector<long double> p(params.begin(), params.end());
  std::vector<long double> grad(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const long double saved = p[i];
    p[i] = saved + step;
    const long double up = fedtrack::predictor::batch_loss<long double>(config, layout, p, batch);
    p[i] = saved - step;
    const long double down = fedtrack::predictor::batch_loss<long double>(config, layout, p, batch);
    p[i] = saved;
    grad[i] = (up - down) / (2 * step);
  }
  return grad;
}

// --- fixtures ----------------------------------------------------------------

/// Random window with plausible magnitudes: boxes near the image centre,
/// robot positions scattered around `anchor`, labels near the anchor.
inline fedtrack::SampleWindow random_window(int past, int future, double altitude, const V2& anchor,
                                            std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.3, 0.7);
  fedtrack::SampleWindow w;
  w.features = Eigen::MatrixXd::Zero(past, fedtrack::kFeatureWidth);
  for (int r = 0; r < past; ++r) {
    w.features(r, 0) = u(rng);
    w.features(r, 1) = u(rng);
    w.features(r, 2) = 0.1 + 0.01 * n(rng);
    w.features(r, 3) = 0.05 + 0.01 * n(rng);
    w.features(r, fedtrack::kOdomX) = anchor.x() + n(rng);
    w.features(r, fedtrack::kOdomY) = anchor.y() + n(rng);
    w.features(r, fedtrack::kOdomZ) = altitude;
    w.features(r, fedtrack::kBboxWidth + 6) = 0.5 * n(rng);
    w.features(r, fedtrack::kBboxWidth + 7) = 0.5 * n(rng);
  }
  w.features.row(past - 1).segment(fedtrack::kOdomX, 2) = anchor.transpose();
  w.altitude = altitude;
  w.anchor = anchor;
  w.labels.resize(future, 2);
  for (int r = 0; r < future; ++r) {
    w.labels(r, 0) = anchor.x() + n(rng);
    w.labels(r, 1) = anchor.y() + n(rng);
  }
  return w;
}

}  // namespace oracle
