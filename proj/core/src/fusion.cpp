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

#include "fedtrack/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "fedtrack/error.hpp"

namespace fedtrack::fusion {

struct TrackAccess {
  static void accept(FusedTrack& t) { ++t.accepted_; }
  static void reject(FusedTrack& t) { ++t.rejected_; }
  static void warn(FusedTrack& t) { ++t.warnings_; }
};

FusedTrack::FusedTrack(int target_id, const Vec2& position, const FusionConfig& config, double dt)
    : target_id_(target_id), config_(config) {
  if (!(config.ema > 0.0 && config.ema < 1.0)) throw ConfigError("EMA factor must lie in (0, 1)");
  if (!(config.gate > 0.0)) throw ConfigError("gating threshold must be positive");
  x_ << position, 0.0, 0.0;
  P_ = config.p_init.asDiagonal();
  Q_ = (config.q_rate * dt).asDiagonal();
}

Mat2 FusedTrack::measurement_covariance(int robot) const {
  auto it = R_.find(robot);
  return it == R_.end() ? Mat2(config_.r_init * Mat2::Identity()) : it->second;
}

Mat4 transition(double dt) {
  Mat4 F = Mat4::Identity();
  F(0, 2) = dt;
  F(1, 3) = dt;
  return F;
}

FusedTrack predict_track(FusedTrack track, double dt) {
  if (!(dt > 0.0)) throw ConfigError("predict_track requires dt > 0");
  const Mat4 F = transition(dt);
  track.set_state(F * track.state());
  Mat4 P = F * track.covariance() * F.transpose() + track.process_noise();
  track.set_covariance(0.5 * (P + P.transpose()));
  return track;
}

Mat2 floor_eigenvalues(const Mat2& m, double floor) {
  const Mat2 sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat2> eig(sym);
  const Eigen::Vector2d clamped = eig.eigenvalues().cwiseMax(floor);
  Mat2 out = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

namespace {

FuseResult update(FusedTrack track, int robot, const Vec2& z, double lead_time, bool adapt) {
  Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
  H(0, 0) = 1.0;
  H(1, 1) = 1.0;
  H(0, 2) = lead_time;
  H(1, 3) = lead_time;

  const Mat2 R = track.measurement_covariance(robot);
  const Vec2 nu = z - H * track.state();
  const Mat2 S = H * track.covariance() * H.transpose() + R;

  FuseResult result{track, false, 0.0, false};
  Eigen::LLT<Mat2> llt(S);
  const double det = S.determinant();
  if (llt.info() != Eigen::Success || !(det > 1e-300) || !nu.allFinite()) {
    TrackAccess::warn(result.track);
    TrackAccess::reject(result.track);
    result.ill_conditioned = true;
    result.d2 = std::numeric_limits<double>::infinity();
    return result;
  }
  const Mat2 S_inv = llt.solve(Mat2::Identity());
  result.d2 = nu.dot(S_inv * nu);
  if (result.d2 > track.config().gate) {
    TrackAccess::reject(result.track);
    return result;
  }

  if (adapt) {
    const double rho = track.config().ema;
    const Mat2 adapted = (1.0 - rho) * R + rho * (nu * nu.transpose());
    result.track.set_measurement_covariance(robot, floor_eigenvalues(adapted, track.config().r_floor));
  }

  const Eigen::Matrix<double, 4, 2> K = track.covariance() * H.transpose() * S_inv;
  result.track.set_state(track.state() + K * nu);
  const Mat4 P = (Mat4::Identity() - K * H) * track.covariance();
  result.track.set_covariance(0.5 * (P + P.transpose()));
  TrackAccess::accept(result.track);
  result.accepted = true;
  return result;
}

}  // namespace

FuseResult fuse_measurement(FusedTrack track, int robot, const Vec2& z) {
  return update(std::move(track), robot, z, 0.0, true);
}

FuseResult fuse_lead_measurement(FusedTrack track, int robot, const Vec2& z, double lead_time) {
  if (!(lead_time >= 0.0)) throw ConfigError("lead time must be non-negative");
  return update(std::move(track), robot, z, lead_time, lead_time == 0.0);
}

std::vector<HorizonPoint> fused_horizon(const FusedTrack& track, int steps, double dt) {
  if (steps < 1) throw ConfigError("horizon must be at least one step");
  std::vector<HorizonPoint> out;
  out.reserve(static_cast<std::size_t>(steps));
  FusedTrack t = track;
  for (int k = 0; k < steps; ++k) {
    t = predict_track(std::move(t), dt);
    out.push_back({t.position(), t.covariance().trace()});
  }
  return out;
}

bool is_valid_covariance(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

void write_track_csv_header(std::ostream& os) {
  os << "t,target_id,px,py,vx,vy,trace_P,n_accepted,n_rejected\n";
}

void write_track_csv_row(std::ostream& os, double t, const FusedTrack& track) {
  const auto& x = track.state();
  os << t << ',' << track.target_id() << ',' << x(0) << ',' << x(1) << ',' << x(2) << ',' << x(3) << ','
     << track.covariance().trace() << ',' << track.accepted() << ',' << track.rejected() << '\n';
}

}  // namespace fedtrack::fusion
