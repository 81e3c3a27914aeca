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

// Cloud-side constant-velocity Kalman filter per target. Robot predictions
// are position measurements; each robot's measurement covariance follows an
// exponential moving average of its innovations, and Mahalanobis gating drops
// inconsistent ones.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <vector>

#include <Eigen/Core>

namespace fedtrack::fusion {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;

struct FusionConfig {
  double ema = 0.05;            // rho
  double gate = 9.21;           // chi-square 2 dof, 99%
  double r_init = 1.0;          // R starts at r_init * I
  double r_floor = 1e-4;        // eigenvalue floor of every adapted R
  Vec4 p_init{4.0, 4.0, 1.0, 1.0};
  Vec4 q_rate{0.01, 0.01, 0.05, 0.05};  // Q_proc = diag(q_rate) * dt
};

class FusedTrack {
 public:
  FusedTrack(int target_id, const Vec2& position, const FusionConfig& config, double dt);

  int target_id() const { return target_id_; }
  const Vec4& state() const { return x_; }
  Vec2 position() const { return x_.head<2>(); }
  Vec2 velocity() const { return x_.tail<2>(); }
  const Mat4& covariance() const { return P_; }
  const Mat4& process_noise() const { return Q_; }
  const FusionConfig& config() const { return config_; }

  /// Adapted covariance for `robot`, or the initial one if never updated.
  Mat2 measurement_covariance(int robot) const;
  const std::map<int, Mat2>& measurement_covariances() const { return R_; }

  long accepted() const { return accepted_; }
  long rejected() const { return rejected_; }
  long conditioning_warnings() const { return warnings_; }

  void set_state(const Vec4& x) { x_ = x; }
  void set_covariance(const Mat4& P) { P_ = P; }
  void set_process_noise(const Mat4& Q) { Q_ = Q; }
  void set_measurement_covariance(int robot, const Mat2& R) { R_[robot] = R; }

 private:
  friend struct TrackAccess;
  int target_id_;
  FusionConfig config_;
  Vec4 x_;
  Mat4 P_;
  Mat4 Q_;
  std::map<int, Mat2> R_;
  long accepted_ = 0;
  long rejected_ = 0;
  long warnings_ = 0;
};

Mat4 transition(double dt);

/// x <- F x, P <- F P F^T + Q_proc.
FusedTrack predict_track(FusedTrack track, double dt);

struct FuseResult {
  FusedTrack track;
  bool accepted = false;
  double d2 = 0.0;
  bool ill_conditioned = false;
};

/// Gated measurement update with innovation-driven adaptation of R[robot].
FuseResult fuse_measurement(FusedTrack track, int robot, const Vec2& z);

/// Update with a predicted position `lead_time` seconds ahead of the track
/// time (H = [I, lead_time * I]). R[robot] is read but only adapted when
/// lead_time is zero.
FuseResult fuse_lead_measurement(FusedTrack track, int robot, const Vec2& z, double lead_time);

struct HorizonPoint {
  Vec2 position;
  double trace = 0.0;  // Trace(P) of the full state covariance
};

/// Open-loop rollout without measurements.
std::vector<HorizonPoint> fused_horizon(const FusedTrack& track, int steps, double dt);

/// Eigenvalue floor on a symmetric 2x2 matrix.
Mat2 floor_eigenvalues(const Mat2& m, double floor);

/// Symmetric to `tol` and Cholesky-factorizable.
bool is_valid_covariance(const Eigen::MatrixXd& m, double tol = 1e-9);

void write_track_csv_header(std::ostream& os);
void write_track_csv_row(std::ostream& os, double t, const FusedTrack& track);

}  // namespace fedtrack::fusion
