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

#include <cstdint>

#include <Eigen/Core>

namespace fedtrack {

/// Per-step feature width: bbox (cx, cy, w, h) followed by the 12-vector
/// odometry.
inline constexpr int kFeatureWidth = 16;
inline constexpr int kBboxWidth = 4;
// Column offsets of the robot's horizontal position inside a feature row.
inline constexpr int kOdomX = kBboxWidth + 0;
inline constexpr int kOdomY = kBboxWidth + 1;
inline constexpr int kOdomZ = kBboxWidth + 2;

/// One training or inference sample for a (robot, target) pair. Positions are
/// stored in the absolute field frame; recalibration happens inside the
/// predictor.
struct SampleWindow {
  int robot = 0;
  int target = 0;
  std::int64_t end_tick = 0;
  Eigen::MatrixXd features;  // L_p x 16
  double altitude = 0.0;
  Eigen::Vector2d anchor = Eigen::Vector2d::Zero();
  Eigen::MatrixXd labels;  // L_f x 2, empty for inference-only windows
};

}  // namespace fedtrack
