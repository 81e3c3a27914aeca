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

// Synthetic detector (analytic pinhole projection of labeled targets) and the
// per-robot onboard log of boxes plus odometry.

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "fedtrack/sim.hpp"
#include "fedtrack/window.hpp"

namespace fedtrack::perception {

using sim::Odometry;
using sim::RobotId;
using sim::TargetId;
using sim::Vec2;

struct CameraModel {
  int image_width = 640;
  int image_height = 640;
  double horizontal_fov = 1.5707963267948966;
  double pixel_noise_std = 2.0;
  double miss_probability = 0.02;
  double footprint_length = 4.0;  // along world x, metres
  double footprint_width = 2.0;   // along world y, metres

  void validate() const;
  /// (image_width / 2) / tan(fov / 2), in pixels.
  double focal_length() const;
};

/// Normalized (cx, cy, w, h); image axes are aligned with world x and y.
struct BoundingBox {
  double cx = 0.5;
  double cy = 0.5;
  double w = 0.0;
  double h = 0.0;
};

struct Detection {
  RobotId robot = 0;
  TargetId target = 0;
  BoundingBox bbox;
  std::int64_t tick = 0;
  double timestamp = 0.0;
};

/// Projects each target through the robot's downward camera. Targets outside
/// the image are skipped; each remaining one is dropped with
/// `miss_probability` and otherwise perturbed by Gaussian pixel noise.
std::vector<Detection> detect(const CameraModel& camera, const sim::RobotState& robot,
                              std::span<const sim::TargetState> targets, std::int64_t tick, double timestamp,
                              sim::Rng& rng);

/// Ground position implied by a box centre seen from a known pose.
Vec2 back_project(const CameraModel& camera, const BoundingBox& bbox, const sim::RobotState& robot);

struct LogEntry {
  Detection detection;
  Odometry odometry{};
  std::optional<Vec2> label;
};

/// Onboard store for one robot: a bounded, time-ordered ring per assigned
/// target. Missing ticks are simply absent.
class OnboardLog {
 public:
  explicit OnboardLog(RobotId robot, std::size_t capacity = 4096);

  RobotId robot() const { return robot_; }
  std::size_t capacity() const { return capacity_; }

  /// Throws MonotonicityError unless the tick is strictly newer than the last
  /// entry for that target.
  void append(const Detection& detection, const Odometry& odometry, std::optional<Vec2> label = std::nullopt);

  /// Sets the label of the entry at `tick`; returns false if no such entry.
  bool attach_label(TargetId target, std::int64_t tick, const Vec2& label);

  const std::deque<LogEntry>& entries(TargetId target) const;
  std::vector<TargetId> targets() const;
  std::size_t size(TargetId target) const;

 private:
  RobotId robot_;
  std::size_t capacity_;
  std::map<TargetId, std::deque<LogEntry>> rings_;
};

/// Sliding windows over every run of consecutive ticks. Windows whose future
/// entries lack a label are skipped.
std::vector<SampleWindow> extract_windows(const OnboardLog& log, int past, int future);
std::vector<SampleWindow> extract_windows(const OnboardLog& log, TargetId target, int past, int future);

/// Features of the most recent `past` entries when they are consecutive and
/// end at `tick`; labels are left empty.
std::optional<SampleWindow> latest_window(const OnboardLog& log, TargetId target, int past, std::int64_t tick);

void write_detection_csv_header(std::ostream& os);
void write_detection_csv_rows(std::ostream& os, std::span<const Detection> detections);

}  // namespace fedtrack::perception
