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

#include "fedtrack/perception.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "fedtrack/error.hpp"

namespace fedtrack::perception {

void CameraModel::validate() const {
  if (image_width <= 0 || image_height <= 0) throw ConfigError("image size must be positive");
  if (!(horizontal_fov > 0.0 && horizontal_fov < std::numbers::pi)) throw ConfigError("fov must lie in (0, pi)");
  if (!(pixel_noise_std >= 0.0)) throw ConfigError("pixel noise must be non-negative");
  if (!(miss_probability >= 0.0 && miss_probability < 1.0)) throw ConfigError("miss probability must lie in [0, 1)");
  if (!(footprint_length > 0.0 && footprint_width > 0.0)) throw ConfigError("target footprint must be positive");
}

double CameraModel::focal_length() const { return 0.5 * image_width / std::tan(0.5 * horizontal_fov); }

std::vector<Detection> detect(const CameraModel& camera, const sim::RobotState& robot,
                              std::span<const sim::TargetState> targets, std::int64_t tick, double timestamp,
                              sim::Rng& rng) {
  if (!(robot.altitude() > 0.0)) throw ConfigError("detect requires a positive altitude");
  const double f = camera.focal_length();
  const double scale = f / robot.altitude();  // pixels per metre on the ground
  const double half_w = 0.5 * camera.image_width;
  const double half_h = 0.5 * camera.image_height;

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<Detection> out;
  for (const auto& target : targets) {
    const Vec2 offset = target.position - robot.position();
    const double u = offset.x() * scale;
    const double v = offset.y() * scale;
    if (std::abs(u) > half_w || std::abs(v) > half_h) continue;

    // Draw the same number of variates per visible target so a miss does not
    // shift the noise stream of the others.
    const bool missed = coin(rng) < camera.miss_probability;
    const double s = camera.pixel_noise_std;
    const double du = s * noise(rng);
    const double dv = s * noise(rng);
    const double dw = s * noise(rng);
    const double dh = s * noise(rng);
    if (missed) continue;

    const double cx_px = half_w + u + du;
    const double cy_px = half_h + v + dv;
    const double w_px = std::max(1.0, camera.footprint_length * scale + dw);
    const double h_px = std::max(1.0, camera.footprint_width * scale + dh);

    Detection d;
    d.robot = robot.id();
    d.target = target.id;
    d.tick = tick;
    d.timestamp = timestamp;
    d.bbox.cx = std::clamp(cx_px / camera.image_width, 0.0, 1.0);
    d.bbox.cy = std::clamp(cy_px / camera.image_height, 0.0, 1.0);
    d.bbox.w = std::min(1.0, w_px / camera.image_width);
    d.bbox.h = std::min(1.0, h_px / camera.image_height);
    out.push_back(d);
  }
  return out;
}

Vec2 back_project(const CameraModel& camera, const BoundingBox& bbox, const sim::RobotState& robot) {
  const double metres_per_px = robot.altitude() / camera.focal_length();
  const double u = (bbox.cx - 0.5) * camera.image_width;
  const double v = (bbox.cy - 0.5) * camera.image_height;
  return robot.position() + metres_per_px * Vec2(u, v);
}

OnboardLog::OnboardLog(RobotId robot, std::size_t capacity) : robot_(robot), capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("onboard log capacity must be positive");
}

void OnboardLog::append(const Detection& detection, const Odometry& odometry, std::optional<Vec2> label) {
  if (detection.robot != robot_) {
    throw StructuralError("detection from robot " + std::to_string(detection.robot) + " appended to log of robot " +
                          std::to_string(robot_));
  }
  auto& ring = rings_[detection.target];
  if (!ring.empty() && detection.tick <= ring.back().detection.tick) {
    throw MonotonicityError("tick " + std::to_string(detection.tick) + " is not after " +
                            std::to_string(ring.back().detection.tick) + " for target " +
                            std::to_string(detection.target));
  }
  ring.push_back({detection, odometry, label});
  while (ring.size() > capacity_) ring.pop_front();
}

bool OnboardLog::attach_label(TargetId target, std::int64_t tick, const Vec2& label) {
  auto it = rings_.find(target);
  if (it == rings_.end()) return false;
  auto& ring = it->second;
  // Labels usually land on the newest entry; search from the back.
  for (auto e = ring.rbegin(); e != ring.rend(); ++e) {
    if (e->detection.tick == tick) {
      e->label = label;
      return true;
    }
    if (e->detection.tick < tick) break;
  }
  return false;
}

const std::deque<LogEntry>& OnboardLog::entries(TargetId target) const {
  static const std::deque<LogEntry> kEmpty;
  auto it = rings_.find(target);
  return it == rings_.end() ? kEmpty : it->second;
}

std::vector<TargetId> OnboardLog::targets() const {
  std::vector<TargetId> ids;
  for (const auto& [id, ring] : rings_) ids.push_back(id);
  return ids;
}

std::size_t OnboardLog::size(TargetId target) const { return entries(target).size(); }

namespace {

void fill_row(Eigen::MatrixXd& features, int row, const LogEntry& e) {
  features(row, 0) = e.detection.bbox.cx;
  features(row, 1) = e.detection.bbox.cy;
  features(row, 2) = e.detection.bbox.w;
  features(row, 3) = e.detection.bbox.h;
  for (int k = 0; k < 12; ++k) features(row, kBboxWidth + k) = e.odometry[static_cast<std::size_t>(k)];
}

SampleWindow past_window(const std::deque<LogEntry>& ring, std::size_t first, int past) {
  SampleWindow w;
  const auto& last = ring[first + static_cast<std::size_t>(past) - 1];
  w.robot = last.detection.robot;
  w.target = last.detection.target;
  w.end_tick = last.detection.tick;
  w.features.resize(past, kFeatureWidth);
  for (int r = 0; r < past; ++r) fill_row(w.features, r, ring[first + static_cast<std::size_t>(r)]);
  w.altitude = last.odometry[2];
  w.anchor = Vec2(last.odometry[0], last.odometry[1]);
  return w;
}

}  // namespace

std::vector<SampleWindow> extract_windows(const OnboardLog& log, TargetId target, int past, int future) {
  if (past < 1 || future < 1) throw ConfigError("window lengths must be at least 1");
  const auto& ring = log.entries(target);
  const std::size_t span = static_cast<std::size_t>(past + future);
  std::vector<SampleWindow> out;

  std::size_t run_start = 0;
  for (std::size_t i = 1; i <= ring.size(); ++i) {
    const bool run_ends = i == ring.size() || ring[i].detection.tick != ring[i - 1].detection.tick + 1;
    if (!run_ends) continue;
    const std::size_t run_len = i - run_start;
    for (std::size_t s = run_start; run_len >= span && s + span <= i; ++s) {
      bool labeled = true;
      for (std::size_t k = s + static_cast<std::size_t>(past); k < s + span; ++k) labeled = labeled && ring[k].label;
      if (!labeled) continue;
      SampleWindow w = past_window(ring, s, past);
      w.labels.resize(future, 2);
      for (int k = 0; k < future; ++k) {
        const Vec2& p = *ring[s + static_cast<std::size_t>(past + k)].label;
        w.labels(k, 0) = p.x();
        w.labels(k, 1) = p.y();
      }
      out.push_back(std::move(w));
    }
    run_start = i;
  }
  return out;
}

std::vector<SampleWindow> extract_windows(const OnboardLog& log, int past, int future) {
  std::vector<SampleWindow> out;
  for (TargetId t : log.targets()) {
    auto part = extract_windows(log, t, past, future);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

std::optional<SampleWindow> latest_window(const OnboardLog& log, TargetId target, int past, std::int64_t tick) {
  const auto& ring = log.entries(target);
  const std::size_t n = static_cast<std::size_t>(past);
  if (past < 1 || ring.size() < n) return std::nullopt;
  const std::size_t first = ring.size() - n;
  if (ring.back().detection.tick != tick) return std::nullopt;
  if (ring[first].detection.tick != tick - (past - 1)) return std::nullopt;
  return past_window(ring, first, past);
}

void write_detection_csv_header(std::ostream& os) { os << "t,robot_id,target_id,cx,cy,w,h\n"; }

void write_detection_csv_rows(std::ostream& os, std::span<const Detection> detections) {
  for (const auto& d : detections) {
    os << d.timestamp << ',' << d.robot << ',' << d.target << ',' << d.bbox.cx << ',' << d.bbox.cy << ','
       << d.bbox.w << ',' << d.bbox.h << '\n';
  }
}

}  // namespace fedtrack::perception
