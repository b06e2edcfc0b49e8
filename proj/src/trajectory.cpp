#include <cmath>
#include <stdexcept>

#include "parkbench/trajectory.hpp"

namespace parkbench {
namespace {

struct Run {
  std::vector<PathSegment> segments;
  double length = 0.0;
  double sign = 1.0;
};

std::vector<Run> group_runs(std::span<const PathSegment> segments) {
  std::vector<Run> runs;
  for (const auto& seg : segments) {
    if (seg.arc_length <= 0.0) continue;
    if (runs.empty() || runs.back().sign != seg.sign()) {
      runs.push_back({{}, 0.0, seg.sign()});
    }
    runs.back().segments.push_back(seg);
    runs.back().length += seg.arc_length;
  }
  return runs;
}

// Trapezoid of fixed duration T covering distance L with acceleration a.
struct Profile {
  double length;
  double accel;
  double duration;
  double peak;

  [[nodiscard]] double ramp() const { return peak / accel; }

  [[nodiscard]] double distance(double t) const {
    if (t <= ramp()) return 0.5 * accel * t * t;
    if (t <= duration - ramp()) return 0.5 * peak * ramp() + peak * (t - ramp());
    const double r = duration - t;
    return length - 0.5 * accel * r * r;
  }

  [[nodiscard]] double speed(double t) const {
    if (t <= ramp()) return accel * t;
    if (t <= duration - ramp()) return peak;
    return accel * (duration - t);
  }
};

Profile make_profile(double length, double v_max, double accel, double dt, int& steps) {
  const double v_tri = std::sqrt(length * accel);
  const double t_min = v_tri <= v_max ? 2.0 * v_tri / accel : length / v_max + v_max / accel;
  steps = std::max(1, static_cast<int>(std::ceil(t_min / dt - 1e-9)));
  const double t = steps * dt;
  const double disc = std::max(0.0, t * t - 4.0 * length / accel);
  const double peak = 0.5 * accel * (t - std::sqrt(disc));
  return {length, accel, t, peak};
}

Pose2D pose_along(const Pose2D& start, const Run& run, double s) {
  Pose2D p = start;
  double remaining = s;
  for (const auto& seg : run.segments) {
    if (remaining <= seg.arc_length) return advance(p, seg, remaining);
    p = advance(p, seg, seg.arc_length);
    remaining -= seg.arc_length;
  }
  return p;
}

}  // namespace

Trajectory sample_trajectory(std::span<const PathSegment> segments, const Pose2D& start,
                             double v_max, double accel, double dt) {
  if (!(dt > 0.0) || !(v_max > 0.0) || !(accel > 0.0)) {
    throw std::invalid_argument("sample_trajectory: dt, v_max and accel must be positive");
  }
  Trajectory traj;
  traj.dt = dt;
  traj.frames.push_back({start, 0.0, 0.0, MotionState::kStationary});

  const auto runs = group_runs(segments);
  Pose2D run_start = start;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const Run& run = runs[r];
    int steps = 0;
    const Profile prof = make_profile(run.length, v_max, accel, dt, steps);
    for (int k = 1; k <= steps; ++k) {
      const double t = k * dt;
      Frame f;
      if (k == steps) {
        f.pose = drive(run_start, run.segments);
        f.speed = 0.0;
      } else {
        f.pose = pose_along(run_start, run, prof.distance(t));
        f.speed = run.sign * prof.speed(t);
        if (t <= prof.ramp()) {
          f.throttle = 1.0;
        } else if (t <= prof.duration - prof.ramp()) {
          f.throttle = 0.3;
        }
      }
      traj.frames.push_back(f);
    }
    run_start = traj.frames.back().pose;
    if (r + 1 < runs.size()) {
      traj.frames.push_back({run_start, 0.0, 0.0, MotionState::kStationary});
    }
  }
  return traj;
}

}  // namespace parkbench
