#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "parkbench/geometry.hpp"

namespace parkbench {

enum class MotionState : std::int8_t { kForward = 1, kReverse = -1, kStationary = 0 };

/// Dead band on signed speed, m/s.
inline constexpr double kStationarySpeed = 0.05;
inline constexpr double kDefaultDt = 0.2;

struct Frame {
  Pose2D pose;
  double speed = 0.0;     ///< m/s, negative when reversing
  double throttle = 0.0;  ///< [0, 1]
  MotionState state = MotionState::kStationary;
};

struct Trajectory {
  std::vector<Frame> frames;
  double dt = kDefaultDt;
  std::string scenario_id;
  Pose2D target_slot;
};

/// Time-samples a segment list. Consecutive segments with the same direction
/// form one run with its own trapezoidal speed profile, stretched so the run
/// lasts a whole number of steps. Every run ends at v = 0 and is followed by
/// one extra pause frame, so a cusp carries two stationary frames. The first
/// frame is the start pose at rest. States are left stationary; label them
/// with label_motion_states.
Trajectory sample_trajectory(std::span<const PathSegment> segments, const Pose2D& start,
                             double v_max, double accel, double dt = kDefaultDt);

}  // namespace parkbench
