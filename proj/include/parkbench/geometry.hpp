#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace parkbench {

inline constexpr double kPi = std::numbers::pi;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Planar pose. theta lives in (-pi, pi] once normalized.
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

/// Wraps an angle into (-pi, pi]. Throws std::domain_error on NaN or inf.
double normalize_angle(double a);

/// Expresses `world` in the coordinates of `frame` (rigid inverse transform).
Pose2D pose_in_frame(const Pose2D& world, const Pose2D& frame);

/// Inverse of pose_in_frame: maps a pose given in `frame` back to world.
Pose2D pose_from_frame(const Pose2D& local, const Pose2D& frame);

enum class Direction { kForward, kBackward };

struct PathSegment {
  Direction direction = Direction::kForward;
  double curvature = 0.0;   ///< 1/m, one of {-1/r_min, 0, +1/r_min}
  double arc_length = 0.0;  ///< m, >= 0

  [[nodiscard]] double sign() const { return direction == Direction::kForward ? 1.0 : -1.0; }
};

/// Pose after travelling `s` metres (0 <= s <= arc_length) along `seg` under
/// unicycle kinematics. Closed form, no integration error.
Pose2D advance(const Pose2D& start, const PathSegment& seg, double s);

/// Drives every segment in order from `start`.
Pose2D drive(const Pose2D& start, std::span<const PathSegment> segments);

double path_length(std::span<const PathSegment> segments);

/// Number of forward/backward alternations along the segment list.
int count_direction_changes(std::span<const PathSegment> segments);

/// Shortest path over the Reeds-Shepp word families (CSC, CCC, CCCC, CCSC,
/// CCSCC) with minimum turning radius `r_min`. Returns an empty list when
/// start == goal. Throws PlanningFailed when no word reaches the goal.
std::vector<PathSegment> plan_expert_path(const Pose2D& start, const Pose2D& goal, double r_min);

struct OrientedBox {
  Pose2D center;
  double half_length = 0.0;  ///< along center.theta
  double half_width = 0.0;
};

/// Separating-axis overlap test over the four box axes. Touching counts as overlap.
bool obb_intersect(const OrientedBox& a, const OrientedBox& b);

/// True iff the point lies inside (or on) the box.
bool obb_contains(const OrientedBox& box, double x, double y);

/// Corners in counter-clockwise order starting front-left.
std::vector<std::pair<double, double>> obb_corners(const OrientedBox& box);

/// Ego vehicle geometry. The pose reference point is the footprint center.
struct VehicleParams {
  double wheelbase = 2.9;
  double max_steer_deg = 30.0;
  double length = 4.7;
  double width = 1.9;

  [[nodiscard]] double r_min() const { return wheelbase / std::tan(deg2rad(max_steer_deg)); }
  [[nodiscard]] OrientedBox footprint(const Pose2D& pose, double inflation = 0.0) const {
    return {pose, 0.5 * length + inflation, 0.5 * width + inflation};
  }
};

}  // namespace parkbench
