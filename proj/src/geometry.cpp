#include "parkbench/geometry.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <stdexcept>

namespace parkbench {

double normalize_angle(double a) {
  if (!std::isfinite(a)) {
    throw std::domain_error("normalize_angle: non-finite angle");
  }
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) {
    r += 2.0 * kPi;
  }
  return r;
}

Pose2D pose_in_frame(const Pose2D& world, const Pose2D& frame) {
  const double dx = world.x - frame.x;
  const double dy = world.y - frame.y;
  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  return {c * dx + s * dy, -s * dx + c * dy, normalize_angle(world.theta - frame.theta)};
}

Pose2D pose_from_frame(const Pose2D& local, const Pose2D& frame) {
  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  return {frame.x + c * local.x - s * local.y, frame.y + s * local.x + c * local.y,
          normalize_angle(local.theta + frame.theta)};
}

Pose2D advance(const Pose2D& start, const PathSegment& seg, double s) {
  const double signed_s = seg.sign() * s;
  if (seg.curvature == 0.0) {
    return {start.x + signed_s * std::cos(start.theta), start.y + signed_s * std::sin(start.theta),
            start.theta};
  }
  const double k = seg.curvature;
  const double th1 = start.theta + k * signed_s;
  return {start.x + (std::sin(th1) - std::sin(start.theta)) / k,
          start.y - (std::cos(th1) - std::cos(start.theta)) / k, normalize_angle(th1)};
}

Pose2D drive(const Pose2D& start, std::span<const PathSegment> segments) {
  Pose2D p = start;
  for (const auto& seg : segments) {
    p = advance(p, seg, seg.arc_length);
  }
  return p;
}

double path_length(std::span<const PathSegment> segments) {
  double total = 0.0;
  for (const auto& seg : segments) total += seg.arc_length;
  return total;
}

int count_direction_changes(std::span<const PathSegment> segments) {
  int changes = 0;
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].direction != segments[i - 1].direction) ++changes;
  }
  return changes;
}

std::vector<std::pair<double, double>> obb_corners(const OrientedBox& box) {
  const double c = std::cos(box.center.theta);
  const double s = std::sin(box.center.theta);
  const std::array<std::pair<double, double>, 4> local = {
      {{box.half_length, box.half_width},
       {-box.half_length, box.half_width},
       {-box.half_length, -box.half_width},
       {box.half_length, -box.half_width}}};
  std::vector<std::pair<double, double>> out;
  out.reserve(4);
  for (const auto& [lx, ly] : local) {
    out.emplace_back(box.center.x + c * lx - s * ly, box.center.y + s * lx + c * ly);
  }
  return out;
}

bool obb_contains(const OrientedBox& box, double x, double y) {
  const double dx = x - box.center.x;
  const double dy = y - box.center.y;
  const double c = std::cos(box.center.theta);
  const double s = std::sin(box.center.theta);
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= box.half_length && std::abs(ly) <= box.half_width;
}

namespace {

// Projection radius of a box onto a unit axis.
double project_radius(const OrientedBox& b, double ax, double ay) {
  const double c = std::cos(b.center.theta);
  const double s = std::sin(b.center.theta);
  return b.half_length * std::abs(c * ax + s * ay) + b.half_width * std::abs(-s * ax + c * ay);
}

}  // namespace

bool obb_intersect(const OrientedBox& a, const OrientedBox& b) {
  const double dx = b.center.x - a.center.x;
  const double dy = b.center.y - a.center.y;
  const std::array<double, 4> angles = {a.center.theta, a.center.theta + kPi / 2, b.center.theta,
                                        b.center.theta + kPi / 2};
  for (double ang : angles) {
    const double ax = std::cos(ang);
    const double ay = std::sin(ang);
    const double dist = std::abs(dx * ax + dy * ay);
    if (dist > project_radius(a, ax, ay) + project_radius(b, ax, ay)) {
      return false;
    }
  }
  return true;
}

}  // namespace parkbench
