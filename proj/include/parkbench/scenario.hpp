#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "parkbench/geometry.hpp"
#include "parkbench/rng.hpp"
#include "parkbench/trajectory.hpp"

namespace parkbench {

struct SlotSpec {
  int slot_id = 0;
  Pose2D center;  ///< theta points from the aisle into the slot
  double length = 5.5;
  double width = 2.8;
};

/// Everything the generator needs besides the seed. Defaults describe two
/// facing rows of perpendicular slots along a straight aisle (the aisle runs
/// along world y).
struct ScenarioParams {
  int slots_per_row = 8;
  double slot_length = 5.5;
  double slot_width = 2.8;
  double lane_width = 7.0;
  double lot_half_length = 26.0;  ///< y extent of the drivable area

  VehicleParams ego;
  double static_length = 4.7;
  double static_width = 1.9;
  double yaw_sigma_deg = 3.0;
  double yaw_clip_deg = 8.0;

  double grid_x_min = -1.0, grid_x_max = 1.0, grid_x_step = 1.0;
  double grid_y_min = -10.0, grid_y_max = 10.0, grid_y_step = 2.0;
  double spawn_back = 4.0;  ///< base pose distance up-lane of the slot, m
  double jitter_xy = 0.2;
  double jitter_yaw_deg = 15.0;

  double inflation = 0.1;
  double check_step = 0.1;
  int max_attempts = 20;
  int max_shifts = 3;
  double min_run = 0.5;  ///< shortest allowed single-direction run, m

  /// The expert prefers the clear path whose length is closest to a length
  /// drawn from U(style_len_lo, style_len_hi), never shorter than the
  /// shortest clear path.
  double style_len_lo = 14.0, style_len_hi = 30.0;
  double v_max_lo = 1.2, v_max_hi = 2.2;
  double accel_lo = 0.4, accel_hi = 0.8;
  int idle_max = 10;  ///< idle frames padded before and after the maneuver
};

struct ScenarioConfig {
  std::uint64_t seed = 0;
  std::vector<SlotSpec> lot;
  int target_slot_id = 0;
  int grid_index = 0;
  std::vector<OrientedBox> static_vehicles;
  Pose2D ego_spawn;
};

struct Scenario {
  ScenarioConfig config;
  std::vector<PathSegment> path;
  Trajectory expert;  ///< labeled, with idle padding
};

std::vector<SlotSpec> make_lot(const ScenarioParams& p = {});

/// Drivable rectangle of the lot (axis aligned, centered at the origin).
OrientedBox lot_bounds(const ScenarioParams& p = {});

const SlotSpec& find_slot(std::span<const SlotSpec> lot, int slot_id);

/// One vehicle per non-target slot. Base heading is the slot heading or its
/// reverse with equal probability; yaw jitter is a normal clipped to the limit.
std::vector<OrientedBox> populate_static_vehicles(std::span<const SlotSpec> lot, int target_slot_id,
                                                  std::uint64_t seed,
                                                  const ScenarioParams& p = {});

/// Cartesian offset grid, x outer, y inner.
std::vector<std::pair<double, double>> spawn_grid(const ScenarioParams& p = {});

/// Reference spawn pose for a slot: on the aisle centerline `back` metres
/// up-lane of the slot, heading along the aisle.
Pose2D spawn_base(const SlotSpec& slot, double back);

Pose2D spawn_pose(const Pose2D& base, std::pair<double, double> offset, Rng& rng,
                  double jitter_xy, double jitter_yaw_deg);

/// Position within 0.25 m and heading within 2.5 deg of the slot, either
/// orientation.
bool parking_success(const Pose2D& final_pose, const SlotSpec& slot);

/// True when the inflated footprint swept along `path` stays clear of every
/// box and inside the lot.
bool path_collision_free(const Pose2D& start, std::span<const PathSegment> path,
                         std::span<const OrientedBox> obstacles, const ScenarioParams& p);

/// Throws ScenarioInfeasible after p.max_attempts failed jitter draws.
Scenario generate_scenario(std::uint64_t seed, std::span<const SlotSpec> lot, int target_slot_id,
                           int grid_index, const ScenarioParams& p = {});

}  // namespace parkbench
