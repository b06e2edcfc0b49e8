#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "parkbench/geometry.hpp"
#include "parkbench/trajectory.hpp"

namespace parkbench {

/// Threshold labels with one-frame stationary blips inside a run of one
/// direction folded back into that direction.
std::vector<MotionState> label_motion_states(std::span<const double> speeds);

/// Index of the first frame of every new direction, stationary frames ignored.
std::vector<std::size_t> shift_indices(std::span<const MotionState> states);

int count_gear_shifts(std::span<const MotionState> states);

enum class KShot : int { k1 = 1, k2 = 2, k3 = 3, k4 = 4 };

/// 0..3 shifts map to 1..4-shot; anything more is outside the taxonomy.
std::optional<KShot> classify_kshot(int shift_count);

/// Drops idle frames before the first frame that has throttle and moves, and
/// everything after the first stop that follows the last moving frame.
/// Throws EmptySlice when no frame moves.
Trajectory extract_valid_slice(const Trajectory& traj);

struct TrajectoryStats {
  double avg_speed_kmh = 0.0;
  std::size_t frames = 0;
  double path_length = 0.0;
  int shifts = 0;
};

TrajectoryStats trajectory_stats(const Trajectory& traj);

struct FilterBand {
  double speed_lo, speed_hi;  ///< km/h
  std::size_t frames_lo, frames_hi;
  double length_lo, length_hi;  ///< m
};

/// Per-category acceptance band; empty for unconstrained categories.
std::optional<FilterBand> filter_band(KShot k);

bool passes_filter(const Trajectory& traj);

/// Keeps trajectories inside their category band. Contents are not modified.
std::vector<Trajectory> filter_core_dataset(std::span<const Trajectory> trajs);

struct BevOccupancy {
  static constexpr int kSize = 200;
  static constexpr double kResolution = 0.1;
  static constexpr double kExtent = 10.0;

  /// cells[i * kSize + j]; i steps along ego x, j along ego y.
  std::vector<std::uint8_t> cells = std::vector<std::uint8_t>(kSize * kSize, 0);

  [[nodiscard]] std::uint8_t at(int i, int j) const { return cells[i * kSize + j]; }
  [[nodiscard]] static double cell_center(int idx) {
    return -kExtent + (idx + 0.5) * kResolution;
  }
  [[nodiscard]] std::size_t occupied() const;
};

/// Marks cells whose centers fall inside any box, boxes given in world
/// coordinates and mapped into the ego frame.
BevOccupancy rasterize_bev(std::span<const OrientedBox> world_boxes, const Pose2D& ego);

struct TrainingSample {
  BevOccupancy bev;
  Pose2D target;  ///< slot in the frame-j vehicle frame
  std::vector<Pose2D> future_waypoints;
  std::vector<MotionState> future_motion;
  std::vector<int> shift_steps;
  MotionState approach_direction = MotionState::kForward;
  std::string scenario_id;
  std::size_t frame_index = 0;
};

/// Direction of the last moving frame; forward if nothing moves.
MotionState approach_direction(const Trajectory& traj);

/// One sample per `stride`-th frame. Future entry b (1..Q) reads frame
/// min(j + b, N - 1).
std::vector<TrainingSample> build_training_samples(const Trajectory& traj,
                                                   std::span<const OrientedBox> obstacles, int Q,
                                                   int stride = 1);

/// Partitions scenario ids; returns (train, val) index lists into `ids`.
/// Every index of one id lands on the same side.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_scenario(
    std::span<const std::string> ids, double ratio, std::uint64_t seed);

std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>> split_dataset(
    std::span<const TrainingSample> samples, double ratio, std::uint64_t seed);

/// One persisted demonstration.
struct DatasetRecord {
  std::string scenario_id;
  std::uint64_t seed = 0;
  Trajectory traj;
  int target_slot_id = 0;
  int grid_index = 0;
  std::vector<OrientedBox> static_vehicles;
  int kshot = 1;
};

std::string record_to_line(const DatasetRecord& rec);
DatasetRecord record_from_line(const std::string& line, std::size_t line_no);

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);
std::string dataset_to_text(std::span<const DatasetRecord> records);

}  // namespace parkbench
