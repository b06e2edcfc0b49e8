#include "parkbench/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "parkbench/dataset.hpp"
#include "parkbench/errors.hpp"

namespace parkbench {

std::vector<SlotSpec> make_lot(const ScenarioParams& p) {
  std::vector<SlotSpec> lot;
  const double row_x = 0.5 * p.lane_width + 0.5 * p.slot_length;
  const double mid = 0.5 * (p.slots_per_row - 1);
  int id = 0;
  for (int side = 0; side < 2; ++side) {
    const double x = side == 0 ? row_x : -row_x;
    const double heading = side == 0 ? 0.0 : kPi;
    for (int i = 0; i < p.slots_per_row; ++i) {
      lot.push_back({id++, {x, (i - mid) * p.slot_width, heading}, p.slot_length, p.slot_width});
    }
  }
  return lot;
}

OrientedBox lot_bounds(const ScenarioParams& p) {
  return {{0.0, 0.0, 0.0}, 0.5 * p.lane_width + p.slot_length, p.lot_half_length};
}

const SlotSpec& find_slot(std::span<const SlotSpec> lot, int slot_id) {
  for (const auto& s : lot) {
    if (s.slot_id == slot_id) return s;
  }
  throw ConfigError("unknown slot id " + std::to_string(slot_id));
}

std::vector<OrientedBox> populate_static_vehicles(std::span<const SlotSpec> lot, int target_slot_id,
                                                  std::uint64_t seed, const ScenarioParams& p) {
  find_slot(lot, target_slot_id);
  Rng rng(derive_seed(seed, {0x57a71c, static_cast<std::uint64_t>(target_slot_id)}));
  const double sigma = deg2rad(p.yaw_sigma_deg);
  const double clip = deg2rad(p.yaw_clip_deg);
  std::vector<OrientedBox> out;
  for (const auto& slot : lot) {
    if (slot.slot_id == target_slot_id) continue;
    const double base = rng.bernoulli(0.5) ? slot.center.theta : slot.center.theta + kPi;
    const double jitter = std::clamp(sigma * rng.normal(), -clip, clip);
    out.push_back({{slot.center.x, slot.center.y, normalize_angle(base + jitter)},
                   0.5 * p.static_length,
                   0.5 * p.static_width});
  }
  return out;
}

std::vector<std::pair<double, double>> spawn_grid(const ScenarioParams& p) {
  const int nx = static_cast<int>(std::lround((p.grid_x_max - p.grid_x_min) / p.grid_x_step)) + 1;
  const int ny = static_cast<int>(std::lround((p.grid_y_max - p.grid_y_min) / p.grid_y_step)) + 1;
  std::vector<std::pair<double, double>> grid;
  grid.reserve(static_cast<std::size_t>(nx * ny));
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      grid.emplace_back(p.grid_x_min + i * p.grid_x_step, p.grid_y_min + j * p.grid_y_step);
    }
  }
  return grid;
}

Pose2D spawn_base(const SlotSpec& slot, double back) {
  return {0.0, slot.center.y - back, 0.5 * kPi};
}

Pose2D spawn_pose(const Pose2D& base, std::pair<double, double> offset, Rng& rng,
                  double jitter_xy, double jitter_yaw_deg) {
  const double jx = rng.uniform(-jitter_xy, jitter_xy);
  const double jy = rng.uniform(-jitter_xy, jitter_xy);
  const double jpsi = deg2rad(rng.uniform(-jitter_yaw_deg, jitter_yaw_deg));
  return {base.x + offset.first + jx, base.y + offset.second + jy,
          normalize_angle(base.theta + jpsi)};
}

bool parking_success(const Pose2D& final_pose, const SlotSpec& slot) {
  const double dist = std::hypot(final_pose.x - slot.center.x, final_pose.y - slot.center.y);
  const double err = std::abs(normalize_angle(final_pose.theta - slot.center.theta));
  const double yaw_err = std::min(err, kPi - err);
  return dist < 0.25 && yaw_err < deg2rad(2.5);
}

namespace {

bool footprint_clear(const OrientedBox& fp, std::span<const OrientedBox> obstacles,
                     const OrientedBox& bounds) {
  for (const auto& [cx, cy] : obb_corners(fp)) {
    if (!obb_contains(bounds, cx, cy)) return false;
  }
  for (const auto& ob : obstacles) {
    if (obb_intersect(fp, ob)) return false;
  }
  return true;
}

struct Candidate {
  std::vector<PathSegment> path;
  double length = 0.0;
};

bool runs_long_enough(std::span<const PathSegment> path, double min_run) {
  double run = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i > 0 && path[i].direction != path[i - 1].direction) {
      if (run < min_run) return false;
      run = 0.0;
    }
    run += path[i].arc_length;
  }
  return path.empty() || run >= min_run;
}

void append(std::vector<PathSegment>& dst, const std::vector<PathSegment>& src) {
  for (const auto& s : src) {
    if (!dst.empty() && dst.back().direction == s.direction && dst.back().curvature == s.curvature) {
      dst.back().arc_length += s.arc_length;
    } else {
      dst.push_back(s);
    }
  }
}

// Candidate expert paths, shortest first. Each ends with a straight run along
// the slot axis from a staging pose in the aisle; some also pass through an
// intermediate aisle pose to allow multi-point turns.
std::vector<Candidate> enumerate_candidates(const Pose2D& start, const SlotSpec& slot,
                                            const ScenarioParams& p) {
  const double r = p.ego.r_min();
  const double ax = std::cos(slot.center.theta);
  const double ay = std::sin(slot.center.theta);
  const double full = 0.5 * slot.length + 0.5 * p.ego.length;

  std::vector<Candidate> out;
  auto try_add = [&](std::vector<PathSegment> path) {
    if (count_direction_changes(path) > p.max_shifts) return;
    if (!runs_long_enough(path, p.min_run)) return;
    const double len = path_length(path);
    out.push_back({std::move(path), len});
  };

  for (int orient = 0; orient < 2; ++orient) {
    const Pose2D goal{slot.center.x, slot.center.y,
                      normalize_angle(slot.center.theta + (orient == 0 ? 0.0 : kPi))};
    const Direction into = orient == 0 ? Direction::kForward : Direction::kBackward;
    try {
      try_add(plan_expert_path(start, goal, r));
    } catch (const PlanningFailed&) {
    }
    for (double frac : {0.5, 0.75, 1.0, 1.15}) {
      const double d = frac * full;
      const Pose2D staging{goal.x - d * ax, goal.y - d * ay, goal.theta};
      const PathSegment final_run{into, 0.0, d};
      std::vector<PathSegment> head;
      try {
        head = plan_expert_path(start, staging, r);
      } catch (const PlanningFailed&) {
        continue;
      }
      {
        auto path = head;
        append(path, {final_run});
        try_add(std::move(path));
      }
      for (double mx : {-1.5, 0.0, 1.5}) {
        for (double dy : {-8.0, -6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0}) {
          for (double mh : {0.5 * kPi, -0.5 * kPi, 0.25 * kPi, 0.75 * kPi, -0.25 * kPi,
                            -0.75 * kPi}) {
            const Pose2D mid{mx, slot.center.y + dy, mh};
            try {
              auto path = plan_expert_path(start, mid, r);
              append(path, plan_expert_path(mid, staging, r));
              append(path, {final_run});
              try_add(std::move(path));
            } catch (const PlanningFailed&) {
            }
          }
        }
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate& a, const Candidate& b) { return a.length < b.length; });
  return out;
}

}  // namespace

bool path_collision_free(const Pose2D& start, std::span<const PathSegment> path,
                         std::span<const OrientedBox> obstacles, const ScenarioParams& p) {
  const OrientedBox bounds = lot_bounds(p);
  Pose2D pose = start;
  if (!footprint_clear(p.ego.footprint(pose, p.inflation), obstacles, bounds)) return false;
  for (const auto& seg : path) {
    const int n = std::max(1, static_cast<int>(std::ceil(seg.arc_length / p.check_step)));
    for (int k = 1; k <= n; ++k) {
      const Pose2D q = advance(pose, seg, seg.arc_length * k / n);
      if (!footprint_clear(p.ego.footprint(q, p.inflation), obstacles, bounds)) return false;
    }
    pose = advance(pose, seg, seg.arc_length);
  }
  return true;
}

namespace {

// Valid-slice frame count of the sampled run profile, independent of idle padding.
std::size_t sliced_frames(std::span<const PathSegment> path, const Pose2D& start, double v_max,
                          double accel) {
  Trajectory t = sample_trajectory(path, start, v_max, accel);
  std::vector<double> speeds;
  for (const auto& f : t.frames) speeds.push_back(f.speed);
  const auto states = label_motion_states(speeds);
  for (std::size_t i = 0; i < states.size(); ++i) t.frames[i].state = states[i];
  return extract_valid_slice(t).frames.size();
}

// Frame-count window that keeps a path of this length and category inside its
// filter band. Empty when no pace can.
std::optional<std::pair<double, double>> pace_window(std::span<const PathSegment> path) {
  const auto k = classify_kshot(count_direction_changes(path));
  if (!k) return std::nullopt;
  const auto band = filter_band(*k);
  if (!band) return std::pair<double, double>{0.0, 0.0};
  const double len = path_length(path);
  const double dt = kDefaultDt;
  const double lo = std::max<double>(static_cast<double>(band->frames_lo) + 1.0,
                                     len / (band->speed_hi / 3.6 * dt) * 1.03);
  const double hi = std::min<double>(static_cast<double>(band->frames_hi) - 1.0,
                                     len / (band->speed_lo / 3.6 * dt) * 0.97);
  if (len < band->length_lo || len > band->length_hi || lo > hi) return std::nullopt;
  return std::pair<double, double>{lo, hi};
}

// Picks v_max. Inside a filter band, aims for a frame count drawn from the
// admissible window; otherwise draws v_max from the configured range.
double choose_pace(std::span<const PathSegment> path, const Pose2D& start, double accel, Rng& rng,
                   const ScenarioParams& p) {
  const double fallback = rng.uniform(p.v_max_lo, p.v_max_hi);
  const auto window = pace_window(path);
  if (!window || window->second <= 0.0) return fallback;
  const double target = rng.uniform(window->first, window->second);
  double v_lo = 0.2;
  double v_hi = 4.0;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (v_lo + v_hi);
    if (static_cast<double>(sliced_frames(path, start, mid, accel)) > target) {
      v_lo = mid;
    } else {
      v_hi = mid;
    }
  }
  return v_hi;
}

}  // namespace

Scenario generate_scenario(std::uint64_t seed, std::span<const SlotSpec> lot, int target_slot_id,
                           int grid_index, const ScenarioParams& p) {
  const auto grid = spawn_grid(p);
  if (grid_index < 0 || static_cast<std::size_t>(grid_index) >= grid.size()) {
    throw ConfigError("grid_index out of range");
  }
  const SlotSpec& slot = find_slot(lot, target_slot_id);

  Scenario sc;
  sc.config.seed = seed;
  sc.config.lot.assign(lot.begin(), lot.end());
  sc.config.target_slot_id = target_slot_id;
  sc.config.grid_index = grid_index;
  sc.config.static_vehicles = populate_static_vehicles(lot, target_slot_id, seed, p);
  const auto& obstacles = sc.config.static_vehicles;

  Rng rng(derive_seed(seed, {0x59a3, static_cast<std::uint64_t>(target_slot_id),
                             static_cast<std::uint64_t>(grid_index)}));
  const Pose2D base = spawn_base(slot, p.spawn_back);
  for (int attempt = 0; attempt < p.max_attempts; ++attempt) {
    const Pose2D start = spawn_pose(base, grid[grid_index], rng, p.jitter_xy, p.jitter_yaw_deg);
    const double style = rng.uniform(p.style_len_lo, p.style_len_hi);
    if (!path_collision_free(start, {}, obstacles, p)) continue;
    auto cands = enumerate_candidates(start, slot, p);

    std::size_t shortest = cands.size();
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (parking_success(drive(start, cands[i].path), slot) &&
          path_collision_free(start, cands[i].path, obstacles, p)) {
        shortest = i;
        break;
      }
    }
    if (shortest == cands.size()) continue;

    const double want = std::max(cands[shortest].length, style);
    std::vector<std::size_t> order;
    for (std::size_t i = shortest; i < cands.size(); ++i) order.push_back(i);
    std::vector<char> in_band(cands.size());
    for (auto i : order) in_band[i] = pace_window(cands[i].path).has_value();
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (in_band[a] != in_band[b]) return in_band[a] > in_band[b];
      return std::abs(cands[a].length - want) < std::abs(cands[b].length - want);
    });
    std::size_t pick = shortest;
    for (auto i : order) {
      if (i == shortest) break;
      if (!in_band[i] && in_band[shortest]) break;
      if (parking_success(drive(start, cands[i].path), slot) &&
          path_collision_free(start, cands[i].path, obstacles, p)) {
        pick = i;
        break;
      }
    }

    sc.config.ego_spawn = start;
    sc.path = std::move(cands[pick].path);
    const double accel = rng.uniform(p.accel_lo, p.accel_hi);
    const double v_max = choose_pace(sc.path, start, accel, rng, p);
    Trajectory core = sample_trajectory(sc.path, start, v_max, accel);
    const auto lead = static_cast<int>(rng.below(static_cast<std::uint64_t>(p.idle_max) + 1));
    const auto trail = static_cast<int>(rng.below(static_cast<std::uint64_t>(p.idle_max) + 1));
    Trajectory& t = sc.expert;
    t.dt = core.dt;
    t.target_slot = slot.center;
    t.frames.assign(static_cast<std::size_t>(lead), core.frames.front());
    t.frames.insert(t.frames.end(), core.frames.begin(), core.frames.end());
    t.frames.insert(t.frames.end(), static_cast<std::size_t>(trail), core.frames.back());
    std::vector<double> speeds;
    for (const auto& f : t.frames) speeds.push_back(f.speed);
    const auto states = label_motion_states(speeds);
    for (std::size_t i = 0; i < states.size(); ++i) t.frames[i].state = states[i];
    return sc;
  }
  throw ScenarioInfeasible("no collision-free expert after " + std::to_string(p.max_attempts) +
                           " attempts (slot " + std::to_string(target_slot_id) + ", grid " +
                           std::to_string(grid_index) + ")");
}

}  // namespace parkbench
