#include "parkbench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "parkbench/errors.hpp"
#include "parkbench/rng.hpp"

namespace parkbench {

std::vector<MotionState> label_motion_states(std::span<const double> speeds) {
  std::vector<MotionState> out(speeds.size(), MotionState::kStationary);
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    if (!std::isfinite(speeds[i])) throw DataError("label_motion_states: non-finite speed");
    if (speeds[i] > kStationarySpeed) {
      out[i] = MotionState::kForward;
    } else if (speeds[i] < -kStationarySpeed) {
      out[i] = MotionState::kReverse;
    }
  }
  for (std::size_t i = 1; i + 1 < out.size(); ++i) {
    if (out[i] == MotionState::kStationary && out[i - 1] != MotionState::kStationary &&
        out[i - 1] == out[i + 1]) {
      out[i] = out[i - 1];
    }
  }
  return out;
}

std::vector<std::size_t> shift_indices(std::span<const MotionState> states) {
  std::vector<std::size_t> out;
  MotionState last = MotionState::kStationary;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i] == MotionState::kStationary) continue;
    if (last != MotionState::kStationary && states[i] != last) out.push_back(i);
    last = states[i];
  }
  return out;
}

int count_gear_shifts(std::span<const MotionState> states) {
  return static_cast<int>(shift_indices(states).size());
}

std::optional<KShot> classify_kshot(int shift_count) {
  if (shift_count < 0 || shift_count > 3) return std::nullopt;
  return static_cast<KShot>(shift_count + 1);
}

Trajectory extract_valid_slice(const Trajectory& traj) {
  const auto& f = traj.frames;
  auto moving = [](const Frame& fr) { return std::abs(fr.speed) > kStationarySpeed; };
  std::size_t begin = f.size();
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i].throttle > 0.0 && moving(f[i])) {
      begin = i;
      break;
    }
  }
  if (begin == f.size()) throw EmptySlice("trajectory never moves");
  std::size_t last_moving = begin;
  for (std::size_t i = begin; i < f.size(); ++i) {
    if (moving(f[i])) last_moving = i;
  }
  const std::size_t end = std::min(last_moving + 2, f.size());
  Trajectory out = traj;
  out.frames.assign(f.begin() + static_cast<std::ptrdiff_t>(begin),
                    f.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

TrajectoryStats trajectory_stats(const Trajectory& traj) {
  TrajectoryStats st;
  st.frames = traj.frames.size();
  double speed_sum = 0.0;
  std::vector<MotionState> states;
  for (std::size_t i = 0; i < traj.frames.size(); ++i) {
    speed_sum += std::abs(traj.frames[i].speed);
    states.push_back(traj.frames[i].state);
    if (i > 0) {
      st.path_length += std::hypot(traj.frames[i].pose.x - traj.frames[i - 1].pose.x,
                                   traj.frames[i].pose.y - traj.frames[i - 1].pose.y);
    }
  }
  if (st.frames > 0) st.avg_speed_kmh = 3.6 * speed_sum / static_cast<double>(st.frames);
  st.shifts = count_gear_shifts(states);
  return st;
}

std::optional<FilterBand> filter_band(KShot k) {
  switch (k) {
    case KShot::k1:
      return std::nullopt;
    case KShot::k2:
      return FilterBand{2.90, 6.70, 101, 210, 12.8, 25.2};
    case KShot::k3:
      return FilterBand{2.79, 5.70, 125, 219, 14.0, 22.5};
    case KShot::k4:
      return FilterBand{2.83, 6.00, 144, 280, 17.0, 31.0};
  }
  return std::nullopt;
}

bool passes_filter(const Trajectory& traj) {
  const TrajectoryStats st = trajectory_stats(traj);
  const auto k = classify_kshot(st.shifts);
  if (!k) return false;
  const auto band = filter_band(*k);
  if (!band) return true;
  return st.avg_speed_kmh >= band->speed_lo && st.avg_speed_kmh <= band->speed_hi &&
         st.frames >= band->frames_lo && st.frames <= band->frames_hi &&
         st.path_length >= band->length_lo && st.path_length <= band->length_hi;
}

std::vector<Trajectory> filter_core_dataset(std::span<const Trajectory> trajs) {
  std::vector<Trajectory> out;
  for (const auto& t : trajs) {
    if (passes_filter(t)) out.push_back(t);
  }
  return out;
}

std::size_t BevOccupancy::occupied() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

BevOccupancy rasterize_bev(std::span<const OrientedBox> world_boxes, const Pose2D& ego) {
  BevOccupancy bev;
  constexpr int n = BevOccupancy::kSize;
  constexpr double res = BevOccupancy::kResolution;
  constexpr double ext = BevOccupancy::kExtent;
  for (const auto& wb : world_boxes) {
    const OrientedBox box{pose_in_frame(wb.center, ego), wb.half_length, wb.half_width};
    double lo_x = box.center.x, hi_x = box.center.x, lo_y = box.center.y, hi_y = box.center.y;
    for (const auto& [cx, cy] : obb_corners(box)) {
      lo_x = std::min(lo_x, cx);
      hi_x = std::max(hi_x, cx);
      lo_y = std::min(lo_y, cy);
      hi_y = std::max(hi_y, cy);
    }
    const int i0 = std::max(0, static_cast<int>(std::floor((lo_x + ext) / res)) - 1);
    const int i1 = std::min(n - 1, static_cast<int>(std::ceil((hi_x + ext) / res)) + 1);
    const int j0 = std::max(0, static_cast<int>(std::floor((lo_y + ext) / res)) - 1);
    const int j1 = std::min(n - 1, static_cast<int>(std::ceil((hi_y + ext) / res)) + 1);
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) {
        if (obb_contains(box, BevOccupancy::cell_center(i), BevOccupancy::cell_center(j))) {
          bev.cells[i * n + j] = 1;
        }
      }
    }
  }
  return bev;
}

MotionState approach_direction(const Trajectory& traj) {
  for (auto it = traj.frames.rbegin(); it != traj.frames.rend(); ++it) {
    if (it->state != MotionState::kStationary) return it->state;
  }
  return MotionState::kForward;
}

std::vector<TrainingSample> build_training_samples(const Trajectory& traj,
                                                   std::span<const OrientedBox> obstacles, int Q,
                                                   int stride) {
  if (Q < 1) throw ConfigError("build_training_samples: Q must be >= 1");
  if (stride < 1) throw ConfigError("build_training_samples: stride must be >= 1");
  const std::size_t n = traj.frames.size();
  const MotionState approach = approach_direction(traj);
  std::vector<TrainingSample> out;
  for (std::size_t j = 0; j < n; j += static_cast<std::size_t>(stride)) {
    const Pose2D ego = traj.frames[j].pose;
    TrainingSample s;
    s.bev = rasterize_bev(obstacles, ego);
    s.target = pose_in_frame(traj.target_slot, ego);
    for (int b = 1; b <= Q; ++b) {
      const std::size_t idx = std::min(j + static_cast<std::size_t>(b), n - 1);
      s.future_waypoints.push_back(pose_in_frame(traj.frames[idx].pose, ego));
      s.future_motion.push_back(traj.frames[idx].state);
    }
    for (auto k : shift_indices(s.future_motion)) s.shift_steps.push_back(static_cast<int>(k));
    s.approach_direction = approach;
    s.scenario_id = traj.scenario_id;
    s.frame_index = j;
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_scenario(
    std::span<const std::string> ids, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  std::vector<std::string> unique(ids.begin(), ids.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (unique.size() < 2) throw DataError("split needs at least 2 scenarios");

  Rng rng(derive_seed(seed, {0x5b117}));
  for (std::size_t i = unique.size() - 1; i > 0; --i) {
    std::swap(unique[i], unique[rng.below(i + 1)]);
  }
  const auto n = static_cast<long>(unique.size());
  const long n_train = std::clamp(std::lround(ratio * static_cast<double>(n)), 1L, n - 1);
  const std::set<std::string> train_ids(unique.begin(), unique.begin() + n_train);

  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    (train_ids.count(ids[i]) ? out.first : out.second).push_back(i);
  }
  return out;
}

std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>> split_dataset(
    std::span<const TrainingSample> samples, double ratio, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.scenario_id);
  const auto [tr, va] = split_by_scenario(ids, ratio, seed);
  std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>> out;
  for (auto i : tr) out.first.push_back(samples[i]);
  for (auto i : va) out.second.push_back(samples[i]);
  return out;
}

// --- persistence ---

using ojson = nlohmann::ordered_json;

std::string record_to_line(const DatasetRecord& rec) {
  ojson j;
  j["scenario_id"] = rec.scenario_id;
  j["seed"] = rec.seed;
  const auto& ts = rec.traj.target_slot;
  j["target_slot"] = {ts.x, ts.y, ts.theta};
  ojson frames = ojson::array();
  for (const auto& f : rec.traj.frames) {
    frames.push_back({f.pose.x, f.pose.y, f.pose.theta, f.speed, f.throttle,
                      static_cast<int>(f.state)});
  }
  j["frames"] = std::move(frames);
  j["dt"] = rec.traj.dt;
  j["target_slot_id"] = rec.target_slot_id;
  j["grid_index"] = rec.grid_index;
  ojson vehicles = ojson::array();
  for (const auto& b : rec.static_vehicles) {
    vehicles.push_back({b.center.x, b.center.y, b.center.theta, b.half_length, b.half_width});
  }
  j["static_vehicles"] = std::move(vehicles);
  j["kshot"] = rec.kshot;
  return j.dump();
}

namespace {

double num(const ojson& v, std::size_t line, const char* what) {
  if (!v.is_number()) throw ParseError(std::string("expected number for ") + what, line);
  return v.get<double>();
}

const ojson& field(const ojson& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(std::string("missing field '") + key + "'", line);
  return *it;
}

std::vector<double> tuple(const ojson& v, std::size_t n, std::size_t line, const char* what) {
  if (!v.is_array() || v.size() != n) {
    throw ParseError(std::string(what) + " must be an array of " + std::to_string(n), line);
  }
  std::vector<double> out;
  for (const auto& e : v) out.push_back(num(e, line, what));
  return out;
}

DatasetRecord parse_record(const std::string& line, std::size_t line_no);

}  // namespace

DatasetRecord record_from_line(const std::string& line, std::size_t line_no) {
  try {
    return parse_record(line, line_no);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what(), line_no);
  }
}

namespace {

DatasetRecord parse_record(const std::string& line, std::size_t line_no) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
  }
  if (!j.is_object()) throw ParseError("record must be an object", line_no);
  DatasetRecord rec;
  const auto& sid = field(j, "scenario_id", line_no);
  if (!sid.is_string()) throw ParseError("scenario_id must be a string", line_no);
  rec.scenario_id = sid.get<std::string>();
  const auto& seed = field(j, "seed", line_no);
  if (!seed.is_number_unsigned()) throw ParseError("seed must be an unsigned integer", line_no);
  rec.seed = seed.get<std::uint64_t>();
  const auto ts = tuple(field(j, "target_slot", line_no), 3, line_no, "target_slot");
  rec.traj.target_slot = {ts[0], ts[1], ts[2]};
  rec.traj.scenario_id = rec.scenario_id;
  const auto& frames = field(j, "frames", line_no);
  if (!frames.is_array() || frames.empty()) throw ParseError("frames must be non-empty", line_no);
  for (const auto& fr : frames) {
    const auto v = tuple(fr, 6, line_no, "frame");
    const int st = static_cast<int>(v[5]);
    if (st != -1 && st != 0 && st != 1) throw ParseError("frame state must be -1, 0 or 1", line_no);
    rec.traj.frames.push_back({{v[0], v[1], v[2]}, v[3], v[4], static_cast<MotionState>(st)});
  }
  if (j.contains("dt")) rec.traj.dt = num(j["dt"], line_no, "dt");
  if (!(rec.traj.dt > 0.0)) throw ParseError("dt must be positive", line_no);
  if (j.contains("target_slot_id")) rec.target_slot_id = j["target_slot_id"].get<int>();
  if (j.contains("grid_index")) rec.grid_index = j["grid_index"].get<int>();
  if (j.contains("static_vehicles")) {
    for (const auto& b : j["static_vehicles"]) {
      const auto v = tuple(b, 5, line_no, "static vehicle");
      rec.static_vehicles.push_back({{v[0], v[1], v[2]}, v[3], v[4]});
    }
  }
  if (j.contains("kshot")) rec.kshot = j["kshot"].get<int>();
  return rec;
}

}  // namespace

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    out.push_back(record_from_line(line, line_no));
  }
  return out;
}

std::string dataset_to_text(std::span<const DatasetRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_line(r);
    out += '\n';
  }
  return out;
}

}  // namespace parkbench
