#include "parkbench/pipeline.hpp"

#include <cstdio>

#include "parkbench/errors.hpp"
#include "parkbench/rng.hpp"

namespace parkbench {

GenReport generate_dataset(const GenConfig& cfg) {
  if (cfg.count <= 0) throw ConfigError("gen: count must be positive");
  const auto lot = make_lot(cfg.params);
  const auto grid = spawn_grid(cfg.params);
  GenReport rep;
  for (int i = 0; i < cfg.count; ++i) {
    const std::uint64_t seed = derive_seed(cfg.seed, {0xda7a, static_cast<std::uint64_t>(i)});
    Rng pick(seed);
    const int slot = lot[pick.below(lot.size())].slot_id;
    const int cell = static_cast<int>(pick.below(grid.size()));
    Scenario sc;
    try {
      sc = generate_scenario(seed, lot, slot, cell, cfg.params);
    } catch (const ScenarioInfeasible&) {
      ++rep.infeasible;
      continue;
    }
    Trajectory slice = extract_valid_slice(sc.expert);
    if (cfg.filter && !passes_filter(slice)) {
      ++rep.filtered;
      continue;
    }
    char id[16];
    std::snprintf(id, sizeof id, "s%05d", i);
    slice.scenario_id = id;
    DatasetRecord rec;
    rec.scenario_id = id;
    rec.seed = seed;
    rec.target_slot_id = slot;
    rec.grid_index = cell;
    rec.static_vehicles = sc.config.static_vehicles;
    rec.kshot = trajectory_stats(slice).shifts + 1;
    rec.traj = std::move(slice);
    ++rep.kshot_census[rec.kshot];
    rep.records.push_back(std::move(rec));
  }
  return rep;
}

std::vector<TrainingSample> samples_from_records(std::span<const DatasetRecord> records,
                                                 int horizon, int stride) {
  std::vector<TrainingSample> out;
  for (const auto& r : records) {
    auto s = build_training_samples(r.traj, r.static_vehicles, horizon, stride);
    for (auto& x : s) x.scenario_id = r.scenario_id;
    out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return out;
}

}  // namespace parkbench
