#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "parkbench/dataset.hpp"
#include "parkbench/scenario.hpp"

namespace parkbench {

struct GenConfig {
  int count = 500;  ///< scenarios attempted
  std::uint64_t seed = 0;
  bool filter = true;  ///< drop trajectories outside their k-shot band
  ScenarioParams params;
};

struct GenReport {
  std::vector<DatasetRecord> records;
  int infeasible = 0;
  int filtered = 0;
  std::map<int, int> kshot_census;  ///< over emitted records
};

/// Scenario i draws its slot and grid cell from derive_seed(seed, i); the
/// stored trajectory is the valid slice of the expert demonstration.
GenReport generate_dataset(const GenConfig& cfg);

/// Rasterizes every record into windows of `horizon` steps, one per `stride` frames.
std::vector<TrainingSample> samples_from_records(std::span<const DatasetRecord> records,
                                                 int horizon, int stride);

}  // namespace parkbench
