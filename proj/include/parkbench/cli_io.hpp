#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "parkbench/dataset.hpp"
#include "parkbench/geometry.hpp"
#include "parkbench/scenario.hpp"

namespace parkbench {

inline constexpr const char* kToolVersion = "0.1.0";

/// `key = value` lines; blank lines and `#` comments are skipped. Throws
/// ParseError (with the line) on a malformed or repeated key.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> read_config(const std::filesystem::path& path);

/// Layered settings: explicit CLI value, then (seed only) PARKBENCH_SEED,
/// then the config file, then the default. Bad values throw ConfigError.
class Settings {
 public:
  Settings() = default;
  explicit Settings(std::map<std::string, std::string> file) : file_(std::move(file)) {}

  [[nodiscard]] int get_int(const std::string& key, std::optional<int> cli, int def) const;
  [[nodiscard]] double get_double(const std::string& key, std::optional<double> cli,
                                  double def) const;
  [[nodiscard]] std::string get_string(const std::string& key, std::optional<std::string> cli,
                                       const std::string& def) const;
  [[nodiscard]] bool get_bool(const std::string& key, std::optional<bool> cli, bool def) const;
  [[nodiscard]] std::uint64_t seed(std::optional<std::uint64_t> cli, std::uint64_t def) const;

  /// Keys present in the file but never read; reported as a config error.
  [[nodiscard]] std::vector<std::string> unused() const;

 private:
  std::optional<std::string> from_file(const std::string& key) const;
  std::map<std::string, std::string> file_;
  mutable std::map<std::string, bool> read_;
};

std::string read_text(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

struct Manifest {
  std::string command;
  nlohmann::ordered_json config;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
};

/// JSON text. Inputs and outputs carry content hashes; wall_clock is taken
/// from SOURCE_DATE_EPOCH when set, else the current UTC time.
std::string manifest_json(const Manifest& m);

/// One model prediction for a window, in the window's ego frame.
struct PredictionRecord {
  std::string scenario_id;
  std::size_t frame_index = 0;
  std::vector<Pose2D> waypoints;
  std::vector<std::array<double, 2>> motion_probs;
  std::vector<double> attention;  ///< fusion weights averaged over heads and queries
};

std::string prediction_to_line(const PredictionRecord& p);
PredictionRecord prediction_from_line(const std::string& line, std::size_t line_no);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

struct PlotSpec {
  std::vector<SlotSpec> lot;
  OrientedBox bounds;
  int target_slot_id = -1;
  std::vector<OrientedBox> vehicles;
  std::vector<Pose2D> gt;
  std::vector<MotionState> gt_states;
  std::vector<std::vector<Pose2D>> predictions;  ///< world frame
  /// Attention weights on the BEV token grid, drawn around `attention_ego`.
  std::vector<double> attention;
  int attention_side = 0;
  double attention_cell = 0.0;  ///< m per token
  Pose2D attention_ego;
};

/// GT in blue, predictions in red, one circle per GT gear shift.
std::string render_svg(const PlotSpec& spec);

}  // namespace parkbench
