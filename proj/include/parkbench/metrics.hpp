#pragma once

#include <array>
#include <complex>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "parkbench/geometry.hpp"
#include "parkbench/trajectory.hpp"

namespace parkbench {

using Point2 = std::pair<double, double>;

/// Mean Euclidean (x, y) distance over aligned steps.
double l2_error(std::span<const Pose2D> pred, std::span<const Pose2D> gt);

/// Symmetric Hausdorff distance between two non-empty point sets.
double hausdorff(std::span<const Point2> a, std::span<const Point2> b);
double hausdorff(std::span<const Pose2D> a, std::span<const Pose2D> b);

/// Unnormalized DFT of x + iy: Z_k = sum_n z_n exp(-2 pi i k n / Q).
std::vector<std::complex<double>> waypoint_dft(std::span<const Pose2D> poses);

/// L2 norm of the coefficient difference under waypoint_dft. Equals
/// sqrt(Q) times the pointwise complex difference norm.
double fourier_descriptor_diff(std::span<const Pose2D> pred, std::span<const Pose2D> gt);

/// Mean absolute wrapped heading difference, in degrees.
double ahe(std::span<const double> pred, std::span<const double> gt);

/// Column 0 is forward, 1 backward; ties go to forward.
MotionState argmax_state(const std::array<double, 2>& probs);

/// Fraction of steps whose argmax state matches the binary label.
double motion_accuracy(std::span<const std::array<double, 2>> probs,
                       std::span<const MotionState> labels);

struct ShiftMatch {
  /// One entry per GT shift in temporal order; nullopt when the prediction has
  /// fewer shifts than that ordinal.
  std::vector<std::optional<double>> ordinal_errors;
  int predicted_shifts = 0;
};

/// n-th predicted shift is matched to the n-th GT shift; the error is the
/// (x, y) distance between the waypoints at the two shift indices.
ShiftMatch shift_point_errors(std::span<const Pose2D> pred_waypoints,
                              std::span<const MotionState> pred_states,
                              std::span<const Pose2D> gt_waypoints,
                              std::span<const MotionState> gt_states);

/// One evaluated window.
struct EvalSample {
  std::vector<Pose2D> pred_waypoints;
  std::vector<Pose2D> gt_waypoints;
  std::vector<std::array<double, 2>> motion_probs;  ///< empty when the model has no motion branch
  std::vector<MotionState> gt_states;               ///< binary, stationary already filled
  bool with_heading = true;
};

struct SampleMetrics {
  double l2 = 0.0;
  double hausdorff = 0.0;
  double fourier = 0.0;
  std::optional<double> ahe;
  std::optional<double> motion_acc;
  int kshot = 1;  ///< GT shifts in the window + 1
  std::optional<ShiftMatch> shifts;
};

SampleMetrics evaluate_sample(const EvalSample& s);

struct ShiftCategory {
  int samples = 0;
  std::vector<double> error_sum;  ///< per ordinal, matched pairs only
  std::vector<int> matched;
  std::vector<int> total;

  [[nodiscard]] std::optional<double> ordinal_mean(std::size_t n) const;
  /// Mean of the ordinal means over ordinals with at least one match.
  [[nodiscard]] std::optional<double> category_mean() const;
};

struct MetricsReport {
  std::size_t sample_count = 0;
  double l2_mean = 0.0;
  double fourier_diff = 0.0;
  double hausdorff = 0.0;
  std::optional<double> ahe;
  std::optional<double> motion_acc;
  std::map<int, int> kshot_counts;
  std::map<int, ShiftCategory> shift_errors;  ///< k-shot -> ordinal stats

  /// Mean of the 2/3/4-shot category means that exist.
  [[nodiscard]] std::optional<double> shift_average() const;
};

/// Aggregates per-sample rows. Throws DataError on an empty set.
MetricsReport aggregate(std::span<const SampleMetrics> rows);

MetricsReport evaluate(std::span<const EvalSample> samples);

std::string report_to_json(const MetricsReport& r);

/// Table-style text: waypoint errors, then 2S[P1], 3S[P1 - P2], 4S[P1 - P2 - P3]
/// and Avg., "/" where no prediction matched an ordinal.
std::string render_table(const MetricsReport& r, const std::string& label);

}  // namespace parkbench
