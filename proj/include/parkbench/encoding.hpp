#pragma once

#include <span>
#include <utility>
#include <vector>

#include "parkbench/geometry.hpp"
#include "parkbench/trajectory.hpp"

namespace parkbench {

struct NormalizedPosition {
  double x = 0.0;
  double y = 0.0;
  bool clamped = false;  ///< input lay outside [-c_max, c_max]
};

/// p' = pi * p / c_max, clamped to [-pi, pi].
NormalizedPosition normalize_position(double x, double y, double c_max);

/// [sin(2^0 u), cos(2^0 u), ..., sin(2^(L-1) u), cos(2^(L-1) u)].
std::vector<double> fourier_encode_scalar(double u, int L);

struct FourierTarget {
  std::vector<double> values;  ///< [x', y', g(x'), g(y'), sin th, cos th], 4L + 4 entries
  bool clamped = false;
};

FourierTarget encode_target(const Pose2D& slot, double c_max, int L);

/// Uniform quantizer onto [0, n): floor(clamp((p + r) / 2r, 0, 1) * n), top edge to n - 1.
int serialize_value(double p, double r, int n);

/// Bin center of token t. Throws DataError when t is outside [0, n).
double deserialize_token(int t, double r, int n);

/// Token ids: values occupy [0, n_values); specials follow.
struct Vocab {
  int n_values = 0;
  [[nodiscard]] int bos() const { return n_values; }
  [[nodiscard]] int eos() const { return n_values + 1; }
  [[nodiscard]] int pad() const { return n_values + 2; }
  [[nodiscard]] int size() const { return n_values + 3; }
};

struct TokenSequence {
  std::vector<int> tokens;
  Vocab vocab;

  /// BOS first, exactly one EOS, only PAD after it, values in range.
  [[nodiscard]] bool valid() const;
};

struct CodecConfig {
  int horizon = 30;  ///< Q
  int n_traj = 1200;
  int n_motion = 100;
  double r_xy = 10.0;
  double r_theta = kPi;
  bool with_heading = true;  ///< false drops theta tokens (x, y per step)

  [[nodiscard]] Vocab traj_vocab() const { return {n_traj}; }
  [[nodiscard]] Vocab motion_vocab() const { return {n_motion}; }
  [[nodiscard]] int tokens_per_step() const { return with_heading ? 3 : 2; }
  /// BOS + value tokens + EOS.
  [[nodiscard]] int traj_length() const { return horizon * tokens_per_step() + 2; }
};

/// Replaces stationary labels with the nearest following direction, else the
/// nearest preceding one, else `fallback`.
std::vector<MotionState> fill_stationary(std::span<const MotionState> labels, MotionState fallback);

/// Forward -> n_motion - 1, reverse -> 0, framed by BOS/EOS and padded to `pad_to`.
TokenSequence serialize_motion(std::span<const MotionState> labels, MotionState fallback,
                               const CodecConfig& cfg, int pad_to = 0);

/// Interleaved x, y(, theta) tokens per step, framed by BOS/EOS, padded to `pad_to`.
TokenSequence serialize_waypoints(std::span<const Pose2D> waypoints, const CodecConfig& cfg,
                                  int pad_to = 0);

std::pair<TokenSequence, TokenSequence> build_sequences(std::span<const Pose2D> waypoints,
                                                        std::span<const MotionState> labels,
                                                        MotionState fallback,
                                                        const CodecConfig& cfg);

/// Inverse of serialize_waypoints on the value tokens of a valid sequence.
/// Missing theta (with_heading off) decodes as 0.
std::vector<Pose2D> decode_waypoints(const TokenSequence& seq, const CodecConfig& cfg);

/// Token -> state: upper half of the scale is forward.
std::vector<MotionState> decode_motion(const TokenSequence& seq, const CodecConfig& cfg);

}  // namespace parkbench
