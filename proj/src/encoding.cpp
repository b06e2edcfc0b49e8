#include "parkbench/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "parkbench/errors.hpp"

namespace parkbench {

NormalizedPosition normalize_position(double x, double y, double c_max) {
  if (!(c_max > 0.0)) throw ConfigError("c_max must be positive");
  NormalizedPosition out;
  out.clamped = std::abs(x) > c_max || std::abs(y) > c_max;
  out.x = kPi * std::clamp(x, -c_max, c_max) / c_max;
  out.y = kPi * std::clamp(y, -c_max, c_max) / c_max;
  return out;
}

std::vector<double> fourier_encode_scalar(double u, int L) {
  if (L < 1) throw ConfigError("fourier_encode_scalar: L must be >= 1");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(2 * L));
  double f = 1.0;
  for (int k = 0; k < L; ++k) {
    out.push_back(std::sin(f * u));
    out.push_back(std::cos(f * u));
    f *= 2.0;
  }
  return out;
}

FourierTarget encode_target(const Pose2D& slot, double c_max, int L) {
  const auto p = normalize_position(slot.x, slot.y, c_max);
  FourierTarget t;
  t.clamped = p.clamped;
  t.values.reserve(static_cast<std::size_t>(4 * L + 4));
  t.values.push_back(p.x);
  t.values.push_back(p.y);
  for (double v : fourier_encode_scalar(p.x, L)) t.values.push_back(v);
  for (double v : fourier_encode_scalar(p.y, L)) t.values.push_back(v);
  const double th = normalize_angle(slot.theta);
  t.values.push_back(std::sin(th));
  t.values.push_back(std::cos(th));
  return t;
}

int serialize_value(double p, double r, int n) {
  if (n < 2) throw ConfigError("serialize_value: n must be >= 2");
  if (!(r > 0.0)) throw ConfigError("serialize_value: range must be positive");
  const double u = std::clamp((p + r) / (2.0 * r), 0.0, 1.0);
  if (std::isnan(u)) throw DataError("serialize_value: NaN input");
  return std::min(static_cast<int>(std::floor(u * n)), n - 1);
}

double deserialize_token(int t, double r, int n) {
  if (t < 0 || t >= n) {
    throw DataError("token " + std::to_string(t) + " outside [0, " + std::to_string(n) + ")");
  }
  return -r + (t + 0.5) * (2.0 * r / n);
}

bool TokenSequence::valid() const {
  if (tokens.empty() || tokens.front() != vocab.bos()) return false;
  bool seen_eos = false;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const int t = tokens[i];
    if (seen_eos) {
      if (t != vocab.pad()) return false;
    } else if (t == vocab.eos()) {
      seen_eos = true;
    } else if (t < 0 || t >= vocab.n_values) {
      return false;
    }
  }
  return seen_eos;
}

std::vector<MotionState> fill_stationary(std::span<const MotionState> labels,
                                         MotionState fallback) {
  std::vector<MotionState> out(labels.begin(), labels.end());
  MotionState next = MotionState::kStationary;
  for (std::size_t i = out.size(); i-- > 0;) {
    if (labels[i] != MotionState::kStationary) {
      next = labels[i];
    } else {
      out[i] = next;
    }
  }
  MotionState prev = MotionState::kStationary;
  for (auto& s : out) {
    if (s == MotionState::kStationary) {
      s = prev != MotionState::kStationary ? prev : fallback;
    }
    prev = s;
  }
  for (auto& s : out) {
    if (s == MotionState::kStationary) s = MotionState::kForward;
  }
  return out;
}

namespace {

void frame(TokenSequence& seq, int pad_to) {
  seq.tokens.insert(seq.tokens.begin(), seq.vocab.bos());
  seq.tokens.push_back(seq.vocab.eos());
  while (static_cast<int>(seq.tokens.size()) < pad_to) seq.tokens.push_back(seq.vocab.pad());
}

// Value tokens between BOS and EOS.
std::span<const int> body(const TokenSequence& seq) {
  if (!seq.valid()) throw DataError("token sequence violates BOS/EOS/PAD framing");
  const auto eos = std::find(seq.tokens.begin(), seq.tokens.end(), seq.vocab.eos());
  return {seq.tokens.data() + 1, static_cast<std::size_t>(eos - seq.tokens.begin() - 1)};
}

}  // namespace

TokenSequence serialize_motion(std::span<const MotionState> labels, MotionState fallback,
                               const CodecConfig& cfg, int pad_to) {
  TokenSequence seq;
  seq.vocab = cfg.motion_vocab();
  for (auto s : fill_stationary(labels, fallback)) {
    seq.tokens.push_back(s == MotionState::kForward ? cfg.n_motion - 1 : 0);
  }
  frame(seq, pad_to);
  return seq;
}

TokenSequence serialize_waypoints(std::span<const Pose2D> waypoints, const CodecConfig& cfg,
                                  int pad_to) {
  TokenSequence seq;
  seq.vocab = cfg.traj_vocab();
  for (const auto& w : waypoints) {
    seq.tokens.push_back(serialize_value(w.x, cfg.r_xy, cfg.n_traj));
    seq.tokens.push_back(serialize_value(w.y, cfg.r_xy, cfg.n_traj));
    if (cfg.with_heading) {
      seq.tokens.push_back(serialize_value(normalize_angle(w.theta), cfg.r_theta, cfg.n_traj));
    }
  }
  frame(seq, pad_to);
  return seq;
}

std::pair<TokenSequence, TokenSequence> build_sequences(std::span<const Pose2D> waypoints,
                                                        std::span<const MotionState> labels,
                                                        MotionState fallback,
                                                        const CodecConfig& cfg) {
  if (waypoints.size() != labels.size()) {
    throw DataError("build_sequences: waypoint and label counts differ");
  }
  return {serialize_waypoints(waypoints, cfg), serialize_motion(labels, fallback, cfg)};
}

std::vector<Pose2D> decode_waypoints(const TokenSequence& seq, const CodecConfig& cfg) {
  const auto v = body(seq);
  const auto per = static_cast<std::size_t>(cfg.tokens_per_step());
  if (v.size() % per != 0) throw DataError("waypoint token count not a multiple of the step size");
  std::vector<Pose2D> out;
  for (std::size_t i = 0; i < v.size(); i += per) {
    Pose2D p;
    p.x = deserialize_token(v[i], cfg.r_xy, cfg.n_traj);
    p.y = deserialize_token(v[i + 1], cfg.r_xy, cfg.n_traj);
    if (cfg.with_heading) p.theta = deserialize_token(v[i + 2], cfg.r_theta, cfg.n_traj);
    out.push_back(p);
  }
  return out;
}

std::vector<MotionState> decode_motion(const TokenSequence& seq, const CodecConfig& cfg) {
  std::vector<MotionState> out;
  for (int t : body(seq)) {
    if (t < 0 || t >= cfg.n_motion) throw DataError("motion token out of range");
    out.push_back(2 * t >= cfg.n_motion ? MotionState::kForward : MotionState::kReverse);
  }
  return out;
}

}  // namespace parkbench
