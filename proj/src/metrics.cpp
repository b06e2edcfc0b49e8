#include "parkbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "parkbench/dataset.hpp"
#include "parkbench/errors.hpp"

namespace parkbench {

namespace {

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch " + std::to_string(a) +
                                " vs " + std::to_string(b));
  }
}

double directed(std::span<const Point2> from, std::span<const Point2> to) {
  double worst = 0.0;
  for (const auto& [ax, ay] : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [bx, by] : to) best = std::min(best, std::hypot(ax - bx, ay - by));
    worst = std::max(worst, best);
  }
  return worst;
}

std::vector<Point2> points_of(std::span<const Pose2D> poses) {
  std::vector<Point2> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.emplace_back(p.x, p.y);
  return out;
}

}  // namespace

double l2_error(std::span<const Pose2D> pred, std::span<const Pose2D> gt) {
  require_same(pred.size(), gt.size(), "l2_error");
  if (pred.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    total += std::hypot(pred[i].x - gt[i].x, pred[i].y - gt[i].y);
  }
  return total / static_cast<double>(pred.size());
}

double hausdorff(std::span<const Point2> a, std::span<const Point2> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("hausdorff: empty point set");
  return std::max(directed(a, b), directed(b, a));
}

double hausdorff(std::span<const Pose2D> a, std::span<const Pose2D> b) {
  const auto pa = points_of(a);
  const auto pb = points_of(b);
  return hausdorff(std::span<const Point2>(pa), std::span<const Point2>(pb));
}

std::vector<std::complex<double>> waypoint_dft(std::span<const Pose2D> poses) {
  const std::size_t q = poses.size();
  std::vector<std::complex<double>> out(q);
  for (std::size_t k = 0; k < q; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < q; ++n) {
      const double ang = -2.0 * kPi * static_cast<double>((k * n) % q) / static_cast<double>(q);
      acc += std::complex<double>(poses[n].x, poses[n].y) * std::polar(1.0, ang);
    }
    out[k] = acc;
  }
  return out;
}

double fourier_descriptor_diff(std::span<const Pose2D> pred, std::span<const Pose2D> gt) {
  require_same(pred.size(), gt.size(), "fourier_descriptor_diff");
  const auto a = waypoint_dft(pred);
  const auto b = waypoint_dft(gt);
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::norm(a[k] - b[k]);
  return std::sqrt(s);
}

double ahe(std::span<const double> pred, std::span<const double> gt) {
  require_same(pred.size(), gt.size(), "ahe");
  if (pred.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    total += std::abs(normalize_angle(pred[i] - gt[i]));
  }
  return rad2deg(total / static_cast<double>(pred.size()));
}

MotionState argmax_state(const std::array<double, 2>& probs) {
  return probs[1] > probs[0] ? MotionState::kReverse : MotionState::kForward;
}

double motion_accuracy(std::span<const std::array<double, 2>> probs,
                       std::span<const MotionState> labels) {
  require_same(probs.size(), labels.size(), "motion_accuracy");
  if (probs.empty()) return 1.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (argmax_state(probs[i]) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

ShiftMatch shift_point_errors(std::span<const Pose2D> pred_waypoints,
                              std::span<const MotionState> pred_states,
                              std::span<const Pose2D> gt_waypoints,
                              std::span<const MotionState> gt_states) {
  require_same(pred_waypoints.size(), pred_states.size(), "shift_point_errors(pred)");
  require_same(gt_waypoints.size(), gt_states.size(), "shift_point_errors(gt)");
  const auto p = shift_indices(pred_states);
  const auto g = shift_indices(gt_states);
  ShiftMatch m;
  m.predicted_shifts = static_cast<int>(p.size());
  for (std::size_t n = 0; n < g.size(); ++n) {
    if (n < p.size()) {
      const auto& a = pred_waypoints[p[n]];
      const auto& b = gt_waypoints[g[n]];
      m.ordinal_errors.emplace_back(std::hypot(a.x - b.x, a.y - b.y));
    } else {
      m.ordinal_errors.emplace_back(std::nullopt);
    }
  }
  return m;
}

SampleMetrics evaluate_sample(const EvalSample& s) {
  require_same(s.pred_waypoints.size(), s.gt_waypoints.size(), "evaluate_sample");
  require_same(s.gt_states.size(), s.gt_waypoints.size(), "evaluate_sample(states)");
  SampleMetrics m;
  m.l2 = l2_error(s.pred_waypoints, s.gt_waypoints);
  m.hausdorff = hausdorff(std::span<const Pose2D>(s.pred_waypoints),
                          std::span<const Pose2D>(s.gt_waypoints));
  m.fourier = fourier_descriptor_diff(s.pred_waypoints, s.gt_waypoints);
  if (s.with_heading) {
    std::vector<double> a, b;
    for (const auto& p : s.pred_waypoints) a.push_back(p.theta);
    for (const auto& p : s.gt_waypoints) b.push_back(p.theta);
    m.ahe = ahe(a, b);
  }
  const int gt_shifts = count_gear_shifts(s.gt_states);
  if (!classify_kshot(gt_shifts)) {
    throw DataError("ground truth window has " + std::to_string(gt_shifts) +
                    " gear shifts, outside the 1..4-shot taxonomy");
  }
  m.kshot = gt_shifts + 1;
  if (!s.motion_probs.empty()) {
    m.motion_acc = motion_accuracy(s.motion_probs, s.gt_states);
    std::vector<MotionState> pred;
    for (const auto& pr : s.motion_probs) pred.push_back(argmax_state(pr));
    m.shifts = shift_point_errors(s.pred_waypoints, pred, s.gt_waypoints, s.gt_states);
  }
  return m;
}

std::optional<double> ShiftCategory::ordinal_mean(std::size_t n) const {
  if (n >= matched.size() || matched[n] == 0) return std::nullopt;
  return error_sum[n] / matched[n];
}

std::optional<double> ShiftCategory::category_mean() const {
  double s = 0.0;
  int count = 0;
  for (std::size_t n = 0; n < matched.size(); ++n) {
    if (auto v = ordinal_mean(n)) {
      s += *v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return s / count;
}

std::optional<double> MetricsReport::shift_average() const {
  double s = 0.0;
  int count = 0;
  for (const auto& [k, cat] : shift_errors) {
    if (k < 2) continue;
    if (auto v = cat.category_mean()) {
      s += *v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return s / count;
}

MetricsReport aggregate(std::span<const SampleMetrics> rows) {
  if (rows.empty()) throw DataError("evaluate: empty evaluation set");
  MetricsReport r;
  r.sample_count = rows.size();
  double ahe_sum = 0.0, acc_sum = 0.0;
  std::size_t ahe_n = 0, acc_n = 0;
  for (const auto& m : rows) {
    r.l2_mean += m.l2;
    r.fourier_diff += m.fourier;
    r.hausdorff += m.hausdorff;
    if (m.ahe) {
      ahe_sum += *m.ahe;
      ++ahe_n;
    }
    if (m.motion_acc) {
      acc_sum += *m.motion_acc;
      ++acc_n;
    }
    ++r.kshot_counts[m.kshot];
    if (m.shifts) {
      auto& cat = r.shift_errors[m.kshot];
      ++cat.samples;
      const auto& errs = m.shifts->ordinal_errors;
      if (cat.total.size() < errs.size()) {
        cat.total.resize(errs.size(), 0);
        cat.matched.resize(errs.size(), 0);
        cat.error_sum.resize(errs.size(), 0.0);
      }
      for (std::size_t n = 0; n < errs.size(); ++n) {
        ++cat.total[n];
        if (errs[n]) {
          ++cat.matched[n];
          cat.error_sum[n] += *errs[n];
        }
      }
    }
  }
  const double n = static_cast<double>(rows.size());
  r.l2_mean /= n;
  r.fourier_diff /= n;
  r.hausdorff /= n;
  if (ahe_n > 0) r.ahe = ahe_sum / static_cast<double>(ahe_n);
  if (acc_n > 0) r.motion_acc = acc_sum / static_cast<double>(acc_n);
  return r;
}

MetricsReport evaluate(std::span<const EvalSample> samples) {
  std::vector<SampleMetrics> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back(evaluate_sample(s));
  return aggregate(rows);
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt3(*v) : "/"; }

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["sample_count"] = r.sample_count;
  j["l2_mean"] = r.l2_mean;
  j["fourier_diff"] = r.fourier_diff;
  j["hausdorff"] = r.hausdorff;
  j["ahe"] = opt_json(r.ahe);
  j["motion_acc"] = opt_json(r.motion_acc);
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (const auto& [k, c] : r.kshot_counts) counts[std::to_string(k) + "-shot"] = c;
  j["kshot_counts"] = counts;
  nlohmann::ordered_json shifts = nlohmann::ordered_json::object();
  for (const auto& [k, cat] : r.shift_errors) {
    nlohmann::ordered_json c;
    c["samples"] = cat.samples;
    nlohmann::ordered_json ords = nlohmann::ordered_json::array();
    for (std::size_t n = 0; n < cat.total.size(); ++n) {
      ords.push_back({{"ordinal", n + 1},
                      {"mean_error", opt_json(cat.ordinal_mean(n))},
                      {"matched", cat.matched[n]},
                      {"total", cat.total[n]}});
    }
    c["ordinals"] = ords;
    c["category_mean"] = opt_json(cat.category_mean());
    shifts[std::to_string(k) + "-shot"] = c;
  }
  j["shift_errors"] = shifts;
  j["shift_average"] = opt_json(r.shift_average());
  return j.dump(2) + "\n";
}

std::string render_table(const MetricsReport& r, const std::string& label) {
  std::string out;
  out += "| Model | L2 Dis. | Four. Diff. | Haus. Dis. | AHE | M_acc | 2S[P1] | 3S[P1 - P2] | "
         "4S[P1 - P2 - P3] | Avg. |\n";
  out += "|---|---|---|---|---|---|---|---|---|---|\n";
  out += "| " + label + " | " + fmt3(r.l2_mean) + " | " + fmt3(r.fourier_diff) + " | " +
         fmt3(r.hausdorff) + " | " + fmt_opt(r.ahe) + " | " + fmt_opt(r.motion_acc) + " |";
  for (int k = 2; k <= 4; ++k) {
    std::string cell;
    const auto it = r.shift_errors.find(k);
    for (int n = 0; n < k - 1; ++n) {
      if (n > 0) cell += " - ";
      cell += it == r.shift_errors.end() ? "/" : fmt_opt(it->second.ordinal_mean(n));
    }
    out += " " + cell + " |";
  }
  out += " " + fmt_opt(r.shift_average()) + " |\n";
  return out;
}

}  // namespace parkbench
