// Reeds-Shepp word families for the expert path generator. Formulas follow the
// closed forms of Reeds & Shepp (1990) in the normalized frame (r = 1, start at
// the origin facing +x). Every candidate is re-driven and rejected if it misses
// the goal, so symmetry transforms never produce an invalid path.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "parkbench/errors.hpp"
#include "parkbench/geometry.hpp"

namespace parkbench {
namespace {

constexpr double kZero = 10 * std::numeric_limits<double>::epsilon();
constexpr double kHalfPi = 0.5 * kPi;

enum class Turn { kLeft, kRight, kStraight };

struct Element {
  Turn turn;
  double length;  // signed, in units of r; negative means backward
};

using Word = std::vector<Element>;

double mod2pi(double x) {
  double v = std::fmod(x, 2.0 * kPi);
  if (v < -kPi) {
    v += 2.0 * kPi;
  } else if (v > kPi) {
    v -= 2.0 * kPi;
  }
  return v;
}

void polar(double x, double y, double& r, double& theta) {
  r = std::hypot(x, y);
  theta = std::atan2(y, x);
}

void tau_omega(double u, double v, double xi, double eta, double phi, double& tau, double& omega) {
  const double delta = mod2pi(u - v);
  const double a = std::sin(u) - std::sin(delta);
  const double b = std::cos(u) - std::cos(delta) - 1.0;
  const double t1 = std::atan2(eta * a - xi * b, xi * a + eta * b);
  const double t2 = 2.0 * (std::cos(delta) - std::cos(v) - std::cos(u)) + 3.0;
  tau = (t2 < 0) ? mod2pi(t1 + kPi) : mod2pi(t1);
  omega = mod2pi(tau - u + v - phi);
}

// --- base formulas: each fills (t, u, v) and reports applicability ---

bool lp_sp_lp(double x, double y, double phi, double& t, double& u, double& v) {
  polar(x - std::sin(phi), y - 1.0 + std::cos(phi), u, t);
  if (t >= -kZero) {
    v = mod2pi(phi - t);
    return v >= -kZero;
  }
  return false;
}

bool lp_sp_rp(double x, double y, double phi, double& t, double& u, double& v) {
  double t1 = 0.0;
  double u1 = 0.0;
  polar(x + std::sin(phi), y - 1.0 - std::cos(phi), u1, t1);
  u1 = u1 * u1;
  if (u1 >= 4.0) {
    u = std::sqrt(u1 - 4.0);
    t = mod2pi(t1 + std::atan2(2.0, u));
    v = mod2pi(t - phi);
    return t >= -kZero && v >= -kZero;
  }
  return false;
}

bool lp_rm_l(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x - std::sin(phi);
  const double eta = y - 1.0 + std::cos(phi);
  double u1 = 0.0;
  double theta = 0.0;
  polar(xi, eta, u1, theta);
  if (u1 <= 4.0) {
    u = -2.0 * std::asin(0.25 * u1);
    t = mod2pi(theta + 0.5 * u + kPi);
    v = mod2pi(phi - t + u);
    return t >= -kZero && u <= kZero;
  }
  return false;
}

bool lp_rup_lum_rm(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x + std::sin(phi);
  const double eta = y - 1.0 - std::cos(phi);
  const double rho = 0.25 * (2.0 + std::hypot(xi, eta));
  if (rho <= 1.0) {
    u = std::acos(rho);
    tau_omega(u, -u, xi, eta, phi, t, v);
    return t >= -kZero && v <= kZero;
  }
  return false;
}

bool lp_rum_lum_rp(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x + std::sin(phi);
  const double eta = y - 1.0 - std::cos(phi);
  const double rho = (20.0 - xi * xi - eta * eta) / 16.0;
  if (rho >= 0.0 && rho <= 1.0) {
    u = -std::acos(rho);
    if (u >= -kHalfPi) {
      tau_omega(u, u, xi, eta, phi, t, v);
      return t >= -kZero && v >= -kZero;
    }
  }
  return false;
}

bool lp_rm_sm_lm(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x - std::sin(phi);
  const double eta = y - 1.0 + std::cos(phi);
  double rho = 0.0;
  double theta = 0.0;
  polar(xi, eta, rho, theta);
  if (rho >= 2.0) {
    const double r = std::sqrt(rho * rho - 4.0);
    u = 2.0 - r;
    t = mod2pi(theta + std::atan2(r, -2.0));
    v = mod2pi(phi - kHalfPi - t);
    return t >= -kZero && u <= kZero && v <= kZero;
  }
  return false;
}

bool lp_rm_sm_rm(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x + std::sin(phi);
  const double eta = y - 1.0 - std::cos(phi);
  double rho = 0.0;
  double theta = 0.0;
  polar(-eta, xi, rho, theta);
  if (rho >= 2.0) {
    t = theta;
    u = 2.0 - rho;
    v = mod2pi(t + kHalfPi - phi);
    return t >= -kZero && u <= kZero && v <= kZero;
  }
  return false;
}

bool lp_rm_s_lm_rp(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x + std::sin(phi);
  const double eta = y - 1.0 - std::cos(phi);
  double rho = 0.0;
  double theta = 0.0;
  polar(xi, eta, rho, theta);
  if (rho >= 2.0) {
    u = 4.0 - std::sqrt(rho * rho - 4.0);
    if (u <= kZero) {
      t = mod2pi(std::atan2((4.0 - u) * xi - 2.0 * eta, -2.0 * xi + (u - 4.0) * eta));
      v = mod2pi(t - phi);
      return t >= -kZero && v >= -kZero;
    }
  }
  return false;
}

using BaseFormula = bool (*)(double, double, double, double&, double&, double&);
using WordBuilder = Word (*)(double, double, double);

struct Family {
  BaseFormula formula;
  WordBuilder build;
  bool use_backwards;  // also try the time-reversed query
};

Word word_lsl(double t, double u, double v) {
  return {{Turn::kLeft, t}, {Turn::kStraight, u}, {Turn::kLeft, v}};
}
Word word_lsr(double t, double u, double v) {
  return {{Turn::kLeft, t}, {Turn::kStraight, u}, {Turn::kRight, v}};
}
Word word_lrl(double t, double u, double v) {
  return {{Turn::kLeft, t}, {Turn::kRight, u}, {Turn::kLeft, v}};
}
Word word_lrlr_a(double t, double u, double v) {
  return {{Turn::kLeft, t}, {Turn::kRight, u}, {Turn::kLeft, -u}, {Turn::kRight, v}};
}
Word word_lrlr_b(double t, double u, double v) {
  return {{Turn::kLeft, t}, {Turn::kRight, u}, {Turn::kLeft, u}, {Turn::kRight, v}};
}
Word word_lrsl(double t, double u, double v) {
  return {{Turn::kLeft, t}, {Turn::kRight, -kHalfPi}, {Turn::kStraight, u}, {Turn::kLeft, v}};
}
Word word_lrsr(double t, double u, double v) {
  return {{Turn::kLeft, t}, {Turn::kRight, -kHalfPi}, {Turn::kStraight, u}, {Turn::kRight, v}};
}
Word word_lrslr(double t, double u, double v) {
  return {{Turn::kLeft, t},
          {Turn::kRight, -kHalfPi},
          {Turn::kStraight, u},
          {Turn::kLeft, -kHalfPi},
          {Turn::kRight, v}};
}

constexpr std::array<Family, 8> kFamilies = {{
    {lp_sp_lp, word_lsl, false},
    {lp_sp_rp, word_lsr, false},
    {lp_rm_l, word_lrl, true},
    {lp_rup_lum_rm, word_lrlr_a, false},
    {lp_rum_lum_rp, word_lrlr_b, false},
    {lp_rm_sm_lm, word_lrsl, true},
    {lp_rm_sm_rm, word_lrsr, true},
    {lp_rm_s_lm_rp, word_lrslr, false},
}};

Word timeflip(Word w) {
  for (auto& e : w) e.length = -e.length;
  return w;
}

Word reflect(Word w) {
  for (auto& e : w) {
    if (e.turn == Turn::kLeft) {
      e.turn = Turn::kRight;
    } else if (e.turn == Turn::kRight) {
      e.turn = Turn::kLeft;
    }
  }
  return w;
}

double word_length(const Word& w) {
  double total = 0.0;
  for (const auto& e : w) total += std::abs(e.length);
  return total;
}

// Every applicable word for the normalized query, before endpoint verification.
std::vector<Word> enumerate_words(double x, double y, double phi) {
  std::vector<Word> out;
  double t = 0.0;
  double u = 0.0;
  double v = 0.0;
  for (const auto& fam : kFamilies) {
    if (fam.formula(x, y, phi, t, u, v)) out.push_back(fam.build(t, u, v));
    if (fam.formula(-x, y, -phi, t, u, v)) out.push_back(timeflip(fam.build(t, u, v)));
    if (fam.formula(x, -y, -phi, t, u, v)) out.push_back(reflect(fam.build(t, u, v)));
    if (fam.formula(-x, -y, phi, t, u, v)) out.push_back(reflect(timeflip(fam.build(t, u, v))));
    if (!fam.use_backwards) continue;
    const double xb = x * std::cos(phi) + y * std::sin(phi);
    const double yb = x * std::sin(phi) - y * std::cos(phi);
    auto reversed = [](Word w) {
      std::reverse(w.begin(), w.end());
      return w;
    };
    if (fam.formula(xb, yb, phi, t, u, v)) out.push_back(reversed(fam.build(t, u, v)));
    if (fam.formula(-xb, yb, -phi, t, u, v)) out.push_back(reversed(timeflip(fam.build(t, u, v))));
    if (fam.formula(xb, -yb, -phi, t, u, v)) out.push_back(reversed(reflect(fam.build(t, u, v))));
    if (fam.formula(-xb, -yb, phi, t, u, v)) {
      out.push_back(reversed(reflect(timeflip(fam.build(t, u, v)))));
    }
  }
  return out;
}

std::vector<PathSegment> to_segments(const Word& w, double r_min) {
  constexpr double kMinArc = 1e-10;
  std::vector<PathSegment> segs;
  for (const auto& e : w) {
    const double arc = std::abs(e.length) * r_min;
    if (arc < kMinArc) continue;
    PathSegment seg;
    seg.direction = e.length >= 0.0 ? Direction::kForward : Direction::kBackward;
    seg.curvature = e.turn == Turn::kLeft ? 1.0 / r_min : (e.turn == Turn::kRight ? -1.0 / r_min : 0.0);
    seg.arc_length = arc;
    if (!segs.empty() && segs.back().direction == seg.direction &&
        segs.back().curvature == seg.curvature) {
      segs.back().arc_length += arc;
    } else {
      segs.push_back(seg);
    }
  }
  return segs;
}

double endpoint_error(const Pose2D& a, const Pose2D& b) {
  return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y),
                   std::abs(normalize_angle(a.theta - b.theta))});
}

}  // namespace

std::vector<PathSegment> plan_expert_path(const Pose2D& start, const Pose2D& goal, double r_min) {
  if (!(r_min > 0.0)) {
    throw PlanningFailed("plan_expert_path: r_min must be positive");
  }
  if (endpoint_error(start, goal) == 0.0) {
    return {};
  }
  const Pose2D rel = pose_in_frame(goal, start);
  const double x = rel.x / r_min;
  const double y = rel.y / r_min;
  const double phi = rel.theta;

  constexpr double kTol = 1e-7;
  std::optional<std::vector<PathSegment>> best;
  double best_len = std::numeric_limits<double>::infinity();
  for (const auto& word : enumerate_words(x, y, phi)) {
    const double len = word_length(word) * r_min;
    if (len >= best_len) continue;
    auto segs = to_segments(word, r_min);
    if (endpoint_error(drive(start, segs), goal) > kTol) continue;
    best_len = len;
    best = std::move(segs);
  }
  if (!best) {
    throw PlanningFailed("plan_expert_path: no Reeds-Shepp word reaches the goal");
  }
  return *best;
}

}  // namespace parkbench
