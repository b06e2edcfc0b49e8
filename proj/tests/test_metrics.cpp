#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <limits>

#include <json.hpp>

#include "parkbench/errors.hpp"
#include "parkbench/metrics.hpp"
#include "parkbench/rng.hpp"
#include "shift_fixtures.hpp"

using namespace parkbench;
using MS = MotionState;

namespace {

std::vector<Pose2D> random_path(Rng& rng, int n) {
  std::vector<Pose2D> p;
  for (int i = 0; i < n; ++i) p.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-kPi, kPi)});
  return p;
}

// Definitional oracles, written without the library helpers.
double l2_oracle(const std::vector<Pose2D>& a, const std::vector<Pose2D>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += std::sqrt((a[i].x - b[i].x) * (a[i].x - b[i].x) + (a[i].y - b[i].y) * (a[i].y - b[i].y));
  }
  return s / static_cast<double>(a.size());
}

double directed(const std::vector<Pose2D>& a, const std::vector<Pose2D>& b) {
  double worst = 0.0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) best = std::min(best, std::hypot(p.x - q.x, p.y - q.y));
    worst = std::max(worst, best);
  }
  return worst;
}

double ahe_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = std::fmod(a[i] - b[i], 2 * kPi);
    if (d > kPi) d -= 2 * kPi;
    if (d < -kPi) d += 2 * kPi;
    s += std::abs(d) * 180.0 / kPi;
  }
  return s / static_cast<double>(a.size());
}

double dft_oracle(const std::vector<Pose2D>& a, const std::vector<Pose2D>& b) {
  const std::size_t q = a.size();
  double s = 0.0;
  for (std::size_t k = 0; k < q; ++k) {
    std::complex<double> za, zb;
    for (std::size_t n = 0; n < q; ++n) {
      const auto w = std::polar(1.0, -2.0 * kPi * static_cast<double>(k * n) / static_cast<double>(q));
      za += std::complex<double>(a[n].x, a[n].y) * w;
      zb += std::complex<double>(b[n].x, b[n].y) * w;
    }
    s += std::norm(za - zb);
  }
  return std::sqrt(s);
}

std::vector<std::size_t> changes(const std::vector<MS>& st) {
  std::vector<std::size_t> out;
  int last = 0;
  for (std::size_t i = 0; i < st.size(); ++i) {
    const int v = static_cast<int>(st[i]);
    if (v == 0) continue;
    if (last != 0 && v != last) out.push_back(i);
    last = v;
  }
  return out;
}

// At most three direction changes, like any expert window.
std::vector<MS> random_states(Rng& rng, int n) {
  std::vector<MS> s;
  MS cur = rng.bernoulli(0.5) ? MS::kForward : MS::kReverse;
  int flips = 0;
  for (int i = 0; i < n; ++i) {
    if (flips < 3 && rng.bernoulli(0.12)) {
      cur = cur == MS::kForward ? MS::kReverse : MS::kForward;
      ++flips;
    }
    s.push_back(cur);
  }
  return s;
}

}  // namespace

TEST_CASE("L2 fixtures and oracle") {
  Rng rng(1);
  const auto a = random_path(rng, 30);
  CHECK(l2_error(a, a) == 0.0);
  auto b = a;
  for (auto& p : b) p.x += 1.0;
  CHECK(l2_error(b, a) == doctest::Approx(1.0));
  for (int t = 0; t < 100; ++t) {
    const auto p = random_path(rng, 30), g = random_path(rng, 30);
    CHECK(std::abs(l2_error(p, g) - l2_oracle(p, g)) <= 1e-12);
  }
  CHECK_THROWS_AS(l2_error(std::vector<Pose2D>(3), std::vector<Pose2D>(4)), std::invalid_argument);
}

TEST_CASE("Hausdorff fixtures and oracle") {
  const std::vector<Point2> one = {{0, 0}};
  const std::vector<Point2> two = {{0, 0}, {3, 4}};
  CHECK(hausdorff(one, two) == 5.0);
  CHECK(hausdorff(two, two) == 0.0);
  CHECK_THROWS(hausdorff(std::vector<Point2>{}, two));
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto p = random_path(rng, 1 + static_cast<int>(rng.below(40)));
    const auto g = random_path(rng, 1 + static_cast<int>(rng.below(40)));
    CHECK(hausdorff(std::span<const Pose2D>(p), std::span<const Pose2D>(g)) ==
          std::max(directed(p, g), directed(g, p)));
  }
}

TEST_CASE("Fourier descriptor distance") {
  Rng rng(3);
  const auto a = random_path(rng, 30);
  CHECK(fourier_descriptor_diff(a, a) == 0.0);
  auto shifted = a;
  for (auto& p : shifted) p.x += 1.0;
  // Only the DC coefficient moves, by Q under the unnormalized transform.
  CHECK(fourier_descriptor_diff(shifted, a) == doctest::Approx(30.0).epsilon(1e-12));
  const auto za = waypoint_dft(a), zs = waypoint_dft(shifted);
  for (std::size_t k = 1; k < za.size(); ++k) CHECK(std::abs(za[k] - zs[k]) < 1e-9);

  for (int t = 0; t < 100; ++t) {
    const int q = 2 + static_cast<int>(rng.below(40));
    const auto p = random_path(rng, q), g = random_path(rng, q);
    double pointwise = 0.0;
    for (int i = 0; i < q; ++i) pointwise += std::pow(p[i].x - g[i].x, 2) + std::pow(p[i].y - g[i].y, 2);
    const double d = fourier_descriptor_diff(p, g);
    CHECK(std::abs(d - std::sqrt(q * pointwise)) <= 1e-9 * std::max(1.0, d));
    CHECK(std::abs(d - dft_oracle(p, g)) <= 1e-9 * std::max(1.0, d));
  }
}

TEST_CASE("heading error") {
  const std::vector<double> z(5, 0.3);
  CHECK(ahe(z, z) == 0.0);
  std::vector<double> off = z;
  for (auto& v : off) v += deg2rad(10.0);
  CHECK(ahe(off, z) == doctest::Approx(10.0));
  CHECK(ahe(std::vector<double>{deg2rad(179.0)}, std::vector<double>{0.0}) == doctest::Approx(179.0));
  CHECK(ahe(std::vector<double>{deg2rad(-179.0)}, std::vector<double>{0.0}) == doctest::Approx(179.0));
  CHECK(ahe(std::vector<double>{deg2rad(181.0)}, std::vector<double>{0.0}) == doctest::Approx(179.0));
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a, b;
    for (int i = 0; i < 30; ++i) {
      a.push_back(rng.uniform(-10, 10));
      b.push_back(rng.uniform(-10, 10));
    }
    CHECK(std::abs(ahe(a, b) - ahe_oracle(a, b)) <= 1e-12);
  }
}

TEST_CASE("motion accuracy") {
  const std::vector<MS> fwd(4, MS::kForward);
  const std::vector<std::array<double, 2>> hot(4, {1.0, 0.0});
  CHECK(motion_accuracy(hot, fwd) == 1.0);
  const std::vector<std::array<double, 2>> tie(4, {0.5, 0.5});
  CHECK(argmax_state({0.5, 0.5}) == MS::kForward);
  CHECK(motion_accuracy(tie, fwd) == 1.0);
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto gt = random_states(rng, 30);
    std::vector<std::array<double, 2>> pr;
    int hits = 0;
    for (int i = 0; i < 30; ++i) {
      const double f = rng.uniform();
      pr.push_back({f, 1.0 - f});
      const MS guess = f >= 0.5 ? MS::kForward : MS::kReverse;
      hits += guess == gt[i];
    }
    CHECK(std::abs(motion_accuracy(pr, gt) - hits / 30.0) <= 1e-12);
  }
}

TEST_CASE("sequential shift matching") {
  Rng rng(6);
  const auto w = random_path(rng, 10);
  const auto s = fixtures::states("FFRRRFFFFF");
  const auto self = shift_point_errors(w, s, w, s);
  REQUIRE(self.ordinal_errors.size() == 2);
  CHECK(*self.ordinal_errors[0] == 0.0);
  CHECK(*self.ordinal_errors[1] == 0.0);

  const auto one = shift_point_errors(w, fixtures::states("FFRRRRRRRR"), w, s);
  CHECK(one.ordinal_errors[0].has_value());
  CHECK_FALSE(one.ordinal_errors[1].has_value());
  CHECK(one.predicted_shifts == 1);

  const auto fx = fixtures::window("FFRRRFFFFF", "FFRRRFFFFF", {{2, 0.5}, {5, 1.0}});
  std::vector<MS> pred;
  for (const auto& p : fx.motion_probs) pred.push_back(argmax_state(p));
  const auto m = shift_point_errors(fx.pred_waypoints, pred, fx.gt_waypoints, fx.gt_states);
  CHECK(*m.ordinal_errors[0] == doctest::Approx(0.5));
  CHECK(*m.ordinal_errors[1] == doctest::Approx(1.0));

  for (int t = 0; t < 100; ++t) {
    const auto pw = random_path(rng, 30), gw = random_path(rng, 30);
    const auto ps = random_states(rng, 30), gs = random_states(rng, 30);
    const auto r = shift_point_errors(pw, ps, gw, gs);
    const auto pi = changes(ps), gi = changes(gs);
    REQUIRE(r.ordinal_errors.size() == gi.size());
    for (std::size_t n = 0; n < gi.size(); ++n) {
      if (n < pi.size()) {
        REQUIRE(r.ordinal_errors[n].has_value());
        CHECK(*r.ordinal_errors[n] == std::hypot(pw[pi[n]].x - gw[gi[n]].x, pw[pi[n]].y - gw[gi[n]].y));
      } else {
        CHECK_FALSE(r.ordinal_errors[n].has_value());
      }
    }
  }
}

TEST_CASE("hand fixtures reproduce the shift table") {
  const auto set = fixtures::mixed_shift_set();
  const auto r = evaluate(set);
  CHECK(r.kshot_counts.at(2) == 2);
  CHECK(r.kshot_counts.at(3) == 1);
  CHECK(r.kshot_counts.at(4) == 1);
  const auto& c2 = r.shift_errors.at(2);
  CHECK(*c2.ordinal_mean(0) == doctest::Approx(fixtures::kExpected2S));
  CHECK(c2.matched[0] == 1);
  CHECK(c2.total[0] == 2);
  const auto& c3 = r.shift_errors.at(3);
  CHECK(*c3.ordinal_mean(0) == doctest::Approx(fixtures::kExpected3S[0]));
  CHECK(*c3.ordinal_mean(1) == doctest::Approx(fixtures::kExpected3S[1]));
  CHECK(*c3.category_mean() == doctest::Approx(0.75));
  const auto& c4 = r.shift_errors.at(4);
  CHECK(*c4.ordinal_mean(0) == doctest::Approx(fixtures::kExpected4SP1));
  CHECK_FALSE(c4.ordinal_mean(1).has_value());
  CHECK_FALSE(c4.ordinal_mean(2).has_value());
  CHECK(*r.shift_average() == doctest::Approx(fixtures::kExpectedAverage));

  const auto table = render_table(r, "fixture");
  CHECK(table.find("2S[P1] | 3S[P1 - P2] | 4S[P1 - P2 - P3] | Avg.") != std::string::npos);
  CHECK(table.find(fixtures::kExpectedShiftCells) != std::string::npos);
}

TEST_CASE("self evaluation and aggregation paths") {
  Rng rng(7);
  std::vector<EvalSample> set;
  for (int t = 0; t < 40; ++t) {
    EvalSample e;
    e.gt_waypoints = random_path(rng, 30);
    e.pred_waypoints = e.gt_waypoints;
    e.gt_states = random_states(rng, 30);
    for (auto s : e.gt_states) {
      e.motion_probs.push_back(s == MS::kForward ? std::array<double, 2>{1, 0}
                                                 : std::array<double, 2>{0, 1});
    }
    set.push_back(e);
  }
  const auto self = evaluate(set);
  CHECK(self.l2_mean == 0.0);
  CHECK(self.hausdorff == 0.0);
  CHECK(self.fourier_diff == 0.0);
  CHECK(*self.ahe == 0.0);
  CHECK(*self.motion_acc == 1.0);
  int total = 0;
  for (const auto& [k, c] : self.kshot_counts) total += c;
  CHECK(total == 40);

  for (auto& e : set) {
    for (auto& p : e.pred_waypoints) p.x += rng.uniform(-1, 1);
  }
  const auto batch = evaluate(set);
  std::vector<SampleMetrics> rows;
  for (const auto& e : set) rows.push_back(evaluate_sample(e));
  const auto re = aggregate(rows);
  CHECK(report_to_json(re) == report_to_json(batch));
  double l2 = 0.0;
  for (const auto& r : rows) l2 += r.l2;
  CHECK(std::abs(batch.l2_mean - l2 / 40.0) <= 1e-12);
  CHECK_THROWS_AS(aggregate(std::vector<SampleMetrics>{}), DataError);

  const auto j = nlohmann::json::parse(report_to_json(batch));
  for (const char* key : {"sample_count", "l2_mean", "fourier_diff", "hausdorff", "ahe",
                          "motion_acc", "kshot_counts", "shift_errors", "shift_average"}) {
    CHECK(j.contains(key));
  }
  for (const auto& [k, v] : j["shift_errors"].items()) {
    CHECK((k == "1-shot" || k == "2-shot" || k == "3-shot" || k == "4-shot"));
  }
}

TEST_CASE("ground truth outside the k-shot taxonomy is rejected") {
  EvalSample e;
  e.gt_waypoints = std::vector<Pose2D>(6, Pose2D{});
  e.pred_waypoints = e.gt_waypoints;
  e.gt_states = fixtures::states("FRFRFR");
  CHECK_THROWS_AS(evaluate_sample(e), DataError);
}

TEST_CASE("models without a motion branch or heading report gaps") {
  EvalSample e;
  e.gt_waypoints = std::vector<Pose2D>(5, Pose2D{1, 1, 0});
  e.pred_waypoints = e.gt_waypoints;
  e.gt_states = fixtures::states("FFRRR");
  e.with_heading = false;
  const auto r = evaluate(std::vector<EvalSample>{e});
  CHECK_FALSE(r.ahe.has_value());
  CHECK_FALSE(r.motion_acc.has_value());
  CHECK(r.shift_errors.empty());
  CHECK(render_table(r, "x").find("| / | / | / | / - / | / - / - / | / |") != std::string::npos);
}
