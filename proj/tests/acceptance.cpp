// One PASS/FAIL line per acceptance criterion. Optional arguments select
// criteria by key (e.g. `acceptance gradients trend`).

#include <sys/wait.h>

#include <cblas.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "parkbench/ad/gradcheck.hpp"
#include "parkbench/cli_io.hpp"
#include "parkbench/dataset.hpp"
#include "parkbench/encoding.hpp"
#include "parkbench/metrics.hpp"
#include "parkbench/pipeline.hpp"
#include "parkbench/rng.hpp"
#include "parkbench/scenario.hpp"
#include "parkbench/training.hpp"
#include "shift_fixtures.hpp"

using namespace parkbench;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetS = 60.0;
constexpr double kQuantBound = 10.0 / 1200.0;
constexpr double kFourierSep = 0.1;
constexpr double kScenarioBudgetS = 120.0;
constexpr double kOracleTol = 1e-12;
constexpr double kParsevalTol = 1e-9;
constexpr double kMemorizeRatio = 0.01;
constexpr int kMemorizeSteps = 300;
constexpr double kTrendGain = 0.10;
constexpr double kTrendMotionAcc = 0.75;
constexpr double kTrendBudgetS = 30.0 * 60.0;
constexpr std::size_t kTrendMinSamples = 400;
constexpr std::size_t kMaxParams = 2'000'000;

// Trend run: one seeded dataset and split shared by both arms.
struct TrendSetup {
  int scenarios = 500;
  int stride = 40;
  int epochs = 20;
  int batch = 8;
  double lr = 1e-3;
  std::uint64_t data_seed = 2024;
  std::uint64_t split_seed = 7;
  std::uint64_t train_seed = 5;
  std::uint64_t model_seed = 3;
};

double seconds_since(clk::time_point t0) {
  return std::chrono::duration<double>(clk::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

double vec_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Outcome gradients() {
  const auto t0 = clk::now();
  double worst = 0.0;
  std::string worst_name;
  int checks = 0;
  int failed = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (const auto& name : ad::gradcheck_registry()) {
      const auto r = ad::run_gradcheck(name, seed, kGradTol);
      ++checks;
      failed += !r.passed || !(r.max_rel_error < kGradTol);
      if (!(r.max_rel_error <= worst)) {
        worst = r.max_rel_error;
        worst_name = name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs < kGradBudgetS,
          fmt("%d checks, %d failed, worst %.2e (%s), %.1f s", checks, failed, worst,
              worst_name.c_str(), secs)};
}

Outcome serialization() {
  Rng rng(17);
  int violations = 0;
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double p = rng.uniform(-10, 10);
    const double err = std::abs(p - deserialize_token(serialize_value(p, 10, 1200), 10, 1200));
    worst = std::max(worst, err);
    violations += err > kQuantBound;
  }
  return {violations == 0, fmt("10000 points, %d violations, worst %.3f mm (bound %.3f mm)",
                               violations, worst * 1e3, kQuantBound * 1e3)};
}

// Smallest separation d (mm) such that every pair on the 1 mm grid at
// least d apart is encoded more than kFourierSep apart. Pairs beyond 2 m are
// separated by the raw normalized coordinate alone.
int injectivity_threshold_mm(bool along_x, double* sep_at_2cm) {
  const int n = 20001;
  const int max_off = 2000;
  std::vector<std::vector<double>> enc(n);
  for (int i = 0; i < n; ++i) {
    const double u = -10.0 + 1e-3 * i;
    enc[i] = encode_target(along_x ? Pose2D{u, 0, 0} : Pose2D{0, u, 0}, 10.0, 12).values;
  }
  std::vector<double> min_at(max_off + 1, std::numeric_limits<double>::infinity());
  for (int off = 1; off <= max_off; ++off) {
    for (int i = 0; i + off < n; ++i) min_at[off] = std::min(min_at[off], vec_dist(enc[i], enc[i + off]));
  }
  double suffix = std::numeric_limits<double>::infinity();
  int threshold = max_off + 1;
  for (int off = max_off; off >= 1; --off) {
    suffix = std::min(suffix, min_at[off]);
    if (suffix > kFourierSep) threshold = off;
    if (off == 20) *sep_at_2cm = suffix;
  }
  return threshold;
}

// Same threshold on a 1 um grid below 2 mm, over random base points.
int fine_threshold_um() {
  Rng rng(23);
  std::vector<double> bases;
  for (int i = 0; i < 64; ++i) bases.push_back(rng.uniform(-9.9, 9.9));
  int threshold = 2000;
  for (int d = 1999; d >= 1; --d) {
    bool ok = true;
    for (double u : bases) {
      ok = ok && vec_dist(encode_target({u, 0, 0}, 10.0, 12).values,
                          encode_target({u + 1e-6 * d, 0, 0}, 10.0, 12).values) > kFourierSep;
    }
    if (!ok) break;
    threshold = d;
  }
  return threshold;
}

Outcome fourier() {
  double sx = 0.0, sy = 0.0;
  const int tx = injectivity_threshold_mm(true, &sx);
  const int ty = injectivity_threshold_mm(false, &sy);
  const double worst = std::min(sx, sy);
  const int fine = tx == 1 ? fine_threshold_um() : 1000 * tx;
  return {worst > kFourierSep,
          fmt("min distance for >= 2 cm: %.4f; threshold on the 1 mm sweep x %d mm, y %d mm; "
              "measured injectivity threshold %.3f mm",
              worst, tx, ty, fine * 1e-3)};
}

Outcome scheduled_sampling() {
  const double p4 = scheduled_sampling_prob(4, 5, 25);
  const double p15 = scheduled_sampling_prob(15, 5, 25);
  const double p25 = scheduled_sampling_prob(25, 5, 25);
  return {p4 == 1.0 && p15 == 0.5 && p25 == 0.0,
          fmt("p(4) = %.17g, p(15) = %.17g, p(25) = %.17g", p4, p15, p25)};
}

Outcome smoothness() {
  const std::vector<int> shift = {5};
  // Forward probability with a single jump between step j-1 and j.
  auto jump_loss = [&](int j) {
    std::vector<float> p(10, 1.0f);
    for (int k = j; k < 10; ++k) p[k] = 0.0f;
    auto t = ad::Tensor<float>::from({10, 1}, p, true);
    return smoothness_loss(t, shift, 2).item();
  };
  bool inside_zero = true;
  std::ostringstream os;
  for (int j = 3; j <= 7; ++j) {
    const double v = jump_loss(j);
    inside_zero = inside_zero && v == 0.0;
    os << "j" << j << "=" << v << " ";
  }
  const double outside = jump_loss(1);
  os << "j1=" << outside;
  return {inside_zero && outside > 0.0, os.str()};
}

// Frame-wise footprint check along the emitted trajectory, interpolating
// between frames.
bool trajectory_clear(const DatasetRecord& rec, const ScenarioParams& sp) {
  const auto bounds = lot_bounds(sp);
  const auto& f = rec.traj.frames;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const int subs = i + 1 < f.size() ? 8 : 1;
    for (int s = 0; s < subs; ++s) {
      Pose2D p = f[i].pose;
      if (s > 0) {
        const double a = static_cast<double>(s) / subs;
        const auto& q = f[i + 1].pose;
        p = {p.x + a * (q.x - p.x), p.y + a * (q.y - p.y),
             p.theta + a * normalize_angle(q.theta - p.theta)};
      }
      const auto box = sp.ego.footprint(p);
      for (const auto& ob : rec.static_vehicles) {
        if (obb_intersect(box, ob)) return false;
      }
      for (const auto& [x, y] : obb_corners(box)) {
        if (!obb_contains(bounds, x, y)) return false;
      }
    }
  }
  return true;
}

Outcome scenarios() {
  GenConfig gc;
  gc.count = 500;
  gc.seed = 2024;
  const auto t0 = clk::now();
  const auto rep = generate_dataset(gc);
  const double secs = seconds_since(t0);
  const auto lot = make_lot(gc.params);
  int success = 0, clear = 0;
  std::map<int, int> census;
  for (const auto& rec : rep.records) {
    const auto& slot = find_slot(lot, rec.target_slot_id);
    success += parking_success(rec.traj.frames.back().pose, slot);
    clear += trajectory_clear(rec, gc.params);
    const auto k = classify_kshot(count_gear_shifts(
        [&] {
          std::vector<MotionState> s;
          for (const auto& fr : rec.traj.frames) s.push_back(fr.state);
          return s;
        }()));
    if (k) ++census[static_cast<int>(*k)];
  }
  const int n = static_cast<int>(rep.records.size());
  bool covers = true;
  for (int k = 1; k <= 4; ++k) covers = covers && census[k] > 0;
  return {n > 0 && success == n && clear == n && covers && secs < kScenarioBudgetS,
          fmt("%d emitted (%d infeasible, %d filtered), success %d, collision-free %d, "
              "census 1:%d 2:%d 3:%d 4:%d, %.1f s",
              n, rep.infeasible, rep.filtered, success, clear, census[1], census[2], census[3],
              census[4], secs)};
}

// Brute-force oracles, written without the library helpers.
std::vector<Pose2D> random_path(Rng& rng, int n) {
  std::vector<Pose2D> p;
  for (int i = 0; i < n; ++i) {
    p.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-kPi, kPi)});
  }
  return p;
}

std::vector<MotionState> random_states(Rng& rng, int n) {
  std::vector<MotionState> s;
  auto cur = rng.bernoulli(0.5) ? MotionState::kForward : MotionState::kReverse;
  int flips = 0;
  for (int i = 0; i < n; ++i) {
    if (flips < 3 && rng.bernoulli(0.12)) {
      cur = cur == MotionState::kForward ? MotionState::kReverse : MotionState::kForward;
      ++flips;
    }
    s.push_back(cur);
  }
  return s;
}

std::vector<std::size_t> direction_changes(const std::vector<MotionState>& st) {
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

Outcome metric_oracles() {
  Rng rng(99);
  double l2_err = 0, hd_err = 0, ahe_err = 0, acc_err = 0, shift_err = 0, parseval_err = 0;
  bool shift_shape = true;
  for (int t = 0; t < 100; ++t) {
    const int q = 2 + static_cast<int>(rng.below(40));
    const auto p = random_path(rng, q), g = random_path(rng, q);

    double l2 = 0.0;
    for (int i = 0; i < q; ++i) l2 += std::sqrt(std::pow(p[i].x - g[i].x, 2) + std::pow(p[i].y - g[i].y, 2));
    l2_err = std::max(l2_err, std::abs(l2_error(p, g) - l2 / q));

    auto directed = [](const std::vector<Pose2D>& a, const std::vector<Pose2D>& b) {
      double worst = 0.0;
      for (const auto& u : a) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& v : b) best = std::min(best, std::hypot(u.x - v.x, u.y - v.y));
        worst = std::max(worst, best);
      }
      return worst;
    };
    const auto g2 = random_path(rng, 1 + static_cast<int>(rng.below(40)));
    hd_err = std::max(hd_err, std::abs(hausdorff(std::span<const Pose2D>(p), std::span<const Pose2D>(g2)) -
                                       std::max(directed(p, g2), directed(g2, p))));

    std::vector<double> ha, hb;
    double ahe_sum = 0.0;
    for (int i = 0; i < q; ++i) {
      ha.push_back(rng.uniform(-10, 10));
      hb.push_back(rng.uniform(-10, 10));
      double d = std::fmod(ha[i] - hb[i], 2 * kPi);
      if (d > kPi) d -= 2 * kPi;
      if (d < -kPi) d += 2 * kPi;
      ahe_sum += std::abs(d) * 180.0 / kPi;
    }
    ahe_err = std::max(ahe_err, std::abs(ahe(ha, hb) - ahe_sum / q));

    const auto gs = random_states(rng, q);
    std::vector<std::array<double, 2>> probs;
    int hits = 0;
    for (int i = 0; i < q; ++i) {
      const double f = rng.uniform();
      probs.push_back({f, 1.0 - f});
      hits += (f >= 0.5 ? MotionState::kForward : MotionState::kReverse) == gs[i];
    }
    acc_err = std::max(acc_err, std::abs(motion_accuracy(probs, gs) - static_cast<double>(hits) / q));

    const auto ps = random_states(rng, q);
    const auto r = shift_point_errors(p, ps, g, gs);
    const auto pi = direction_changes(ps), gi = direction_changes(gs);
    shift_shape = shift_shape && r.ordinal_errors.size() == gi.size();
    for (std::size_t n = 0; shift_shape && n < gi.size(); ++n) {
      if (n < pi.size()) {
        shift_shape = shift_shape && r.ordinal_errors[n].has_value();
        if (shift_shape) {
          shift_err = std::max(shift_err, std::abs(*r.ordinal_errors[n] -
                                                   std::hypot(p[pi[n]].x - g[gi[n]].x, p[pi[n]].y - g[gi[n]].y)));
        }
      } else {
        shift_shape = shift_shape && !r.ordinal_errors[n].has_value();
      }
    }

    double pointwise = 0.0;
    for (int i = 0; i < q; ++i) pointwise += std::pow(p[i].x - g[i].x, 2) + std::pow(p[i].y - g[i].y, 2);
    const double d = fourier_descriptor_diff(p, g);
    parseval_err = std::max(parseval_err, std::abs(d - std::sqrt(q * pointwise)) / std::max(1.0, d));
  }
  const bool ok = l2_err <= kOracleTol && hd_err <= kOracleTol && ahe_err <= kOracleTol &&
                  acc_err <= kOracleTol && shift_err <= kOracleTol && shift_shape &&
                  parseval_err <= kParsevalTol;
  return {ok, fmt("100 fixtures, max deviation L2 %.1e, Hausdorff %.1e, AHE %.1e, accuracy %.1e, "
                  "shift %.1e (ordinals %s), Parseval %.1e",
                  l2_err, hd_err, ahe_err, acc_err, shift_err, shift_shape ? "ok" : "mismatch",
                  parseval_err)};
}

Outcome memorization() {
  ScenarioParams sp;
  const auto lot = make_lot(sp);
  const auto sc = generate_scenario(11, lot, 3, 5, sp);
  const auto slice = extract_valid_slice(sc.expert);
  const auto samples = build_training_samples(slice, sc.config.static_vehicles, 30, 1);
  ModelConfig mc;
  PlannerModel model(mc, 1);
  const std::vector<PreparedSample> train{prepare_sample(samples.at(40), mc)};
  TrainConfig tc;
  tc.epochs = kMemorizeSteps;
  tc.batch = 1;
  tc.warmup_epochs = 0;
  tc.lr_max = tc.lr_min = 1e-3;
  tc.scheduled_sampling = false;
  tc.noise_pos = 0.0;
  tc.noise_yaw_deg = 0.0;
  Trainer trainer(model, tc);
  const auto res = trainer.fit(train, {});
  const double first = res.history.front().loss_total;
  const double last = res.history.back().loss_total;
  const bool exact = model.predict(train[0].input).traj_tokens.tokens == train[0].tokens;
  return {!res.diverged && last < kMemorizeRatio * first && exact &&
              static_cast<int>(res.history.size()) <= kMemorizeSteps,
          fmt("%zu steps, loss %.4f -> %.5f (%.3f%%), greedy decode %s", res.history.size(), first,
              last, 100.0 * last / first, exact ? "exact" : "differs")};
}

struct ArmResult {
  double val_l2 = 0.0;
  std::optional<double> motion_acc;
  int best_epoch = 0;
  double seconds = 0.0;
  std::size_t params = 0;
};

ArmResult train_arm(const std::string& ablation, const TrendSetup& ts,
                    const std::vector<TrainingSample>& tr, const std::vector<TrainingSample>& va) {
  ModelConfig mc;
  TrainConfig tc;
  tc.epochs = ts.epochs;
  tc.batch = ts.batch;
  tc.lr_max = ts.lr;
  tc.seed = ts.train_seed;
  // Both arms train without scheduled sampling.
  tc.scheduled_sampling = false;
  apply_ablation(ablation, mc, tc);
  std::vector<PreparedSample> ptr, pva;
  for (const auto& s : tr) ptr.push_back(prepare_sample(s, mc));
  for (const auto& s : va) pva.push_back(prepare_sample(s, mc));
  PlannerModel model(mc, ts.model_seed);
  Trainer trainer(model, tc);
  const auto t0 = clk::now();
  const auto res = trainer.fit(ptr, pva, [&](const EpochRecord& r) {
    std::printf("  %s %s\n", ablation.c_str(), epoch_record_json(r).c_str());
    std::fflush(stdout);
  });
  ArmResult out;
  out.seconds = seconds_since(t0);
  out.params = model.params().parameter_count();
  out.best_epoch = res.best_epoch;
  out.val_l2 = res.best_val_l2;
  for (const auto& r : res.history) {
    if (r.epoch == res.best_epoch) out.motion_acc = r.val_motion_acc;
  }
  if (res.diverged) out.val_l2 = std::numeric_limits<double>::infinity();
  return out;
}

Outcome trend() {
  const TrendSetup ts;
  GenConfig gc;
  gc.count = ts.scenarios;
  gc.seed = ts.data_seed;
  const auto rep = generate_dataset(gc);
  const auto samples = samples_from_records(rep.records, 30, ts.stride);
  const auto [tr, va] = split_dataset(samples, 0.8, ts.split_seed);
  std::printf("  trend data: %zu samples, %zu train, %zu val\n", samples.size(), tr.size(), va.size());
  const auto full = train_arm("full", ts, tr, va);
  const auto traj = train_arm("traj_only", ts, tr, va);
  const double gain = (traj.val_l2 - full.val_l2) / traj.val_l2;
  const double acc = full.motion_acc.value_or(0.0);
  const bool ok = samples.size() >= kTrendMinSamples && full.val_l2 < traj.val_l2 &&
                  gain >= kTrendGain && acc >= kTrendMotionAcc && full.seconds < kTrendBudgetS &&
                  traj.seconds < kTrendBudgetS && full.params <= kMaxParams &&
                  traj.params <= kMaxParams;
  return {ok, fmt("%zu samples; val L2 full %.4f (epoch %d) vs traj_only %.4f (epoch %d), "
                  "gain %.1f%% (need >= %.0f%%); motion acc %.3f (need >= %.2f); "
                  "params %zu / %zu; time %.0f s / %.0f s",
                  samples.size(), full.val_l2, full.best_epoch, traj.val_l2, traj.best_epoch,
                  100.0 * gain, 100.0 * kTrendGain, acc, kTrendMotionAcc, full.params, traj.params,
                  full.seconds, traj.seconds)};
}

Outcome shift_table() {
  const auto set = fixtures::mixed_shift_set();
  const auto r = evaluate(set);
  const auto table = render_table(r, "fixture");
  const bool header = table.find("2S[P1] | 3S[P1 - P2] | 4S[P1 - P2 - P3] | Avg.") != std::string::npos;
  const bool cells = table.find(fixtures::kExpectedShiftCells) != std::string::npos;
  const auto avg = r.shift_average();
  const bool avg_ok = avg && std::abs(*avg - fixtures::kExpectedAverage) < 1e-12;
  const auto c3 = r.shift_errors.at(3).category_mean();
  const bool c3_ok = c3 && std::abs(*c3 - 0.75) < 1e-12;
  return {header && cells && avg_ok && c3_ok,
          fmt("columns %s, cells %s, 3S mean %s, average %.6f (hand %.6f)", header ? "ok" : "missing",
              cells ? "match" : "differ", c3_ok ? "ok" : "wrong", avg.value_or(-1.0),
              fixtures::kExpectedAverage)};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "SOURCE_DATE_EPOCH=1700000000 " + std::string(PARKBENCH_EXE) + " " +
                          args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// Every file under `dir`, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_text(e.path());
  }
  return out;
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "parkbench_acceptance";
  const auto work = root / "run";
  const auto log = root / "cli.log";
  auto one_pass = [&]() -> std::optional<std::map<std::string, std::string>> {
    fs::remove_all(work);
    fs::create_directories(work);
    const std::string d = (work / "data").string();
    const std::string t = (work / "train").string();
    const std::string e = (work / "eval").string();
    fs::create_directories(e);
    if (run_cli("gen --seed 11 --scenarios 12 --out " + d, log) != 0) return std::nullopt;
    if (run_cli("train --data " + d + " --out " + t +
                    " --seed 3 --epochs 2 --batch 4 --stride 20 --val-limit 8",
                log) != 0) {
      return std::nullopt;
    }
    if (run_cli("eval --ckpt " + t + "/best.ckpt --data " + d + " --report " + e +
                    "/report.json --table " + e + "/table.txt --predictions " + e + "/pred.jsonl",
                log) != 0) {
      return std::nullopt;
    }
    return snapshot(work);
  };
  const auto a = one_pass();
  const auto b = one_pass();
  if (!a || !b) return {false, "a command failed, see " + log.string()};
  std::vector<std::string> differ;
  for (const auto& [k, v] : *a) {
    const auto it = b->find(k);
    if (it == b->end() || it->second != v) differ.push_back(k);
  }
  std::size_t bytes = 0;
  for (const auto& [k, v] : *a) bytes += v.size();
  std::string names;
  for (const auto& k : differ) names += " " + k;
  return {differ.empty() && a->size() == b->size() && a->size() >= 9,
          fmt("%zu files, %zu bytes compared, %zu differ%s", a->size(), bytes, differ.size(),
              names.c_str())};
}

struct Criterion {
  const char* key;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  openblas_set_num_threads(1);
  const std::vector<Criterion> all = {
      {"gradients", "gradient suite", gradients},
      {"serialization", "serialization bound", serialization},
      {"fourier", "Fourier resolution", fourier},
      {"ss", "scheduled sampling exactness", scheduled_sampling},
      {"smoothness", "smoothness-mask semantics", smoothness},
      {"scenarios", "expert/scenario validity", scenarios},
      {"metrics", "metric oracles", metric_oracles},
      {"memorize", "memorization sanity", memorization},
      {"trend", "dual-branch trend", trend},
      {"shift_table", "shift-ordinal reporting", shift_table},
      {"determinism", "determinism", determinism},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.contains(c.key)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
