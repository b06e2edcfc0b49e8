#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "parkbench/ad/ops.hpp"
#include "parkbench/errors.hpp"
#include "parkbench/pipeline.hpp"
#include "parkbench/training.hpp"

using namespace parkbench;
using ad::Tensor;

namespace {

// Small shared fixture: a handful of windows from seeded scenarios.
struct Fixture {
  ModelConfig mc;
  std::vector<PreparedSample> train, val;

  explicit Fixture(bool motion = true) {
    mc.motion_branch = motion;
    GenConfig g;
    g.count = 6;
    g.seed = 31;
    const auto rep = generate_dataset(g);
    const auto samples = samples_from_records(rep.records, mc.codec.horizon, 25);
    const auto [tr, va] = split_dataset(samples, 0.7, 2);
    for (const auto& s : tr) train.push_back(prepare_sample(s, mc));
    for (const auto& s : va) val.push_back(prepare_sample(s, mc));
  }
};

TrainConfig quick(int epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch = 4;
  tc.lr_max = 1e-3;
  tc.warmup_epochs = 1;
  tc.ss_start = 1;
  tc.ss_end = 3;
  tc.val_limit = 3;
  tc.seed = 9;
  return tc;
}

Tensor<float> one_hot_logits(const std::vector<int>& ids, int V, float hot) {
  std::vector<float> v(ids.size() * static_cast<std::size_t>(V), 0.0f);
  for (std::size_t i = 0; i < ids.size(); ++i) v[i * V + ids[i]] = hot;
  return Tensor<float>::from({static_cast<int>(ids.size()), V}, std::move(v), true);
}

}  // namespace

TEST_CASE("scheduled sampling probability") {
  CHECK(scheduled_sampling_prob(1, 5, 25) == 1.0);
  CHECK(scheduled_sampling_prob(4, 5, 25) == 1.0);
  CHECK(scheduled_sampling_prob(5, 5, 25) == 1.0);
  CHECK(scheduled_sampling_prob(15, 5, 25) == 0.5);
  CHECK(scheduled_sampling_prob(25, 5, 25) == 0.0);
  CHECK(scheduled_sampling_prob(30, 5, 25) == 0.0);
  for (int e = 6; e <= 25; ++e) {
    CHECK(scheduled_sampling_prob(e, 5, 25) < scheduled_sampling_prob(e - 1, 5, 25));
  }
}

TEST_CASE("target augmentation bounds") {
  Rng rng(1);
  const Pose2D slot{2.0, -3.0, 0.4};
  CHECK(augment_target(slot, rng, 0.0, 0.0) == slot);
  for (int i = 0; i < 10000; ++i) {
    const Pose2D a = augment_target(slot, rng, 0.3, 2.0);
    CHECK(std::abs(a.x - slot.x) <= 0.3);
    CHECK(std::abs(a.y - slot.y) <= 0.3);
    CHECK(std::abs(normalize_angle(a.theta - slot.theta)) <= deg2rad(2.0) + 1e-12);
  }
}

TEST_CASE("smoothness mask semantics") {
  const std::vector<int> shifts = {5};
  const auto mask = smoothness_mask(10, shifts, 2);
  REQUIRE(mask.size() == 9);
  for (int k = 1; k <= 9; ++k) CHECK(mask[k - 1] == (std::abs(k - 5) <= 2 ? 0.0f : 1.0f));

  // Property: zeroed exactly within w of some shift.
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int q = 5 + static_cast<int>(rng.below(40));
    const int w = static_cast<int>(rng.below(4));
    std::vector<int> s;
    for (int i = 0; i < 3; ++i) s.push_back(static_cast<int>(rng.below(q)));
    const auto m = smoothness_mask(q, s, w);
    for (int k = 1; k < q; ++k) {
      int nearest = 1 << 20;
      for (int x : s) nearest = std::min(nearest, std::abs(k - x));
      CHECK(m[k - 1] == (nearest <= w ? 0.0f : 1.0f));
    }
  }
}

TEST_CASE("smoothness loss fixtures") {
  const std::vector<int> shifts = {5};
  const auto jump_at = [](int k) {
    std::vector<float> p(10);
    for (int i = 0; i < 10; ++i) p[i] = i < k ? 0.9f : 0.1f;
    return Tensor<float>::from({10, 1}, p, true);
  };
  CHECK(smoothness_loss(Tensor<float>::from({10, 1}, std::vector<float>(10, 0.7f)), shifts, 2)
            .item() == 0.0f);
  for (int k = 3; k <= 7; ++k) CHECK(smoothness_loss(jump_at(k), shifts, 2).item() == 0.0f);
  CHECK(smoothness_loss(jump_at(1), shifts, 2).item() > 0.0f);
  CHECK(smoothness_loss(jump_at(8), shifts, 2).item() > 0.0f);
}

TEST_CASE("waypoint loss oracles") {
  const CodecConfig codec;
  Rng rng(4);
  std::vector<Pose2D> gt;
  for (int i = 0; i < codec.horizon; ++i) {
    gt.push_back({rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(-3, 3)});
  }
  const auto seq = serialize_waypoints(gt, codec).tokens;
  const std::vector<int> vals(seq.begin() + 1, seq.end() - 1);
  const auto perfect = waypoint_loss(one_hot_logits(vals, codec.n_traj, 60.0f), gt, codec);
  const double floor = std::pow(codec.r_xy / codec.n_traj, 2);
  CHECK(perfect.item() <= floor);

  const std::vector<Pose2D> origin(static_cast<std::size_t>(codec.horizon), Pose2D{});
  const std::vector<int> mid_tokens(static_cast<std::size_t>(codec.horizon * 3), codec.n_traj / 2);
  // Tokens 599 and 600 straddle zero; a two-hot row averages to exactly 0.
  std::vector<float> two_hot(mid_tokens.size() * codec.n_traj, 0.0f);
  for (std::size_t i = 0; i < mid_tokens.size(); ++i) {
    two_hot[i * codec.n_traj + 599] = 50.0f;
    two_hot[i * codec.n_traj + 600] = 50.0f;
  }
  const auto zero = waypoint_loss(
      Tensor<float>::from({static_cast<int>(mid_tokens.size()), codec.n_traj}, two_hot), origin,
      codec);
  CHECK(zero.item() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("PAD rows contribute nothing to loss or gradient") {
  const int V = 9, pad = 8;
  Rng rng(5);
  std::vector<float> v(6 * V);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-2, 2));
  auto logits = Tensor<float>::from({6, V}, v, true);
  const std::vector<int> labels = {1, 3, pad, 0, pad, pad};
  auto ce = ad::cross_entropy(logits, std::span<const int>(labels), pad);
  ce.backward();
  for (int r : {2, 4, 5}) {
    for (int c = 0; c < V; ++c) CHECK(logits.grad()[r * V + c] == 0.0f);
  }
  // Same value as the loss over the unpadded rows alone.
  std::vector<float> kept;
  for (int r : {0, 1, 3}) kept.insert(kept.end(), v.begin() + r * V, v.begin() + (r + 1) * V);
  const std::vector<int> kl = {1, 3, 0};
  const auto ref =
      ad::cross_entropy(Tensor<float>::from({3, V}, kept), std::span<const int>(kl), pad);
  CHECK(ce.item() == doctest::Approx(ref.item()).epsilon(1e-6));
}

TEST_CASE("total loss re-sums from its logged terms") {
  Fixture fx;
  PlannerModel model(fx.mc, 1);
  TrainConfig tc = quick(1);
  tc.weights = {0.7, 1.3, 0.25, 2};
  for (auto mode : {WaypointLossMode::kHybrid, WaypointLossMode::kSoftArgmax,
                    WaypointLossMode::kToken}) {
    tc.waypoint_loss = mode;
    for (std::size_t i = 0; i < 3 && i < fx.train.size(); ++i) {
      const auto& s = fx.train[i];
      const auto t = sample_loss(model, s, s.input, {}, tc);
      const double resum = 0.7 * t.waypoint + 1.3 * (t.motion_ce + 0.25 * t.smooth);
      CHECK(t.total.item() == doctest::Approx(resum).epsilon(1e-6));
      CHECK(t.waypoint == doctest::Approx(t.wp_mse + t.wp_token).epsilon(1e-6));
    }
  }
}

TEST_CASE("labels come from the sample even with mixed decoder inputs") {
  Fixture fx;
  PlannerModel model(fx.mc, 2);
  TrainConfig tc = quick(1);
  const auto& s = fx.train.front();
  const auto gt = sample_loss(model, s, s.input, {}, tc);
  std::vector<int> own(s.tokens.begin(), s.tokens.end() - 1);
  const auto same = sample_loss(model, s, s.input, own, tc);
  CHECK(same.total.item() == gt.total.item());
  for (std::size_t i = 1; i < own.size(); ++i) own[i] = (own[i] + 50) % fx.mc.codec.n_traj;
  const auto mixed = sample_loss(model, s, s.input, own, tc);
  CHECK(mixed.total.item() != gt.total.item());
}

TEST_CASE("motion classes") {
  using MS = MotionState;
  CHECK(motion_classes(std::vector<MS>{MS::kForward, MS::kReverse}) == std::vector<int>{0, 1});
  CHECK_THROWS_AS(motion_classes(std::vector<MS>{MS::kStationary}), DataError);
}

TEST_CASE("ablations") {
  ModelConfig mc;
  TrainConfig tc;
  apply_ablation("traj_only", mc, tc);
  CHECK_FALSE(mc.motion_branch);
  mc = {};
  tc = {};
  apply_ablation("bev_target", mc, tc);
  CHECK(mc.target_mode == TargetMode::kBevSquare);
  mc = {};
  tc = {};
  apply_ablation("no_sched", mc, tc);
  CHECK_FALSE(tc.scheduled_sampling);
  CHECK_THROWS_AS(apply_ablation("bogus", mc, tc), ConfigError);

  TrainConfig bad;
  bad.batch = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("fixed seed reproduces the loss trace") {
  Fixture fx;
  const auto run = [&](bool ss) {
    PlannerModel model(fx.mc, 5);
    TrainConfig tc = quick(2);
    tc.scheduled_sampling = ss;
    Trainer tr(model, tc);
    return tr.fit(fx.train, fx.val);
  };
  const auto a = run(true);
  const auto b = run(true);
  REQUIRE(a.history.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(epoch_record_json(a.history[i]) == epoch_record_json(b.history[i]));
  CHECK(a.best_checkpoint == b.best_checkpoint);

  // p = 1 in epoch 1, so the schedule toggle cannot matter yet.
  const auto c = run(false);
  CHECK(c.history[0].loss_total == a.history[0].loss_total);
  CHECK(c.history[1].ss_prob == 1.0);
  CHECK(a.history[1].ss_prob == 0.5);

  for (const auto& r : a.history) {
    CHECK(r.loss_total ==
          doctest::Approx(r.loss_wp + r.loss_ce + 0.1 * r.loss_smooth).epsilon(1e-6));
  }
  const auto ck = ad::decode_checkpoint(a.best_checkpoint);
  const auto back = PlannerModel::from_checkpoint(ck);
  CHECK(back.params().parameter_count() > 0);
}

TEST_CASE("divergence keeps the last good weights") {
  Fixture fx;
  PlannerModel model(fx.mc, 6);
  TrainConfig tc = quick(3);
  tc.lr_max = 1e30;
  tc.clip = 0.0;
  Trainer tr(model, tc);
  const auto r = tr.fit(fx.train, fx.val);
  CHECK(r.diverged);
  CHECK_FALSE(r.divergence.empty());
  CHECK_FALSE(r.best_checkpoint.empty());
  const auto back = PlannerModel::from_checkpoint(ad::decode_checkpoint(r.best_checkpoint));
  for (const auto& [name, t] : back.params().params()) {
    for (float v : t.data()) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("single branch training has no motion terms") {
  Fixture fx(false);
  PlannerModel model(fx.mc, 7);
  Trainer tr(model, quick(1));
  const auto r = tr.fit(fx.train, fx.val);
  CHECK(r.history[0].loss_ce == 0.0);
  CHECK_FALSE(r.history[0].val_motion_acc.has_value());
}
