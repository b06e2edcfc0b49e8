#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "parkbench/ad/ops.hpp"
#include "parkbench/errors.hpp"
#include "parkbench/model.hpp"
#include "parkbench/rng.hpp"

using namespace parkbench;
using ad::Tensor;

namespace {

BevOccupancy random_bev(Rng& rng, double density = 0.15) {
  BevOccupancy b;
  for (auto& c : b.cells) c = rng.bernoulli(density) ? 1 : 0;
  return b;
}

Pose2D random_target(Rng& rng) {
  return {rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-kPi, kPi)};
}

std::vector<float> row(const Tensor<float>& t, int r) {
  const int c = t.dim(1);
  const auto d = t.data();
  return {d.begin() + r * c, d.begin() + (r + 1) * c};
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

std::vector<int> gt_inputs(const CodecConfig& codec, Rng& rng) {
  std::vector<int> in = {codec.traj_vocab().bos()};
  for (int i = 0; i < codec.horizon * codec.tokens_per_step(); ++i) {
    in.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(codec.n_traj))));
  }
  return in;
}

}  // namespace

TEST_CASE("default shapes and size budget") {
  const ModelConfig cfg;
  cfg.validate();
  CHECK(cfg.feat_hw == 16);
  CHECK(cfg.tokens() == 256);
  CHECK(cfg.crop() == 4);
  const PlannerModel m(cfg, 1);
  Rng rng(1);
  const auto in = make_input(random_bev(rng), random_target(rng), cfg);
  const auto f = m.bev_encode(in);
  CHECK(f.shape() == ad::Shape{256, 64});
  CHECK(m.params().parameter_count() < 2'000'000);

  ModelConfig bad;
  bad.feat_hw = 15;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.fusion_heads = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("empty occupancy gives input independent tokens") {
  const ModelConfig cfg;
  const PlannerModel m(cfg, 2);
  const auto a = m.bev_encode(make_input(BevOccupancy{}, {1, 2, 0.3}, cfg), false);
  const auto b = m.bev_encode(make_input(BevOccupancy{}, {-4, 5, -2.0}, cfg), false);
  CHECK(max_abs_diff(a.data(), b.data()) == 0.0);
  for (int r = 1; r < cfg.tokens(); ++r) CHECK(row(a, r) == row(a, 0));
}

TEST_CASE("swapping two patches swaps their tokens") {
  const ModelConfig cfg;
  const PlannerModel m(cfg, 3);
  Rng rng(3);
  auto in = make_input(random_bev(rng, 0.3), {0, 0, 0}, cfg);
  const int pp = cfg.bev_patch * cfg.bev_patch;
  const int a = 17, b = 200;
  const auto before = m.bev_encode(in, false);
  std::swap_ranges(in.patches.begin() + a * pp, in.patches.begin() + (a + 1) * pp,
                   in.patches.begin() + b * pp);
  const auto after = m.bev_encode(in, false);
  CHECK(row(after, a) == row(before, b));
  CHECK(row(after, b) == row(before, a));
  CHECK(row(after, 5) == row(before, 5));
}

TEST_CASE("fusion depends on the target and attention rows are normalized") {
  const ModelConfig cfg;
  const PlannerModel m(cfg, 4);
  Rng rng(4);
  const auto bev = random_bev(rng);
  const auto e1 = m.encode(make_input(bev, {3, 1, 0.2}, cfg));
  const auto e2 = m.encode(make_input(bev, {-2, 6, 1.7}, cfg));
  CHECK(max_abs_diff(e1.enhanced.data(), e2.enhanced.data()) > 0.0);

  const int n = cfg.tokens();
  REQUIRE(e1.fusion_attention.size() == static_cast<std::size_t>(cfg.fusion_heads * n * n));
  for (int r = 0; r < cfg.fusion_heads * n; ++r) {
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += e1.fusion_attention[static_cast<std::size_t>(r * n + k)];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("a zero target vector leaves the learned queries alone") {
  ModelConfig cfg;
  cfg.target_mode = TargetMode::kBevSquare;
  const PlannerModel m(cfg, 5);
  Rng rng(5);
  const auto in = make_input(random_bev(rng), {2, 2, 0}, cfg);
  const auto tg = m.target_global(in);
  for (float v : tg.data()) CHECK(v == 0.0f);
  const auto f = m.bev_encode(in);
  const auto a = m.fuse(tg, f);
  const auto b = m.fuse(Tensor<float>::zeros({1, cfg.channels}), f);
  CHECK(max_abs_diff(a.data(), b.data()) == 0.0);
}

TEST_CASE("teacher forcing is causal and has one output per input") {
  const ModelConfig cfg;
  const PlannerModel m(cfg, 6);
  Rng rng(6);
  const auto enc = m.encode(make_input(random_bev(rng), random_target(rng), cfg));
  auto inputs = gt_inputs(cfg.codec, rng);
  const auto base = m.decode_teacher(enc.enhanced, inputs);
  const int V = cfg.codec.traj_vocab().size();
  CHECK(base.logits.shape() == ad::Shape{static_cast<int>(inputs.size()), V});

  const std::size_t t = 40;
  for (std::size_t i = t + 1; i < inputs.size(); ++i) inputs[i] = (inputs[i] + 13) % cfg.codec.n_traj;
  const auto changed = m.decode_teacher(enc.enhanced, inputs);
  const auto l0 = base.logits.data();
  const auto l1 = changed.logits.data();
  CHECK(max_abs_diff(l0.subspan(0, (t + 1) * V), l1.subspan(0, (t + 1) * V)) == 0.0);
  CHECK(max_abs_diff(l0.subspan((t + 1) * V), l1.subspan((t + 1) * V)) > 0.0);

  const std::vector<int> prefix(inputs.begin(), inputs.begin() + 7);
  CHECK(m.decode_teacher(enc.enhanced, prefix).logits.dim(0) == 7);
}

TEST_CASE("greedy decoding agrees with teacher forcing on its own tokens") {
  const ModelConfig cfg;
  const PlannerModel m(cfg, 7);
  Rng rng(7);
  const auto enc = m.encode(make_input(random_bev(rng), random_target(rng), cfg));
  Tensor<float> hidden;
  const auto seq = m.decode_greedy(enc.enhanced, &hidden);
  REQUIRE(seq.valid());
  const int steps = cfg.codec.horizon * cfg.codec.tokens_per_step();
  const std::vector<int> inputs(seq.tokens.begin(), seq.tokens.begin() + steps + 1);
  const auto tf = m.decode_teacher(enc.enhanced, inputs);
  const int V = cfg.codec.traj_vocab().size();
  for (int t = 0; t < steps; ++t) {
    const auto l = tf.logits.data().subspan(static_cast<std::size_t>(t * V), cfg.codec.n_traj);
    const int best = static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
    CHECK(best == seq.tokens[static_cast<std::size_t>(t + 1)]);
  }
  CHECK(max_abs_diff(hidden.data(), tf.hidden.data()) < 1e-4);
}

TEST_CASE("motion branch shapes and gradient reach") {
  const ModelConfig cfg;
  PlannerModel m(cfg, 8);
  Rng rng(8);
  const auto in = make_input(random_bev(rng), random_target(rng), cfg);
  const auto enc = m.encode(in);
  const auto tp = m.decode_teacher(enc.enhanced, gt_inputs(cfg.codec, rng));
  const auto logits = m.motion_decode(tp.hidden, enc.enhanced);
  CHECK(logits.shape() == ad::Shape{cfg.codec.horizon, 2});

  {
    ad::NoGrad ng;
    const auto z = m.motion_decode(Tensor<float>::zeros(tp.hidden.shape()), enc.enhanced);
    CHECK(z.shape() == ad::Shape{cfg.codec.horizon, 2});
    for (float v : z.data()) CHECK(std::isfinite(v));
  }

  m.params().zero_grad();
  const std::vector<int> labels(static_cast<std::size_t>(cfg.codec.horizon), 1);
  ad::cross_entropy(logits, std::span<const int>(labels), -1).backward();
  double traj_norm = 0.0;
  for (const auto& [name, t] : m.params().params()) {
    if (name.rfind("traj.layer", 0) != 0) continue;
    for (float g : t.grad()) traj_norm += double(g) * g;
  }
  CHECK(traj_norm > 0.0);
}

TEST_CASE("prediction is deterministic and always well formed") {
  const ModelConfig cfg;
  const PlannerModel m(cfg, 9);
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const auto in = make_input(random_bev(rng, rng.uniform(0.0, 0.4)), random_target(rng), cfg);
    const auto out = m.predict(in);
    CHECK(out.traj_tokens.valid());
    CHECK(out.waypoints.size() == static_cast<std::size_t>(cfg.codec.horizon));
    REQUIRE(out.motion_probs.size() == static_cast<std::size_t>(cfg.codec.horizon));
    for (const auto& p : out.motion_probs) CHECK(p[0] + p[1] == doctest::Approx(1.0));
    if (i < 3) {
      const auto again = m.predict(in);
      CHECK(again.traj_tokens.tokens == out.traj_tokens.tokens);
      CHECK(again.motion_probs == out.motion_probs);
    }
  }
}

TEST_CASE("single branch ablation still plans the full horizon") {
  ModelConfig cfg;
  cfg.motion_branch = false;
  const PlannerModel m(cfg, 10);
  Rng rng(10);
  const auto out = m.predict(make_input(random_bev(rng), random_target(rng), cfg));
  CHECK(out.waypoints.size() == static_cast<std::size_t>(cfg.codec.horizon));
  CHECK(out.motion_probs.empty());
  for (const auto& [name, t] : m.params().params()) CHECK(name.rfind("motion.", 0) != 0);
}

TEST_CASE("checkpoint restores an identical model") {
  ModelConfig cfg;
  cfg.codec.with_heading = false;
  const PlannerModel m(cfg, 11);
  const auto bytes = m.checkpoint_bytes(R"({"note":"x"})");
  const auto back = PlannerModel::from_checkpoint(ad::decode_checkpoint(bytes));
  CHECK_FALSE(back.config().codec.with_heading);
  Rng rng(11);
  const auto in = make_input(random_bev(rng), random_target(rng), cfg);
  CHECK(back.predict(in).traj_tokens.tokens == m.predict(in).traj_tokens.tokens);
  CHECK(back.checkpoint_bytes(R"({"note":"x"})") == bytes);
  CHECK(ModelConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
}
