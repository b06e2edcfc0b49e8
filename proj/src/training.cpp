#include "parkbench/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "parkbench/ad/ops.hpp"
#include "parkbench/errors.hpp"

namespace parkbench {

using Tf = ad::Tensor<float>;

void TrainConfig::validate() const {
  if (epochs <= 0 || batch <= 0) throw ConfigError("epochs and batch must be positive");
  if (!(lr_max > 0.0) || lr_min < 0.0 || lr_min > lr_max) throw ConfigError("bad learning rates");
  if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
  if (clip < 0.0) throw ConfigError("clip must be >= 0");
  if (scheduled_sampling && !(ss_start < ss_end)) {
    throw ConfigError("scheduled sampling needs ss_start < ss_end");
  }
  if (noise_pos < 0.0 || noise_yaw_deg < 0.0) throw ConfigError("noise must be >= 0");
  if (weights.waypoint < 0.0 || weights.motion < 0.0 || weights.smooth < 0.0 ||
      weights.shift_window < 0) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (val_limit < 0) throw ConfigError("val_limit must be >= 0");
}

void apply_ablation(const std::string& name, ModelConfig& model, TrainConfig& train) {
  if (name == "full") return;
  if (name == "traj_only") {
    model.motion_branch = false;
    model.codec.with_heading = false;
  } else if (name == "bev_target") {
    model.target_mode = TargetMode::kBevSquare;
  } else if (name == "no_sched") {
    train.scheduled_sampling = false;
  } else {
    throw ConfigError("unknown ablation '" + name + "'");
  }
}

double scheduled_sampling_prob(int epoch, int start, int end) {
  if (epoch < start) return 1.0;
  if (epoch >= end) return 0.0;
  return 1.0 - static_cast<double>(epoch - start) / static_cast<double>(end - start);
}

Pose2D augment_target(const Pose2D& slot, Rng& rng, double pos_m, double yaw_deg) {
  const double dx = rng.uniform(-pos_m, pos_m);
  const double dy = rng.uniform(-pos_m, pos_m);
  const double dth = deg2rad(rng.uniform(-yaw_deg, yaw_deg));
  return {slot.x + dx, slot.y + dy, normalize_angle(slot.theta + dth)};
}

Tf waypoint_loss(const Tf& value_logits, std::span<const Pose2D> gt, const CodecConfig& codec) {
  const int q = codec.horizon;
  const int tpp = codec.tokens_per_step();
  if (static_cast<int>(gt.size()) != q || value_logits.dim(0) != q * tpp) {
    throw ad::ShapeError("waypoint_loss: expected " + std::to_string(q) + " steps");
  }
  const int n = codec.n_traj;
  std::vector<float> centers(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) centers[t] = static_cast<float>(deserialize_token(t, 1.0, n));
  const Tf e = ad::reshape(ad::soft_argmax(value_logits, Tf::from({n, 1}, std::move(centers))),
                           {q, tpp});
  std::vector<float> gxy, gth;
  for (const auto& p : gt) {
    gxy.push_back(static_cast<float>(p.x));
    gxy.push_back(static_cast<float>(p.y));
    gth.push_back(static_cast<float>(p.theta));
  }
  const Tf dxy = ad::sub(ad::scale(ad::slice_cols(e, 0, 2), static_cast<float>(codec.r_xy)),
                         Tf::from({q, 2}, std::move(gxy)));
  Tf total = ad::sum(ad::mul(dxy, dxy));
  if (codec.with_heading) {
    const Tf dth = ad::wrap_angle(
        ad::sub(ad::scale(ad::slice_cols(e, 2, 3), static_cast<float>(codec.r_theta)),
                Tf::from({q, 1}, std::move(gth))));
    total = ad::add(total, ad::sum(ad::mul(dth, dth)));
  }
  return ad::scale(total, 1.0f / static_cast<float>(q * tpp));
}

std::vector<float> smoothness_mask(int horizon, std::span<const int> shift_steps, int w) {
  std::vector<float> mask;
  for (int k = 1; k < horizon; ++k) {
    bool near = false;
    for (int s : shift_steps) near = near || std::abs(k - s) <= w;
    mask.push_back(near ? 0.0f : 1.0f);
  }
  return mask;
}

Tf smoothness_loss(const Tf& forward_prob, std::span<const int> shift_steps, int w) {
  const int q = forward_prob.dim(0);
  if (q < 2) return Tf::scalar(0.0f);
  const Tf d = ad::sub(ad::slice_rows(forward_prob, 1, q), ad::slice_rows(forward_prob, 0, q - 1));
  const auto mask = smoothness_mask(q, shift_steps, w);
  return ad::masked_l1(d, std::span<const float>(mask));
}

std::vector<int> motion_classes(std::span<const MotionState> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (auto m : labels) {
    if (m == MotionState::kStationary) throw DataError("motion_classes: unfilled stationary label");
    out.push_back(m == MotionState::kForward ? 0 : 1);
  }
  return out;
}

PreparedSample prepare_sample(const TrainingSample& s, const ModelConfig& cfg) {
  if (static_cast<int>(s.future_waypoints.size()) != cfg.codec.horizon ||
      s.future_motion.size() != s.future_waypoints.size()) {
    throw DataError("prepare_sample: window length does not match the horizon");
  }
  PreparedSample p;
  p.input = make_input(s.bev, s.target, cfg);
  p.target = s.target;
  p.waypoints = s.future_waypoints;
  p.motion = fill_stationary(s.future_motion, s.approach_direction);
  p.tokens = serialize_waypoints(s.future_waypoints, cfg.codec).tokens;
  p.shift_steps = s.shift_steps;
  p.scenario_id = s.scenario_id;
  p.frame_index = s.frame_index;
  return p;
}

namespace {

std::vector<int> mix_tokens(std::span<const int> gt_inputs, const Tf& logits, int n_values,
                            double p, Rng& rng) {
  std::vector<int> out(gt_inputs.begin(), gt_inputs.end());
  const auto d = logits.data();
  const int v = logits.dim(1);
  for (std::size_t t = 1; t < out.size(); ++t) {
    if (rng.bernoulli(p)) continue;
    const float* row = d.data() + (t - 1) * static_cast<std::size_t>(v);
    out[t] = static_cast<int>(std::max_element(row, row + n_values) - row);
  }
  return out;
}

}  // namespace

namespace {

LossTerms loss_from(const PlannerModel& model, const Encoded& enc, const PreparedSample& s,
                    std::span<const int> inputs, const TrainConfig& cfg) {
  const auto& mc = model.config();
  const int n_val = mc.codec.horizon * mc.codec.tokens_per_step();
  if (static_cast<int>(inputs.size()) != n_val + 1) {
    throw ad::ShapeError("decoder inputs must hold BOS plus every value token");
  }
  const auto pass = model.decode_teacher(enc.enhanced, inputs);
  const std::span<const int> labels(s.tokens.data() + 1, static_cast<std::size_t>(n_val + 1));

  LossTerms out;
  Tf l_wp;
  const auto& w = cfg.weights;
  if (cfg.waypoint_loss != WaypointLossMode::kToken) {
    const Tf m = waypoint_loss(ad::slice_rows(pass.logits, 0, n_val), s.waypoints, mc.codec);
    out.wp_mse = m.item();
    l_wp = m;
  }
  if (cfg.waypoint_loss != WaypointLossMode::kSoftArgmax) {
    const Tf ce = ad::cross_entropy(pass.logits, labels, mc.codec.traj_vocab().pad());
    out.wp_token = ce.item();
    l_wp = l_wp.defined() ? ad::add(l_wp, ce) : ce;
  }
  out.waypoint = l_wp.item();
  Tf total = ad::scale(l_wp, static_cast<float>(w.waypoint));
  if (mc.motion_branch) {
    const Tf logits = model.motion_decode(pass.hidden, enc.enhanced);
    const auto classes = motion_classes(s.motion);
    const Tf ce = ad::cross_entropy(logits, std::span<const int>(classes), -1);
    const Tf sm = smoothness_loss(ad::slice_cols(ad::softmax(logits, 1), 0, 1), s.shift_steps,
                                  w.shift_window);
    out.motion_ce = ce.item();
    out.smooth = sm.item();
    const Tf motion = ad::add(ce, ad::scale(sm, static_cast<float>(w.smooth)));
    total = ad::add(total, ad::scale(motion, static_cast<float>(w.motion)));
  }
  out.total = total;
  return out;
}

std::span<const int> gt_inputs_of(const PreparedSample& s, const ModelConfig& mc) {
  const int n_val = mc.codec.horizon * mc.codec.tokens_per_step();
  if (static_cast<int>(s.tokens.size()) != n_val + 2) {
    throw DataError("sample token sequence does not match the model codec");
  }
  return {s.tokens.data(), static_cast<std::size_t>(n_val + 1)};
}

}  // namespace

LossTerms sample_loss(const PlannerModel& model, const PreparedSample& s, const ModelInput& input,
                      std::span<const int> inputs, const TrainConfig& cfg) {
  const auto gt = gt_inputs_of(s, model.config());
  const Encoded enc = model.encode(input);
  return loss_from(model, enc, s, inputs.empty() ? gt : inputs, cfg);
}

EvalSample make_eval_sample(const PreparedSample& s, const PlannerOutput& out,
                            const CodecConfig& codec) {
  EvalSample e;
  e.pred_waypoints = out.waypoints;
  e.gt_waypoints = s.waypoints;
  e.motion_probs = out.motion_probs;
  e.gt_states = s.motion;
  e.with_heading = codec.with_heading;
  return e;
}

std::string epoch_record_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["loss_total"] = r.loss_total;
  j["loss_wp"] = r.loss_wp;
  j["loss_ce"] = r.loss_ce;
  j["loss_smooth"] = r.loss_smooth;
  j["val_l2"] = r.val_l2;
  j["loss_wp_mse"] = r.loss_wp_mse;
  j["loss_wp_token"] = r.loss_wp_token;
  j["ss_prob"] = r.ss_prob;
  j["val_motion_acc"] =
      r.val_motion_acc ? nlohmann::ordered_json(*r.val_motion_acc) : nlohmann::ordered_json();
  return j.dump();
}

Trainer::Trainer(PlannerModel& model, TrainConfig cfg) : model_(model), cfg_(std::move(cfg)) {
  cfg_.validate();
}

std::vector<int> Trainer::mixed_inputs(const PreparedSample& s, const Encoded& enc, double p,
                                       Rng& rng) const {
  ad::NoGrad guard;
  const auto gt = gt_inputs_of(s, model_.config());
  const auto pass = model_.decode_teacher(enc.enhanced, gt);
  return mix_tokens(gt, pass.logits, model_.config().codec.n_traj, p, rng);
}

std::pair<double, std::optional<double>> Trainer::validate(
    std::span<const PreparedSample> val) const {
  std::size_t n = val.size();
  if (cfg_.val_limit > 0) n = std::min(n, static_cast<std::size_t>(cfg_.val_limit));
  if (n == 0) return {0.0, std::nullopt};
  std::vector<SampleMetrics> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const auto out = model_.predict(val[i].input);
    rows.push_back(evaluate_sample(make_eval_sample(val[i], out, model_.config().codec)));
  }
  const auto r = aggregate(rows);
  return {r.l2_mean, r.motion_acc};
}

TrainResult Trainer::fit(std::span<const PreparedSample> train,
                         std::span<const PreparedSample> val,
                         const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train.empty()) throw DataError("train: empty training split");
  const auto& mc = model_.config();
  auto& store = model_.params();
  const std::int64_t per_epoch =
      (static_cast<std::int64_t>(train.size()) + cfg_.batch - 1) / cfg_.batch;
  const std::int64_t total_steps = per_epoch * cfg_.epochs;
  // Short runs warm up over at most the whole run.
  const std::int64_t warmup = per_epoch * std::min(cfg_.warmup_epochs, cfg_.epochs);

  TrainResult result;
  auto meta_for = [&](int epoch, double val_l2) {
    auto j = nlohmann::ordered_json::parse(extra_meta_);
    j["epoch"] = epoch;
    j["val_l2"] = val_l2;
    return j.dump();
  };
  std::string last_good = model_.checkpoint_bytes(meta_for(0, 0.0));
  double best = std::numeric_limits<double>::infinity();
  std::int64_t step = 0;

  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    const double p = cfg_.scheduled_sampling
                         ? scheduled_sampling_prob(epoch, cfg_.ss_start, cfg_.ss_end)
                         : 1.0;
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(cfg_.seed, {0x5f1e, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    Rng noise(derive_seed(cfg_.seed, {0xa0a, static_cast<std::uint64_t>(epoch)}));
    Rng ss(derive_seed(cfg_.seed, {0x55, static_cast<std::uint64_t>(epoch)}));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.ss_prob = p;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg_.batch)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg_.batch));
      const float inv_b = 1.0f / static_cast<float>(b1 - b0);
      store.zero_grad();
      for (std::size_t bi = b0; bi < b1; ++bi) {
        const auto& s = train[order[bi]];
        ModelInput input = s.input;
        set_target(input, augment_target(s.target, noise, cfg_.noise_pos, cfg_.noise_yaw_deg),
                   mc);
        const Encoded enc = model_.encode(input);
        std::vector<int> mixed;
        if (p < 1.0) mixed = mixed_inputs(s, enc, p, ss);
        const auto terms = loss_from(model_, enc, s,
                                     p < 1.0 ? std::span<const int>(mixed)
                                             : gt_inputs_of(s, mc),
                                     cfg_);
        const double value = terms.total.item();
        if (!std::isfinite(value)) {
          result.diverged = true;
          result.divergence = "non-finite loss at epoch " + std::to_string(epoch);
          break;
        }
        ad::scale(terms.total, inv_b).backward();
        rec.loss_total += value;
        rec.loss_wp += terms.waypoint;
        rec.loss_ce += terms.motion_ce;
        rec.loss_smooth += terms.smooth;
        rec.loss_wp_mse += terms.wp_mse;
        rec.loss_wp_token += terms.wp_token;
      }
      if (result.diverged) break;
      rec.lr = ad::lr_schedule(step, total_steps, warmup, cfg_.lr_max, cfg_.lr_min);
      const auto report = store.adam_step(rec.lr, cfg_.clip);
      ++step;
      if (report.aborted) {
        result.diverged = true;
        result.divergence = "non-finite gradient at epoch " + std::to_string(epoch);
        break;
      }
    }
    if (result.diverged) break;
    const double n = static_cast<double>(train.size());
    rec.loss_total /= n;
    rec.loss_wp /= n;
    rec.loss_ce /= n;
    rec.loss_smooth /= n;
    rec.loss_wp_mse /= n;
    rec.loss_wp_token /= n;
    std::tie(rec.val_l2, rec.val_motion_acc) = validate(val);
    const std::string meta = meta_for(epoch, rec.val_l2);
    if (val.empty() || rec.val_l2 < best) {
      best = rec.val_l2;
      result.best_epoch = epoch;
      result.best_val_l2 = rec.val_l2;
      result.best_checkpoint = model_.checkpoint_bytes(meta);
    }
    last_good = model_.checkpoint_bytes(meta);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (result.best_checkpoint.empty()) result.best_checkpoint = last_good;
  return result;
}

}  // namespace parkbench
