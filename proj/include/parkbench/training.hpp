#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "parkbench/ad/tensor.hpp"
#include "parkbench/dataset.hpp"
#include "parkbench/metrics.hpp"
#include "parkbench/model.hpp"
#include "parkbench/rng.hpp"

namespace parkbench {

enum class WaypointLossMode { kSoftArgmax, kToken, kHybrid };

struct LossWeights {
  double waypoint = 1.0;
  double motion = 1.0;
  double smooth = 0.1;
  int shift_window = 2;  ///< steps either side of a GT shift left out of the smoothness term
};

struct TrainConfig {
  int epochs = 30;
  int batch = 24;
  double lr_max = 2e-4;
  double lr_min = 1e-6;
  int warmup_epochs = 2;
  double clip = 0.5;
  bool scheduled_sampling = true;
  int ss_start = 5;
  int ss_end = 25;
  double noise_pos = 0.3;      ///< m, half width of the uniform target noise
  double noise_yaw_deg = 2.0;  ///< degrees
  WaypointLossMode waypoint_loss = WaypointLossMode::kHybrid;
  LossWeights weights;
  std::uint64_t seed = 0;
  int val_limit = 0;  ///< 0 evaluates the whole validation split

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Applies a named ablation: full, traj_only, bev_target, no_sched.
void apply_ablation(const std::string& name, ModelConfig& model, TrainConfig& train);

/// 1 before `start`, 0 from `end` on, linear in between.
double scheduled_sampling_prob(int epoch, int start, int end);

/// Componentwise uniform noise: x, y within +-pos_m, theta within +-yaw_deg.
Pose2D augment_target(const Pose2D& slot, Rng& rng, double pos_m, double yaw_deg);

/// MSE between soft-argmax waypoints and the GT, theta on the wrapped difference.
/// `value_logits` holds one row per value token [Q * tokens_per_step, V].
ad::Tensor<float> waypoint_loss(const ad::Tensor<float>& value_logits,
                                std::span<const Pose2D> gt, const CodecConfig& codec);

/// 1 for differences k (between steps k-1 and k, k = 1..Q-1) farther than w
/// from every GT shift, else 0. Entry k-1 holds difference k.
std::vector<float> smoothness_mask(int horizon, std::span<const int> shift_steps, int w);

/// Masked mean |p_k - p_{k-1}| over forward probabilities p [Q, 1].
ad::Tensor<float> smoothness_loss(const ad::Tensor<float>& forward_prob,
                                  std::span<const int> shift_steps, int w);

/// Class 0 forward, 1 backward.
std::vector<int> motion_classes(std::span<const MotionState> labels);

/// One window, ready for the network.
struct PreparedSample {
  ModelInput input;
  Pose2D target;
  std::vector<int> tokens;  ///< BOS, values, EOS
  std::vector<Pose2D> waypoints;
  std::vector<MotionState> motion;  ///< stationary filled
  std::vector<int> shift_steps;
  std::string scenario_id;
  std::size_t frame_index = 0;
};

PreparedSample prepare_sample(const TrainingSample& s, const ModelConfig& cfg);

struct LossTerms {
  ad::Tensor<float> total;
  double waypoint = 0.0;  ///< L_wp as weighted into the total
  double wp_mse = 0.0;
  double wp_token = 0.0;
  double motion_ce = 0.0;
  double smooth = 0.0;
};

/// Forward pass and loss for one window. `inputs` are the decoder inputs
/// (BOS plus value tokens); empty means teacher forcing on the GT. Labels
/// always come from the sample.
LossTerms sample_loss(const PlannerModel& model, const PreparedSample& s, const ModelInput& input,
                      std::span<const int> inputs, const TrainConfig& cfg);

/// Prediction paired with the GT for scoring.
EvalSample make_eval_sample(const PreparedSample& s, const PlannerOutput& out,
                            const CodecConfig& codec);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_wp = 0.0;
  double loss_ce = 0.0;
  double loss_smooth = 0.0;
  double loss_wp_mse = 0.0;
  double loss_wp_token = 0.0;
  double ss_prob = 1.0;
  double val_l2 = 0.0;
  std::optional<double> val_motion_acc;
};

std::string epoch_record_json(const EpochRecord& r);

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_l2 = 0.0;
  std::string best_checkpoint;  ///< encoded checkpoint bytes
  bool diverged = false;
  std::string divergence;
};

class Trainer {
 public:
  Trainer(PlannerModel& model, TrainConfig cfg);

  /// Runs the configured epochs. Stops early (diverged = true) on a
  /// non-finite loss or gradient; best_checkpoint then holds the last good weights.
  TrainResult fit(std::span<const PreparedSample> train, std::span<const PreparedSample> val,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

  /// Decoder inputs mixing GT and greedy tokens at GT probability `p`.
  std::vector<int> mixed_inputs(const PreparedSample& s, const Encoded& enc, double p,
                                Rng& rng) const;

  /// Extra JSON object merged into every saved checkpoint's metadata.
  void set_checkpoint_metadata(std::string json_object) { extra_meta_ = std::move(json_object); }

  /// Mean L2 (and motion accuracy) of greedy predictions.
  std::pair<double, std::optional<double>> validate(std::span<const PreparedSample> val) const;

 private:
  PlannerModel& model_;
  TrainConfig cfg_;
  std::string extra_meta_ = "{}";
};

}  // namespace parkbench
