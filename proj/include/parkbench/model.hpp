#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "parkbench/ad/ops.hpp"
#include "parkbench/ad/optim.hpp"
#include "parkbench/ad/tensor.hpp"
#include "parkbench/dataset.hpp"
#include "parkbench/encoding.hpp"
#include "parkbench/rng.hpp"

namespace parkbench {

enum class TargetMode { kFourier, kBevSquare };

struct ModelConfig {
  int bev_patch = 12;
  int feat_hw = 16;  ///< floor(200 / bev_patch); the remainder is cropped evenly
  int channels = 64;
  int ffn_hidden = 128;
  int fusion_heads = 4;
  int traj_layers = 2;
  int traj_heads = 4;
  int motion_layers = 1;
  int motion_heads = 4;
  int fourier_L = 12;
  double c_max = 10.0;
  int value_freqs = 10;  ///< sinusoid octaves describing each value token's bin center
  CodecConfig codec;
  bool motion_branch = true;
  TargetMode target_mode = TargetMode::kFourier;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  [[nodiscard]] int tokens() const { return feat_hw * feat_hw; }
  [[nodiscard]] int crop() const { return (BevOccupancy::kSize - bev_patch * feat_hw) / 2; }
  [[nodiscard]] int target_dim() const { return 4 * fourier_L + 4; }

  [[nodiscard]] std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

/// What the network sees for one sample.
struct ModelInput {
  std::vector<float> patches;         ///< [N, p*p] occupancy patches
  std::vector<float> target_patches;  ///< [N, p*p] target square (BEV target mode only)
  std::vector<float> target_enc;      ///< 4L + 4 Fourier features
};

ModelInput make_input(const BevOccupancy& bev, const Pose2D& target, const ModelConfig& cfg);

/// Rebuilds only the target part of `in` (Fourier features or target square).
void set_target(ModelInput& in, const Pose2D& target, const ModelConfig& cfg);

struct Encoded {
  ad::Tensor<float> bev;       ///< F_bev [N, C]
  ad::Tensor<float> enhanced;  ///< F_enhanced [N, C]
  ad::Tensor<float> t_global;  ///< [1, C]
  std::vector<float> fusion_attention;  ///< [heads, N, N]
};

struct TrajectoryPass {
  ad::Tensor<float> logits;  ///< [T, V]
  ad::Tensor<float> hidden;  ///< [T, C], final pre-head states
};

struct PlannerOutput {
  std::vector<Pose2D> waypoints;
  std::vector<std::array<double, 2>> motion_probs;  ///< [forward, backward]; empty without motion branch
  TokenSequence traj_tokens;
  std::vector<float> fusion_attention;
};

class PlannerModel {
 public:
  PlannerModel(const ModelConfig& cfg, std::uint64_t seed);

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] ad::ParameterStore& params() { return store_; }
  [[nodiscard]] const ad::ParameterStore& params() const { return store_; }

  /// Patch embedding plus positional embedding, [N, C].
  ad::Tensor<float> bev_encode(const ModelInput& in, bool with_position = true) const;

  /// Target projection (zero in BEV target mode).
  ad::Tensor<float> target_global(const ModelInput& in) const;

  /// Queries s_j + t_global cross-attend F_bev.
  ad::Tensor<float> fuse(const ad::Tensor<float>& t_global, const ad::Tensor<float>& f_bev,
                         std::vector<float>* attention = nullptr) const;

  Encoded encode(const ModelInput& in) const;

  /// Teacher-forced pass over `inputs` (BOS first).
  TrajectoryPass decode_teacher(const ad::Tensor<float>& enhanced,
                                std::span<const int> inputs) const;

  /// Greedy decoding with a key/value cache: value tokens only for the first
  /// horizon * tokens_per_step steps, then EOS. `hidden` receives [T, C].
  TokenSequence decode_greedy(const ad::Tensor<float>& enhanced,
                              ad::Tensor<float>* hidden = nullptr) const;

  /// Motion logits [Q, 2] (forward, backward).
  ad::Tensor<float> motion_decode(const ad::Tensor<float>& traj_hidden,
                                  const ad::Tensor<float>& enhanced) const;

  /// Full inference (no gradient recording).
  PlannerOutput predict(const ModelInput& in) const;

  [[nodiscard]] std::string checkpoint_bytes(const std::string& extra_metadata = "{}") const;
  static PlannerModel from_checkpoint(const ad::Checkpoint& ck);

 private:
  struct Linear {
    ad::Tensor<float> w, b;
  };
  struct Norm {
    ad::Tensor<float> g, b;
  };
  struct Mha {
    Linear q, k, v, o;
  };
  struct Ffn {
    Linear up, down;
  };
  struct DecoderLayer {
    Norm n1, n2, n3;
    Mha self, cross;
    Ffn ffn;
  };

  Linear make_linear(const std::string& name, int in, int out, bool bias = true);
  Norm make_norm(const std::string& name, int dim);
  Mha make_mha(const std::string& name);
  Ffn make_ffn(const std::string& name);
  DecoderLayer make_layer(const std::string& name);
  ad::Tensor<float> make_embedding(const std::string& name, int rows, int cols);

  [[nodiscard]] ad::Tensor<float> linear(const ad::Tensor<float>& x, const Linear& l) const;
  [[nodiscard]] ad::Tensor<float> norm(const ad::Tensor<float>& x, const Norm& n) const;
  ad::Tensor<float> mha(const ad::Tensor<float>& xq, const ad::Tensor<float>& xkv, const Mha& m,
                        int heads, ad::AttentionMask mask = {},
                        std::vector<float>* weights = nullptr) const;
  [[nodiscard]] ad::Tensor<float> embed_tokens(std::span<const int> ids) const;
  [[nodiscard]] ad::Tensor<float> token_logits(const ad::Tensor<float>& hidden) const;
  [[nodiscard]] ad::Tensor<float> ffn(const ad::Tensor<float>& x, const Ffn& f) const;
  ad::Tensor<float> layer(const ad::Tensor<float>& x, const ad::Tensor<float>& memory,
                          const DecoderLayer& l, int heads, bool causal) const;

  ModelConfig cfg_;
  ad::ParameterStore store_;
  Rng init_rng_;

  Linear patch_;
  ad::Tensor<float> target_patch_w_;
  ad::Tensor<float> bev_pos_;
  Linear tgt1_, tgt2_;
  ad::Tensor<float> fusion_queries_;
  Norm fusion_nq_, fusion_n2_, fusion_out_;
  Mha fusion_cross_;
  Ffn fusion_ffn_;
  ad::Tensor<float> tok_emb_, tok_pos_;
  ad::Tensor<float> value_feat_, value_feat_t_;  // fixed [V, F] and [F, V]
  ad::Tensor<float> tok_value_, head_value_;
  std::vector<DecoderLayer> traj_layers_;
  Norm traj_out_;
  Linear traj_head_;
  ad::Tensor<float> motion_queries_;
  Norm motion_n1_, motion_n2_;
  Mha motion_stage1_;
  Ffn motion_ffn1_;
  std::vector<DecoderLayer> motion_layers_;
  Norm motion_out_;
  Linear motion_head_;
};

}  // namespace parkbench
