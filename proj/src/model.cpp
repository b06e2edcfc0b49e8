#include "parkbench/model.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "parkbench/ad/ops.hpp"
#include "parkbench/errors.hpp"

namespace parkbench {

using ad::Tensor;
using Tf = Tensor<float>;

void ModelConfig::validate() const {
  if (bev_patch <= 0 || feat_hw <= 0) throw ConfigError("bev_patch and feat_hw must be positive");
  if (feat_hw != BevOccupancy::kSize / bev_patch) {
    throw ConfigError("feat_hw must equal floor(200 / bev_patch)");
  }
  if ((BevOccupancy::kSize - bev_patch * feat_hw) % 2 != 0) {
    throw ConfigError("bev_patch leaves an odd crop margin");
  }
  if (channels <= 0 || ffn_hidden <= 0) throw ConfigError("channels must be positive");
  for (int h : {fusion_heads, traj_heads, motion_heads}) {
    if (h <= 0 || channels % h != 0) throw ConfigError("heads must divide channels");
  }
  if (traj_layers <= 0 || motion_layers <= 0) throw ConfigError("layer counts must be positive");
  if (fourier_L <= 0 || c_max <= 0.0) throw ConfigError("bad target encoding settings");
  if (value_freqs < 0 || value_freqs > 16) throw ConfigError("value_freqs must lie in [0, 16]");
  if (codec.horizon <= 0 || codec.n_traj < 2 || codec.r_xy <= 0.0 || codec.r_theta <= 0.0) {
    throw ConfigError("bad codec settings");
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["bev_patch"] = bev_patch;
  j["feat_hw"] = feat_hw;
  j["channels"] = channels;
  j["ffn_hidden"] = ffn_hidden;
  j["fusion_heads"] = fusion_heads;
  j["traj_layers"] = traj_layers;
  j["traj_heads"] = traj_heads;
  j["motion_layers"] = motion_layers;
  j["motion_heads"] = motion_heads;
  j["fourier_L"] = fourier_L;
  j["c_max"] = c_max;
  j["value_freqs"] = value_freqs;
  j["horizon"] = codec.horizon;
  j["n_traj"] = codec.n_traj;
  j["n_motion"] = codec.n_motion;
  j["r_xy"] = codec.r_xy;
  j["r_theta"] = codec.r_theta;
  j["with_heading"] = codec.with_heading;
  j["motion_branch"] = motion_branch;
  j["target_mode"] = target_mode == TargetMode::kFourier ? "fourier" : "bev_square";
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.bev_patch = j.at("bev_patch").get<int>();
    c.feat_hw = j.at("feat_hw").get<int>();
    c.channels = j.at("channels").get<int>();
    c.ffn_hidden = j.at("ffn_hidden").get<int>();
    c.fusion_heads = j.at("fusion_heads").get<int>();
    c.traj_layers = j.at("traj_layers").get<int>();
    c.traj_heads = j.at("traj_heads").get<int>();
    c.motion_layers = j.at("motion_layers").get<int>();
    c.motion_heads = j.at("motion_heads").get<int>();
    c.fourier_L = j.at("fourier_L").get<int>();
    c.c_max = j.at("c_max").get<double>();
    c.value_freqs = j.at("value_freqs").get<int>();
    c.codec.horizon = j.at("horizon").get<int>();
    c.codec.n_traj = j.at("n_traj").get<int>();
    c.codec.n_motion = j.at("n_motion").get<int>();
    c.codec.r_xy = j.at("r_xy").get<double>();
    c.codec.r_theta = j.at("r_theta").get<double>();
    c.codec.with_heading = j.at("with_heading").get<bool>();
    c.motion_branch = j.at("motion_branch").get<bool>();
    const auto mode = j.at("target_mode").get<std::string>();
    if (mode == "fourier") {
      c.target_mode = TargetMode::kFourier;
    } else if (mode == "bev_square") {
      c.target_mode = TargetMode::kBevSquare;
    } else {
      throw ConfigError("unknown target_mode " + mode);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

void set_target(ModelInput& in, const Pose2D& target, const ModelConfig& cfg) {
  const int p = cfg.bev_patch;
  const int hw = cfg.feat_hw;
  const int off = cfg.crop();
  const int pp = p * p;
  in.target_patches.clear();
  in.target_enc.clear();
  if (cfg.target_mode == TargetMode::kBevSquare) {
    const OrientedBox square{target, 0.5, 0.5};
    in.target_patches.assign(static_cast<std::size_t>(hw * hw * pp), 0.0f);
    for (int pi = 0; pi < hw; ++pi) {
      for (int pj = 0; pj < hw; ++pj) {
        float* dst = in.target_patches.data() + static_cast<std::size_t>((pi * hw + pj) * pp);
        for (int a = 0; a < p; ++a) {
          for (int b = 0; b < p; ++b) {
            const double x = BevOccupancy::cell_center(off + pi * p + a);
            const double y = BevOccupancy::cell_center(off + pj * p + b);
            dst[a * p + b] = obb_contains(square, x, y) ? 1.0f : 0.0f;
          }
        }
      }
    }
  } else {
    const auto enc = encode_target(target, cfg.c_max, cfg.fourier_L);
    in.target_enc.assign(enc.values.begin(), enc.values.end());
  }
}

ModelInput make_input(const BevOccupancy& bev, const Pose2D& target, const ModelConfig& cfg) {
  const int p = cfg.bev_patch;
  const int hw = cfg.feat_hw;
  const int off = cfg.crop();
  const int pp = p * p;
  ModelInput in;
  in.patches.assign(static_cast<std::size_t>(hw * hw * pp), 0.0f);
  for (int pi = 0; pi < hw; ++pi) {
    for (int pj = 0; pj < hw; ++pj) {
      float* dst = in.patches.data() + static_cast<std::size_t>((pi * hw + pj) * pp);
      for (int a = 0; a < p; ++a) {
        for (int b = 0; b < p; ++b) {
          dst[a * p + b] = bev.at(off + pi * p + a, off + pj * p + b) ? 1.0f : 0.0f;
        }
      }
    }
  }
  set_target(in, target, cfg);
  return in;
}

// --- parameters -----------------------------------------------------------

PlannerModel::Linear PlannerModel::make_linear(const std::string& name, int in, int out,
                                               bool bias) {
  const double bound = std::sqrt(6.0 / (in + out));
  std::vector<float> w(static_cast<std::size_t>(in) * out);
  for (auto& v : w) v = static_cast<float>(init_rng_.uniform(-bound, bound));
  Linear l;
  l.w = store_.add(name + ".w", {in, out}, std::move(w));
  if (bias) l.b = store_.add(name + ".b", {out}, std::vector<float>(out, 0.0f));
  return l;
}

PlannerModel::Norm PlannerModel::make_norm(const std::string& name, int dim) {
  return {store_.add(name + ".g", {dim}, std::vector<float>(dim, 1.0f)),
          store_.add(name + ".b", {dim}, std::vector<float>(dim, 0.0f))};
}

PlannerModel::Mha PlannerModel::make_mha(const std::string& name) {
  const int c = cfg_.channels;
  return {make_linear(name + ".q", c, c), make_linear(name + ".k", c, c),
          make_linear(name + ".v", c, c), make_linear(name + ".o", c, c)};
}

PlannerModel::Ffn PlannerModel::make_ffn(const std::string& name) {
  return {make_linear(name + ".up", cfg_.channels, cfg_.ffn_hidden),
          make_linear(name + ".down", cfg_.ffn_hidden, cfg_.channels)};
}

PlannerModel::DecoderLayer PlannerModel::make_layer(const std::string& name) {
  DecoderLayer l;
  l.n1 = make_norm(name + ".n1", cfg_.channels);
  l.self = make_mha(name + ".self");
  l.n2 = make_norm(name + ".n2", cfg_.channels);
  l.cross = make_mha(name + ".cross");
  l.n3 = make_norm(name + ".n3", cfg_.channels);
  l.ffn = make_ffn(name + ".ffn");
  return l;
}

Tf PlannerModel::make_embedding(const std::string& name, int rows, int cols) {
  std::vector<float> w(static_cast<std::size_t>(rows) * cols);
  for (auto& v : w) v = static_cast<float>(init_rng_.uniform(-0.02, 0.02));
  return store_.add(name, {rows, cols}, std::move(w));
}

PlannerModel::PlannerModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), init_rng_(derive_seed(seed, {0x1417})) {
  cfg_.validate();
  const int c = cfg_.channels;
  const int pp = cfg_.bev_patch * cfg_.bev_patch;
  const int n = cfg_.tokens();
  patch_ = make_linear("bev.patch", pp, c);
  if (cfg_.target_mode == TargetMode::kBevSquare) {
    target_patch_w_ = make_linear("bev.target_patch", pp, c, false).w;
  } else {
    tgt1_ = make_linear("target.fc1", cfg_.target_dim(), c);
    tgt2_ = make_linear("target.fc2", c, c);
  }
  bev_pos_ = make_embedding("bev.pos", n, c);
  fusion_queries_ = make_embedding("fusion.queries", n, c);
  fusion_nq_ = make_norm("fusion.nq", c);
  fusion_cross_ = make_mha("fusion.cross");
  fusion_n2_ = make_norm("fusion.n2", c);
  fusion_ffn_ = make_ffn("fusion.ffn");
  fusion_out_ = make_norm("fusion.out", c);

  const Vocab vocab = cfg_.codec.traj_vocab();
  tok_emb_ = make_embedding("traj.tok", vocab.size(), c);
  tok_pos_ = make_embedding("traj.pos", cfg_.codec.traj_length(), c);
  {
    // Value tokens also carry fixed sinusoids of their bin center so that
    // neighbouring bins start out similar; special tokens get zeros.
    const int f = 2 * cfg_.value_freqs + 1;
    const int v = vocab.size();
    std::vector<float> feat(static_cast<std::size_t>(v) * f, 0.0f);
    std::vector<float> feat_t(feat.size(), 0.0f);
    for (int t = 0; t < vocab.n_values; ++t) {
      const double u = deserialize_token(t, 1.0, vocab.n_values);
      std::vector<double> row{u};
      for (int k = 0; k < cfg_.value_freqs; ++k) {
        const double w = 0.5 * kPi * std::ldexp(1.0, k);
        row.push_back(std::sin(w * u));
        row.push_back(std::cos(w * u));
      }
      for (int i = 0; i < f; ++i) {
        feat[static_cast<std::size_t>(t) * f + i] = static_cast<float>(row[i]);
        feat_t[static_cast<std::size_t>(i) * v + t] = static_cast<float>(row[i]);
      }
    }
    value_feat_ = Tf::from({v, f}, std::move(feat));
    value_feat_t_ = Tf::from({f, v}, std::move(feat_t));
    tok_value_ = make_linear("traj.tok_value", f, c, false).w;
    head_value_ = make_linear("traj.head_value", c, f, false).w;
  }
  for (int i = 0; i < cfg_.traj_layers; ++i) {
    traj_layers_.push_back(make_layer("traj.layer" + std::to_string(i)));
  }
  traj_out_ = make_norm("traj.out", c);
  {
    std::vector<float> w(static_cast<std::size_t>(c) * vocab.size());
    for (auto& v : w) v = static_cast<float>(init_rng_.uniform(-0.02, 0.02));
    traj_head_.w = store_.add("traj.head.w", {c, vocab.size()}, std::move(w));
    traj_head_.b = store_.add("traj.head.b", {vocab.size()},
                              std::vector<float>(static_cast<std::size_t>(vocab.size()), 0.0f));
  }

  if (cfg_.motion_branch) {
    motion_queries_ = make_embedding("motion.queries", cfg_.codec.horizon, c);
    motion_n1_ = make_norm("motion.n1", c);
    motion_stage1_ = make_mha("motion.stage1");
    motion_n2_ = make_norm("motion.n2", c);
    motion_ffn1_ = make_ffn("motion.ffn1");
    for (int i = 0; i < cfg_.motion_layers; ++i) {
      motion_layers_.push_back(make_layer("motion.layer" + std::to_string(i)));
    }
    motion_out_ = make_norm("motion.out", c);
    std::vector<float> w(static_cast<std::size_t>(c) * 2);
    for (auto& v : w) v = static_cast<float>(init_rng_.uniform(-0.02, 0.02));
    motion_head_.w = store_.add("motion.head.w", {c, 2}, std::move(w));
    motion_head_.b = store_.add("motion.head.b", {2}, {0.0f, 0.0f});
  }
}

// --- building blocks ------------------------------------------------------

Tf PlannerModel::linear(const Tf& x, const Linear& l) const {
  Tf y = ad::matmul(x, l.w);
  return l.b.defined() ? ad::add_row(y, l.b) : y;
}

Tf PlannerModel::norm(const Tf& x, const Norm& n) const { return ad::layer_norm(x, n.g, n.b); }

Tf PlannerModel::mha(const Tf& xq, const Tf& xkv, const Mha& m, int heads, ad::AttentionMask mask,
                     std::vector<float>* weights) const {
  const Tf a = ad::attention(linear(xq, m.q), linear(xkv, m.k), linear(xkv, m.v), heads, mask,
                             weights);
  return linear(a, m.o);
}

Tf PlannerModel::embed_tokens(std::span<const int> ids) const {
  return ad::add(ad::embedding(tok_emb_, ids),
                 ad::matmul(ad::embedding(value_feat_, ids), tok_value_));
}

Tf PlannerModel::token_logits(const Tf& hidden) const {
  return ad::add(linear(hidden, traj_head_),
                 ad::matmul(ad::matmul(hidden, head_value_), value_feat_t_));
}

Tf PlannerModel::ffn(const Tf& x, const Ffn& f) const {
  return linear(ad::gelu(linear(x, f.up)), f.down);
}

Tf PlannerModel::layer(const Tf& x, const Tf& memory, const DecoderLayer& l, int heads,
                       bool causal) const {
  const Tf a = norm(x, l.n1);
  Tf h = ad::add(x, mha(a, a, l.self, heads, {causal, 0}));
  h = ad::add(h, mha(norm(h, l.n2), memory, l.cross, heads));
  return ad::add(h, ffn(norm(h, l.n3), l.ffn));
}

// --- forward --------------------------------------------------------------

Tf PlannerModel::bev_encode(const ModelInput& in, bool with_position) const {
  const int n = cfg_.tokens();
  const int pp = cfg_.bev_patch * cfg_.bev_patch;
  if (in.patches.size() != static_cast<std::size_t>(n * pp)) {
    throw ad::ShapeError("bev_encode: patch buffer has wrong size");
  }
  Tf f = linear(Tf::from({n, pp}, in.patches), patch_);
  if (cfg_.target_mode == TargetMode::kBevSquare) {
    if (in.target_patches.size() != in.patches.size()) {
      throw ad::ShapeError("bev_encode: missing target channel");
    }
    f = ad::add(f, ad::matmul(Tf::from({n, pp}, in.target_patches), target_patch_w_));
  }
  return with_position ? ad::add(f, bev_pos_) : f;
}

Tf PlannerModel::target_global(const ModelInput& in) const {
  const int c = cfg_.channels;
  if (cfg_.target_mode == TargetMode::kBevSquare) return Tf::zeros({1, c});
  if (in.target_enc.size() != static_cast<std::size_t>(cfg_.target_dim())) {
    throw ad::ShapeError("target_global: encoding has wrong size");
  }
  const Tf t = Tf::from({1, cfg_.target_dim()}, in.target_enc);
  return linear(ad::gelu(linear(t, tgt1_)), tgt2_);
}

Tf PlannerModel::fuse(const Tf& t_global, const Tf& f_bev, std::vector<float>* attention) const {
  const Tf q = ad::add_row(fusion_queries_, ad::reshape(t_global, {cfg_.channels}));
  Tf x = ad::add(q, mha(norm(q, fusion_nq_), f_bev, fusion_cross_, cfg_.fusion_heads, {},
                        attention));
  x = ad::add(x, ffn(norm(x, fusion_n2_), fusion_ffn_));
  return norm(x, fusion_out_);
}

Encoded PlannerModel::encode(const ModelInput& in) const {
  Encoded e;
  e.bev = bev_encode(in);
  e.t_global = target_global(in);
  e.enhanced = fuse(e.t_global, e.bev, &e.fusion_attention);
  return e;
}

TrajectoryPass PlannerModel::decode_teacher(const Tf& enhanced, std::span<const int> inputs) const {
  const int t = static_cast<int>(inputs.size());
  if (t <= 0 || t > cfg_.codec.traj_length()) {
    throw ad::ShapeError("decode_teacher: bad input length " + std::to_string(t));
  }
  Tf h = ad::add(embed_tokens(inputs), ad::slice_rows(tok_pos_, 0, t));
  for (const auto& l : traj_layers_) h = layer(h, enhanced, l, cfg_.traj_heads, true);
  TrajectoryPass out;
  out.hidden = norm(h, traj_out_);
  out.logits = token_logits(out.hidden);
  return out;
}

TokenSequence PlannerModel::decode_greedy(const Tf& enhanced, Tf* hidden) const {
  ad::NoGrad guard;
  const Vocab vocab = cfg_.codec.traj_vocab();
  const int n_values = cfg_.codec.horizon * cfg_.codec.tokens_per_step();
  const int heads = cfg_.traj_heads;

  struct Cache {
    Tf k, v, mem_k, mem_v;
  };
  std::vector<Cache> cache(traj_layers_.size());
  for (std::size_t i = 0; i < traj_layers_.size(); ++i) {
    cache[i].mem_k = linear(enhanced, traj_layers_[i].cross.k);
    cache[i].mem_v = linear(enhanced, traj_layers_[i].cross.v);
  }

  TokenSequence seq;
  seq.vocab = vocab;
  seq.tokens.push_back(vocab.bos());
  std::vector<Tf> rows;
  for (int step = 0; step <= n_values; ++step) {
    const int tok = seq.tokens.back();
    Tf x = ad::add(embed_tokens(std::span<const int>(&tok, 1)),
                   ad::slice_rows(tok_pos_, step, step + 1));
    for (std::size_t li = 0; li < traj_layers_.size(); ++li) {
      const auto& l = traj_layers_[li];
      auto& c = cache[li];
      const Tf a = norm(x, l.n1);
      const Tf k = linear(a, l.self.k);
      const Tf v = linear(a, l.self.v);
      c.k = c.k.defined() ? ad::concat<float>({c.k, k}, 0) : k;
      c.v = c.v.defined() ? ad::concat<float>({c.v, v}, 0) : v;
      x = ad::add(x, linear(ad::attention(linear(a, l.self.q), c.k, c.v, heads), l.self.o));
      const Tf b = norm(x, l.n2);
      x = ad::add(x, linear(ad::attention(linear(b, l.cross.q), c.mem_k, c.mem_v, heads),
                            l.cross.o));
      x = ad::add(x, ffn(norm(x, l.n3), l.ffn));
    }
    const Tf h = norm(x, traj_out_);
    rows.push_back(h);
    if (step == n_values) {
      seq.tokens.push_back(vocab.eos());
      break;
    }
    const Tf logits = token_logits(h);
    const auto d = logits.data();
    const auto best = std::max_element(d.begin(), d.begin() + vocab.n_values);
    seq.tokens.push_back(static_cast<int>(best - d.begin()));
  }
  if (hidden != nullptr) *hidden = ad::concat(rows, 0);
  return seq;
}

Tf PlannerModel::motion_decode(const Tf& traj_hidden, const Tf& enhanced) const {
  if (!cfg_.motion_branch) throw ConfigError("motion branch is disabled");
  const int heads = cfg_.motion_heads;
  Tf z = ad::add(motion_queries_,
                 mha(norm(motion_queries_, motion_n1_), traj_hidden, motion_stage1_, heads));
  z = ad::add(z, ffn(norm(z, motion_n2_), motion_ffn1_));
  for (const auto& l : motion_layers_) z = layer(z, enhanced, l, heads, false);
  return linear(norm(z, motion_out_), motion_head_);
}

PlannerOutput PlannerModel::predict(const ModelInput& in) const {
  ad::NoGrad guard;
  const Encoded e = encode(in);
  PlannerOutput out;
  out.fusion_attention = e.fusion_attention;
  Tf hidden;
  out.traj_tokens = decode_greedy(e.enhanced, &hidden);
  out.waypoints = decode_waypoints(out.traj_tokens, cfg_.codec);
  if (cfg_.motion_branch) {
    const Tf probs = ad::softmax(motion_decode(hidden, e.enhanced), 1);
    const auto d = probs.data();
    for (int q = 0; q < cfg_.codec.horizon; ++q) {
      out.motion_probs.push_back({d[2 * q], d[2 * q + 1]});
    }
  }
  return out;
}

std::string PlannerModel::checkpoint_bytes(const std::string& extra_metadata) const {
  nlohmann::ordered_json meta;
  meta["model"] = nlohmann::json::parse(cfg_.to_json());
  meta["extra"] = nlohmann::json::parse(extra_metadata);
  return ad::encode_checkpoint(store_, meta.dump());
}

PlannerModel PlannerModel::from_checkpoint(const ad::Checkpoint& ck) {
  ModelConfig cfg;
  try {
    const auto meta = nlohmann::json::parse(ck.metadata);
    cfg = ModelConfig::from_json(meta.at("model").dump());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint metadata: ") + e.what());
  }
  PlannerModel m(cfg, 0);
  if (ck.tensors.size() != m.store_.params().size()) {
    throw DataError("checkpoint tensor count does not match the model");
  }
  m.store_.load_values(ck.tensors);
  return m;
}

}  // namespace parkbench
