#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "parkbench/ad/tensor.hpp"

namespace parkbench::ad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named trainable parameters with their Adam moments.
class ParameterStore {
 public:
  /// Registers a new parameter; throws ConfigError on a duplicate name.
  Tensor<float>& add(const std::string& name, const Shape& shape, std::vector<float> init);
  [[nodiscard]] Tensor<float>& get(const std::string& name);
  [[nodiscard]] const Tensor<float>& get(const std::string& name) const;
  [[nodiscard]] bool contains(const std::string& name) const { return params_.count(name) > 0; }

  [[nodiscard]] const std::map<std::string, Tensor<float>>& params() const { return params_; }
  [[nodiscard]] std::size_t parameter_count() const;

  void zero_grad();
  [[nodiscard]] double grad_norm() const;

  [[nodiscard]] std::int64_t step_count() const { return step_; }

  struct StepReport {
    double grad_norm = 0.0;  ///< before clipping
    bool clipped = false;
    bool aborted = false;  ///< a gradient was non-finite; nothing changed
  };

  /// Clips the global gradient norm to `clip` (if > 0), then applies one Adam
  /// update with bias correction.
  StepReport adam_step(double lr, double clip, const AdamConfig& cfg = {});

  /// Replaces values (shapes must match); moments are reset.
  void load_values(const std::map<std::string, std::pair<Shape, std::vector<float>>>& values);

 private:
  struct Moments {
    std::vector<float> m;
    std::vector<float> v;
  };
  std::map<std::string, Tensor<float>> params_;
  std::map<std::string, Moments> moments_;
  std::int64_t step_ = 0;
};

/// Linear warmup over `warmup` steps, then cosine from lr_max to lr_min,
/// reaching lr_min exactly on step total - 1.
double lr_schedule(std::int64_t step, std::int64_t total, std::int64_t warmup, double lr_max = 2e-4,
                   double lr_min = 1e-6);

struct Checkpoint {
  std::map<std::string, std::pair<Shape, std::vector<float>>> tensors;
  std::string metadata;  ///< JSON text
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian: "PKBN", u32 version, u32 count, then per tensor u32 name
/// length, name bytes, u32 rank, u32 extents, f32 values; finally u32 length
/// and the metadata text.
std::string encode_checkpoint(const ParameterStore& store, const std::string& metadata);
Checkpoint decode_checkpoint(const std::string& bytes);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace parkbench::ad
