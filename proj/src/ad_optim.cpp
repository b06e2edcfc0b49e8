#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include "parkbench/ad/optim.hpp"

namespace parkbench::ad {

Tensor<float>& ParameterStore::add(const std::string& name, const Shape& shape,
                                   std::vector<float> init) {
  if (params_.count(name)) throw ConfigError("duplicate parameter " + name);
  auto t = Tensor<float>::from(shape, std::move(init), true);
  moments_[name] = {std::vector<float>(t.numel(), 0.0f), std::vector<float>(t.numel(), 0.0f)};
  return params_.emplace(name, std::move(t)).first->second;
}

Tensor<float>& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

const Tensor<float>& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

double ParameterStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& [_, t] : params_) {
    for (float g : t.grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

ParameterStore::StepReport ParameterStore::adam_step(double lr, double clip,
                                                     const AdamConfig& cfg) {
  StepReport rep;
  rep.grad_norm = grad_norm();
  if (!std::isfinite(rep.grad_norm)) {
    rep.aborted = true;
    return rep;
  }
  double factor = 1.0;
  if (clip > 0.0 && rep.grad_norm > clip) {
    factor = clip / rep.grad_norm;
    rep.clipped = true;
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
  for (auto& [name, t] : params_) {
    auto& mom = moments_.at(name);
    auto val = t.data();
    auto grad = t.grad();
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double g = static_cast<double>(grad[i]) * factor;
      const double m = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g * g;
      mom.m[i] = static_cast<float>(m);
      mom.v[i] = static_cast<float>(v);
      const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
      val[i] = static_cast<float>(val[i] - update);
    }
  }
  return rep;
}

void ParameterStore::load_values(
    const std::map<std::string, std::pair<Shape, std::vector<float>>>& values) {
  for (auto& [name, t] : params_) {
    auto it = values.find(name);
    if (it == values.end()) throw DataError("checkpoint lacks parameter " + name);
    if (it->second.first != t.shape()) {
      throw ShapeError("checkpoint " + name, t.shape(), it->second.first);
    }
    std::copy(it->second.second.begin(), it->second.second.end(), t.data().begin());
    auto& mom = moments_.at(name);
    std::fill(mom.m.begin(), mom.m.end(), 0.0f);
    std::fill(mom.v.begin(), mom.v.end(), 0.0f);
  }
  if (values.size() != params_.size()) throw DataError("checkpoint has unexpected parameters");
  step_ = 0;
}

double lr_schedule(std::int64_t step, std::int64_t total, std::int64_t warmup, double lr_max,
                   double lr_min) {
  if (step < warmup) {
    return lr_max * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  const double span = static_cast<double>(std::max<std::int64_t>(1, total - 1 - warmup));
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / span);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void put(std::string& out, U v) {
  static_assert(sizeof(U) == 4);
  std::uint32_t bits = 0;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f = 0;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ParameterStore& store, const std::string& metadata) {
  std::string out = "PKBN";
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint32_t>(store.params().size()));
  for (const auto& [name, t] : store.params()) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put(out, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) put(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) put(out, v);
  }
  put(out, static_cast<std::uint32_t>(metadata.size()));
  out += metadata;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(4) != "PKBN") throw DataError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
    std::vector<float> data(shape_numel(shape));
    for (auto& v : data) v = r.f32();
    ck.tensors[name] = {shape, std::move(data)};
  }
  ck.metadata = r.str(r.u32());
  if (!r.done()) throw DataError("trailing bytes after checkpoint");
  return ck;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace parkbench::ad
