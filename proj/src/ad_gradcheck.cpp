#include "parkbench/ad/gradcheck.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "parkbench/ad/ops.hpp"
#include "parkbench/rng.hpp"

namespace parkbench::ad {

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-12);
}

double check_gradients(const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                       std::vector<Tensor<double>>& inputs, double eps) {
  for (auto& t : inputs) t.zero_grad();
  f(inputs).backward();
  double worst = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    if (analytic.empty()) analytic.assign(t.numel(), 0.0);
    std::vector<double> numeric(t.numel());
    NoGrad ng;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double keep = t.data()[i];
      t.data()[i] = keep + eps;
      const double up = f(inputs).item();
      t.data()[i] = keep - eps;
      const double down = f(inputs).item();
      t.data()[i] = keep;
      numeric[i] = (up - down) / (2.0 * eps);
    }
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

namespace {

using Inputs = std::vector<Tensor<double>>;
using Fn = std::function<Tensor<double>(const Inputs&)>;

struct Case {
  Inputs inputs;
  Fn f;
};

// Values in [lo, hi] with |x| >= gap, so kinks of relu/abs stay out of reach.
Tensor<double> rand_t(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0,
                      double gap = 0.0, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    do {
      x = rng.uniform(lo, hi);
    } while (std::abs(x) < gap);
  }
  return Tensor<double>::from(shape, std::move(v), grad);
}

// Reduces a non-scalar output to a scalar with fixed random weights.
Fn project(Fn op, Tensor<double> weights) {
  return [op = std::move(op), weights](const Inputs& in) { return sum(mul(op(in), weights)); };
}

Case make_case(const std::string& name, Rng& rng) {
  auto weighted = [&rng](Inputs in, const Shape& out_shape, Fn op) {
    return Case{std::move(in), project(std::move(op), rand_t(rng, out_shape, -1, 1, 0, false))};
  };
  if (name == "matmul") {
    return weighted({rand_t(rng, {3, 4}), rand_t(rng, {4, 5})}, {3, 5},
                    [](const Inputs& x) { return matmul(x[0], x[1]); });
  }
  if (name == "add") {
    return weighted({rand_t(rng, {3, 4}), rand_t(rng, {3, 4})}, {3, 4},
                    [](const Inputs& x) { return add(x[0], x[1]); });
  }
  if (name == "add_row") {
    return weighted({rand_t(rng, {3, 4}), rand_t(rng, {4})}, {3, 4},
                    [](const Inputs& x) { return add_row(x[0], x[1]); });
  }
  if (name == "sub") {
    return weighted({rand_t(rng, {3, 4}), rand_t(rng, {3, 4})}, {3, 4},
                    [](const Inputs& x) { return sub(x[0], x[1]); });
  }
  if (name == "mul") {
    return weighted({rand_t(rng, {3, 4}), rand_t(rng, {3, 4})}, {3, 4},
                    [](const Inputs& x) { return mul(x[0], x[1]); });
  }
  if (name == "scale") {
    return weighted({rand_t(rng, {2, 5})}, {2, 5},
                    [](const Inputs& x) { return scale(x[0], -1.7); });
  }
  if (name == "concat_rows") {
    return weighted({rand_t(rng, {2, 3}), rand_t(rng, {4, 3})}, {6, 3},
                    [](const Inputs& x) { return concat(x, 0); });
  }
  if (name == "concat_cols") {
    return weighted({rand_t(rng, {3, 2}), rand_t(rng, {3, 4})}, {3, 6},
                    [](const Inputs& x) { return concat(x, 1); });
  }
  if (name == "slice_rows") {
    return weighted({rand_t(rng, {5, 3})}, {2, 3},
                    [](const Inputs& x) { return slice_rows(x[0], 1, 3); });
  }
  if (name == "slice_cols") {
    return weighted({rand_t(rng, {3, 6})}, {3, 3},
                    [](const Inputs& x) { return slice_cols(x[0], 2, 5); });
  }
  if (name == "embedding") {
    return weighted({rand_t(rng, {6, 4})}, {5, 4}, [](const Inputs& x) {
      const std::vector<int> ids{3, 0, 3, 5, 1};
      return embedding(x[0], ids);
    });
  }
  if (name == "reshape") {
    return weighted({rand_t(rng, {3, 4})}, {2, 6},
                    [](const Inputs& x) { return reshape(x[0], {2, 6}); });
  }
  if (name == "softmax_rows") {
    return weighted({rand_t(rng, {3, 5}, -2, 2)}, {3, 5},
                    [](const Inputs& x) { return softmax(x[0], 1); });
  }
  if (name == "softmax_cols") {
    return weighted({rand_t(rng, {4, 3}, -2, 2)}, {4, 3},
                    [](const Inputs& x) { return softmax(x[0], 0); });
  }
  if (name == "layer_norm") {
    return weighted({rand_t(rng, {3, 6}), rand_t(rng, {6}, 0.5, 1.5), rand_t(rng, {6})}, {3, 6},
                    [](const Inputs& x) { return layer_norm(x[0], x[1], x[2]); });
  }
  if (name == "gelu") {
    return weighted({rand_t(rng, {3, 4}, -3, 3)}, {3, 4},
                    [](const Inputs& x) { return gelu(x[0]); });
  }
  if (name == "relu") {
    return weighted({rand_t(rng, {3, 4}, -1, 1, 0.05)}, {3, 4},
                    [](const Inputs& x) { return relu(x[0]); });
  }
  if (name == "wrap_angle") {
    return weighted({rand_t(rng, {2, 4}, -3, 3)}, {2, 4},
                    [](const Inputs& x) { return wrap_angle(x[0]); });
  }
  if (name == "sum") {
    return weighted({rand_t(rng, {3, 4})}, {1}, [](const Inputs& x) { return sum(x[0]); });
  }
  if (name == "mean") {
    return weighted({rand_t(rng, {3, 4})}, {1}, [](const Inputs& x) { return mean(x[0]); });
  }
  if (name == "attention") {
    return weighted({rand_t(rng, {3, 8}), rand_t(rng, {5, 8}), rand_t(rng, {5, 8})}, {3, 8},
                    [](const Inputs& x) { return attention(x[0], x[1], x[2], 2); });
  }
  if (name == "attention_causal") {
    return weighted({rand_t(rng, {4, 8}), rand_t(rng, {4, 8}), rand_t(rng, {4, 8})}, {4, 8},
                    [](const Inputs& x) {
                      return attention(x[0], x[1], x[2], 4, AttentionMask{true, 0});
                    });
  }
  if (name == "mse") {
    return {{rand_t(rng, {4, 3}), rand_t(rng, {4, 3})},
            [](const Inputs& x) { return mse(x[0], x[1]); }};
  }
  if (name == "mse_masked") {
    return {{rand_t(rng, {2, 3}), rand_t(rng, {2, 3})}, [](const Inputs& x) {
              const std::vector<double> m{1, 0, 1, 1, 0, 0.5};
              return mse(x[0], x[1], std::span<const double>(m));
            }};
  }
  if (name == "cross_entropy") {
    return {{rand_t(rng, {4, 6}, -2, 2)}, [](const Inputs& x) {
              const std::vector<int> labels{2, 5, -1, 0};
              return cross_entropy(x[0], labels, -1);
            }};
  }
  if (name == "masked_l1") {
    return {{rand_t(rng, {3, 4}, -1, 1, 0.05)}, [](const Inputs& x) {
              const std::vector<double> m{1, 1, 0, 1, 0, 1, 1, 1, 0, 0, 1, 1};
              return masked_l1(x[0], std::span<const double>(m));
            }};
  }
  if (name == "soft_argmax") {
    auto centers = rand_t(rng, {5, 1}, -1, 1, 0, false);
    return weighted({rand_t(rng, {3, 7}, -2, 2)}, {3, 1},
                    [centers](const Inputs& x) { return soft_argmax(x[0], centers); });
  }
  throw ConfigError("unknown gradcheck op " + name);
}

}  // namespace

std::vector<std::string> gradcheck_registry() {
  return {"matmul",       "add",          "add_row",      "sub",           "mul",
          "scale",        "concat_rows",  "concat_cols",  "slice_rows",    "slice_cols",
          "embedding",    "reshape",      "softmax_rows", "softmax_cols",  "layer_norm",
          "gelu",         "relu",         "wrap_angle",   "sum",           "mean",
          "attention",    "attention_causal", "mse",      "mse_masked",    "cross_entropy",
          "masked_l1",    "soft_argmax"};
}

GradCheckResult run_gradcheck(const std::string& name, std::uint64_t seed, double tolerance) {
  std::uint64_t tag = 0xcbf29ce484222325ULL;
  for (unsigned char ch : name) tag = (tag ^ ch) * 0x100000001b3ULL;
  Rng rng(derive_seed(seed, {tag}));
  Case c = make_case(name, rng);
  GradCheckResult r;
  r.name = name;
  r.max_rel_error = check_gradients(c.f, c.inputs);
  r.passed = r.max_rel_error < tolerance;
  return r;
}

}  // namespace parkbench::ad
