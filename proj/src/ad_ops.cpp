#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "parkbench/ad/ops.hpp"

namespace parkbench::ad {
namespace {

// Row-major C = alpha * op(A) op(B) + beta * C.
void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
T* grad_of(const std::shared_ptr<Node<T>>& p) {
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

template <typename T>
T corruption(const char* op) {
  return gradient_corrupted(op) ? T(1.01) : T(1);
}

template <typename T>
void require_rank(const Tensor<T>& a, int r, const char* op) {
  if (a.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     shape_str(a.shape()));
  }
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

// Elementwise unary op with derivative f'(x, y).
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& a, const char* name, F f, D df) {
  std::vector<T> y(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
  return make_result<T>(a.shape(), std::move(y), {&a}, [df, name](Node<T>& out) {
    T* ga = grad_of(out.parents[0]);
    if (!ga) return;
    const T c = corruption<T>(name);
    const auto& x = out.parents[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += c * out.grad[i] * df(x[i], out.value[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) throw ShapeError("matmul", a.shape(), b.shape());
  const int m = a.dim(0);
  const int k = a.dim(1);
  const int n = b.dim(1);
  std::vector<T> c(static_cast<std::size_t>(m) * n, T(0));
  if (m > 0 && n > 0 && k > 0) {
    gemm(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n, T(0), c.data(), n);
  }
  return make_result<T>({m, n}, std::move(c), {&a, &b}, [m, k, n](Node<T>& out) {
    const T s = corruption<T>("matmul");
    const auto& av = out.parents[0]->value;
    const auto& bv = out.parents[1]->value;
    if (T* ga = grad_of(out.parents[0])) {
      gemm(false, true, m, k, n, s, out.grad.data(), n, bv.data(), n, T(1), ga, k);
    }
    if (T* gb = grad_of(out.parents[1])) {
      gemm(true, false, k, n, m, s, av.data(), k, out.grad.data(), n, T(1), gb, n);
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "add");
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(y), {&a, &b}, [](Node<T>& out) {
    const T s = corruption<T>("add");
    for (int p = 0; p < 2; ++p) {
      if (T* g = grad_of(out.parents[p])) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += s * out.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "add_row");
  if (b.numel() != static_cast<std::size_t>(a.dim(1))) throw ShapeError("add_row", a.shape(), b.shape());
  const int m = a.dim(0);
  const int n = a.dim(1);
  std::vector<T> y(a.numel());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) y[i * n + j] = a.data()[i * n + j] + b.data()[j];
  }
  return make_result<T>(a.shape(), std::move(y), {&a, &b}, [m, n](Node<T>& out) {
    const T s = corruption<T>("add_row");
    if (T* ga = grad_of(out.parents[0])) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) ga[i] += s * out.grad[i];
    }
    if (T* gb = grad_of(out.parents[1])) {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) gb[j] += s * out.grad[i * n + j];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "sub");
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
  return make_result<T>(a.shape(), std::move(y), {&a, &b}, [](Node<T>& out) {
    const T s = corruption<T>("sub");
    if (T* g = grad_of(out.parents[0])) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += s * out.grad[i];
    }
    if (T* g = grad_of(out.parents[1])) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] -= s * out.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "mul");
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(y), {&a, &b}, [](Node<T>& out) {
    const T s = corruption<T>("mul");
    const auto& av = out.parents[0]->value;
    const auto& bv = out.parents[1]->value;
    if (T* g = grad_of(out.parents[0])) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += s * out.grad[i] * bv[i];
    }
    if (T* g = grad_of(out.parents[1])) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += s * out.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary<T>(
      a, "scale", [factor](T x) { return factor * x; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank(p, 2, "concat");
  const int other = 1 - axis;
  int total = 0;
  for (const auto& p : parts) {
    if (p.dim(other) != parts[0].dim(other)) throw ShapeError("concat", parts[0].shape(), p.shape());
    total += p.dim(axis);
  }
  const int rows = axis == 0 ? total : parts[0].dim(0);
  const int cols = axis == 1 ? total : parts[0].dim(1);
  std::vector<T> y(static_cast<std::size_t>(rows) * cols);
  std::vector<int> offsets;
  int off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const int pr = p.dim(0);
    const int pc = p.dim(1);
    for (int i = 0; i < pr; ++i) {
      for (int j = 0; j < pc; ++j) {
        const int r = axis == 0 ? off + i : i;
        const int c = axis == 1 ? off + j : j;
        y[static_cast<std::size_t>(r) * cols + c] = p.data()[i * pc + j];
      }
    }
    off += p.dim(axis);
  }
  return make_result<T>({rows, cols}, std::move(y), parts, [axis, cols, offsets](Node<T>& out) {
    const T s = corruption<T>("concat");
    for (std::size_t k = 0; k < out.parents.size(); ++k) {
      T* g = grad_of(out.parents[k]);
      if (!g) continue;
      const int pr = out.parents[k]->shape[0];
      const int pc = out.parents[k]->shape[1];
      for (int i = 0; i < pr; ++i) {
        for (int j = 0; j < pc; ++j) {
          const int r = axis == 0 ? offsets[k] + i : i;
          const int c = axis == 1 ? offsets[k] + j : j;
          g[i * pc + j] += s * out.grad[static_cast<std::size_t>(r) * cols + c];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, int begin, int end) {
  require_rank(a, 2, "slice_rows");
  if (begin < 0 || end > a.dim(0) || begin > end) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of " + shape_str(a.shape()));
  }
  const int n = a.dim(1);
  std::vector<T> y(a.data().begin() + static_cast<std::ptrdiff_t>(begin) * n,
                   a.data().begin() + static_cast<std::ptrdiff_t>(end) * n);
  return make_result<T>({end - begin, n}, std::move(y), {&a}, [begin, n](Node<T>& out) {
    T* g = grad_of(out.parents[0]);
    if (!g) return;
    const T s = corruption<T>("slice_rows");
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
      g[static_cast<std::size_t>(begin) * n + i] += s * out.grad[i];
    }
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, int begin, int end) {
  require_rank(a, 2, "slice_cols");
  if (begin < 0 || end > a.dim(1) || begin > end) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of " + shape_str(a.shape()));
  }
  const int m = a.dim(0);
  const int n = a.dim(1);
  const int w = end - begin;
  std::vector<T> y(static_cast<std::size_t>(m) * w);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < w; ++j) y[i * w + j] = a.data()[i * n + begin + j];
  }
  return make_result<T>({m, w}, std::move(y), {&a}, [m, n, w, begin](Node<T>& out) {
    T* g = grad_of(out.parents[0]);
    if (!g) return;
    const T s = corruption<T>("slice_cols");
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < w; ++j) g[i * n + begin + j] += s * out.grad[i * w + j];
    }
  });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding");
  const int v = table.dim(0);
  const int d = table.dim(1);
  std::vector<int> idx(ids.begin(), ids.end());
  std::vector<T> y(idx.size() * static_cast<std::size_t>(d));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= v) {
      throw ShapeError("embedding: id " + std::to_string(idx[r]) + " outside table " +
                       shape_str(table.shape()));
    }
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(idx[r]) * d, d,
                y.begin() + static_cast<std::ptrdiff_t>(r) * d);
  }
  return make_result<T>({static_cast<int>(idx.size()), d}, std::move(y), {&table},
                        [idx, d](Node<T>& out) {
                          T* g = grad_of(out.parents[0]);
                          if (!g) return;
                          const T s = corruption<T>("embedding");
                          for (std::size_t r = 0; r < idx.size(); ++r) {
                            for (int j = 0; j < d; ++j) {
                              g[static_cast<std::size_t>(idx[r]) * d + j] +=
                                  s * out.grad[r * d + j];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) throw ShapeError("reshape", a.shape(), shape);
  std::vector<T> y(a.data().begin(), a.data().end());
  return make_result<T>(shape, std::move(y), {&a}, [](Node<T>& out) {
    T* g = grad_of(out.parents[0]);
    if (!g) return;
    const T s = corruption<T>("reshape");
    for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += s * out.grad[i];
  });
}

namespace {

// Softmax over `len` entries spaced `stride` apart, in place.
template <typename T>
void softmax_strided(T* x, int len, int stride) {
  T mx = -std::numeric_limits<T>::infinity();
  for (int i = 0; i < len; ++i) mx = std::max(mx, x[i * stride]);
  if (mx == -std::numeric_limits<T>::infinity()) {
    for (int i = 0; i < len; ++i) x[i * stride] = T(0);
    return;
  }
  T total = 0;
  for (int i = 0; i < len; ++i) {
    x[i * stride] = std::exp(x[i * stride] - mx);
    total += x[i * stride];
  }
  for (int i = 0; i < len; ++i) x[i * stride] /= total;
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  require_rank(a, 2, "softmax");
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  const int m = a.dim(0);
  const int n = a.dim(1);
  std::vector<T> y(a.data().begin(), a.data().end());
  const int lines = axis == 1 ? m : n;
  const int len = axis == 1 ? n : m;
  const int stride = axis == 1 ? 1 : n;
  auto base = [axis, n](int line) { return axis == 1 ? line * n : line; };
  for (int l = 0; l < lines; ++l) softmax_strided(y.data() + base(l), len, stride);
  return make_result<T>(a.shape(), std::move(y), {&a},
                        [lines, len, stride, base](Node<T>& out) {
                          T* g = grad_of(out.parents[0]);
                          if (!g) return;
                          const T s = corruption<T>("softmax");
                          for (int l = 0; l < lines; ++l) {
                            const int b = base(l);
                            T dot = 0;
                            for (int i = 0; i < len; ++i) {
                              dot += out.grad[b + i * stride] * out.value[b + i * stride];
                            }
                            for (int i = 0; i < len; ++i) {
                              const int k = b + i * stride;
                              g[k] += s * out.value[k] * (out.grad[k] - dot);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_rank(x, 2, "layer_norm");
  const int m = x.dim(0);
  const int n = x.dim(1);
  if (gamma.numel() != static_cast<std::size_t>(n)) throw ShapeError("layer_norm", x.shape(), gamma.shape());
  if (beta.numel() != static_cast<std::size_t>(n)) throw ShapeError("layer_norm", x.shape(), beta.shape());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(static_cast<std::size_t>(m));
  std::vector<T> y(x.numel());
  for (int i = 0; i < m; ++i) {
    const T* row = x.data().data() + static_cast<std::ptrdiff_t>(i) * n;
    T mu = 0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= n;
    T var = 0;
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= n;
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * is;
      y[i * n + j] = xhat[i * n + j] * gamma.data()[j] + beta.data()[j];
    }
  }
  return make_result<T>(
      x.shape(), std::move(y), {&x, &gamma, &beta},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& out) {
        const T s = corruption<T>("layer_norm");
        const auto& gv = out.parents[1]->value;
        T* gx = grad_of(out.parents[0]);
        T* gg = grad_of(out.parents[1]);
        T* gb = grad_of(out.parents[2]);
        std::vector<T> dxhat(static_cast<std::size_t>(n));
        for (int i = 0; i < m; ++i) {
          const T* dy = out.grad.data() + static_cast<std::ptrdiff_t>(i) * n;
          const T* xh = xhat.data() + static_cast<std::ptrdiff_t>(i) * n;
          T mean_d = 0;
          T mean_dx = 0;
          for (int j = 0; j < n; ++j) {
            dxhat[j] = dy[j] * gv[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xh[j];
            if (gg) gg[j] += s * dy[j] * xh[j];
            if (gb) gb[j] += s * dy[j];
          }
          mean_d /= n;
          mean_dx /= n;
          if (gx) {
            for (int j = 0; j < n; ++j) {
              gx[i * n + j] += s * inv_std[i] * (dxhat[j] - mean_d - xh[j] * mean_dx);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  constexpr T inv_sqrt2pi = T(0.39894228040143267794);
  return unary<T>(
      a, "gelu", [](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [](T x, T) {
        return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-T(0.5) * x * x);
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary<T>(
      a, "relu", [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> wrap_angle(const Tensor<T>& a) {
  constexpr T two_pi = T(2) * std::numbers::pi_v<T>;
  return unary<T>(
      a, "wrap_angle", [](T x) { return x - two_pi * std::round(x / two_pi); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  return make_result<T>({1}, {total}, {&a}, [](Node<T>& out) {
    T* g = grad_of(out.parents[0]);
    if (!g) return;
    const T s = corruption<T>("sum") * out.grad[0];
    for (std::size_t i = 0; i < out.parents[0]->value.size(); ++i) g[i] += s;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                    AttentionMask mask, std::vector<T>* weights) {
  require_rank(q, 2, "attention");
  require_rank(k, 2, "attention");
  require_rank(v, 2, "attention");
  if (k.shape() != v.shape()) throw ShapeError("attention k/v", k.shape(), v.shape());
  if (q.dim(1) != k.dim(1)) throw ShapeError("attention q/k", q.shape(), k.shape());
  const int tq = q.dim(0);
  const int tk = k.dim(0);
  const int c = q.dim(1);
  if (heads < 1 || c % heads != 0) {
    throw ShapeError("attention: " + std::to_string(c) + " channels not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const int dh = c / heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t plane = static_cast<std::size_t>(tq) * tk;
  std::vector<T> probs(plane * heads);
  std::vector<T> y(static_cast<std::size_t>(tq) * c, T(0));
  const T* qd = q.data().data();
  const T* kd = k.data().data();
  const T* vd = v.data().data();
  for (int h = 0; h < heads; ++h) {
    T* p = probs.data() + plane * h;
    gemm(false, true, tq, tk, dh, sc, qd + h * dh, c, kd + h * dh, c, T(0), p, tk);
    for (int i = 0; i < tq; ++i) {
      if (mask.causal) {
        for (int j = std::max(0, i + mask.offset + 1); j < tk; ++j) {
          p[static_cast<std::size_t>(i) * tk + j] = -std::numeric_limits<T>::infinity();
        }
      }
      softmax_strided(p + static_cast<std::size_t>(i) * tk, tk, 1);
    }
    gemm(false, false, tq, dh, tk, T(1), p, tk, vd + h * dh, c, T(0), y.data() + h * dh, c);
  }
  if (weights) *weights = probs;
  return make_result<T>(
      {tq, c}, std::move(y), {&q, &k, &v},
      [tq, tk, c, dh, heads, sc, plane, probs = std::move(probs)](Node<T>& out) {
        const T s = corruption<T>("attention");
        const auto& qv = out.parents[0]->value;
        const auto& kv = out.parents[1]->value;
        const auto& vv = out.parents[2]->value;
        T* gq = grad_of(out.parents[0]);
        T* gk = grad_of(out.parents[1]);
        T* gv = grad_of(out.parents[2]);
        std::vector<T> dp(plane);
        for (int h = 0; h < heads; ++h) {
          const T* p = probs.data() + plane * h;
          const T* dout = out.grad.data() + h * dh;
          if (gv) gemm(true, false, tk, dh, tq, s, p, tk, dout, c, T(1), gv + h * dh, c);
          if (!gq && !gk) continue;
          gemm(false, true, tq, tk, dh, T(1), dout, c, vv.data() + h * dh, c, T(0), dp.data(), tk);
          for (int i = 0; i < tq; ++i) {
            T* dr = dp.data() + static_cast<std::size_t>(i) * tk;
            const T* pr = p + static_cast<std::size_t>(i) * tk;
            T dot = 0;
            for (int j = 0; j < tk; ++j) dot += dr[j] * pr[j];
            for (int j = 0; j < tk; ++j) dr[j] = pr[j] * (dr[j] - dot) * sc;
          }
          if (gq) {
            gemm(false, false, tq, dh, tk, s, dp.data(), tk, kv.data() + h * dh, c, T(1), gq + h * dh, c);
          }
          if (gk) {
            gemm(true, false, tk, dh, tq, s, dp.data(), tk, qv.data() + h * dh, c, T(1), gk + h * dh, c);
          }
        }
      });
}

template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target, std::span<const T> mask) {
  require_same(pred, target, "mse");
  if (!mask.empty() && mask.size() != pred.numel()) {
    throw ShapeError("mse: mask has " + std::to_string(mask.size()) + " entries for " +
                     shape_str(pred.shape()));
  }
  std::vector<T> w(pred.numel(), T(1));
  if (!mask.empty()) w.assign(mask.begin(), mask.end());
  T denom = 0;
  for (T x : w) denom += x;
  T total = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const T d = pred.data()[i] - target.data()[i];
    total += w[i] * d * d;
  }
  const T loss = denom > T(0) ? total / denom : T(0);
  return make_result<T>({1}, {loss}, {&pred, &target}, [w = std::move(w), denom](Node<T>& out) {
    if (!(denom > T(0))) return;
    const T s = corruption<T>("mse") * out.grad[0] * T(2) / denom;
    const auto& pv = out.parents[0]->value;
    const auto& tv = out.parents[1]->value;
    T* gp = grad_of(out.parents[0]);
    T* gt = grad_of(out.parents[1]);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T d = s * w[i] * (pv[i] - tv[i]);
      if (gp) gp[i] += d;
      if (gt) gt[i] -= d;
    }
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels, int ignore_id) {
  require_rank(logits, 2, "cross_entropy");
  const int rows = logits.dim(0);
  const int vocab = logits.dim(1);
  if (labels.size() != static_cast<std::size_t>(rows)) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_str(logits.shape()));
  }
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<T> probs(logits.data().begin(), logits.data().end());
  T total = 0;
  int count = 0;
  for (int i = 0; i < rows; ++i) {
    T* row = probs.data() + static_cast<std::size_t>(i) * vocab;
    if (lab[i] == ignore_id) continue;
    if (lab[i] < 0 || lab[i] >= vocab) throw ShapeError("cross_entropy: label out of range");
    T mx = row[0];
    for (int j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    T z = 0;
    for (int j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
    total += (std::log(z) + mx) - row[lab[i]];
    ++count;
    softmax_strided(row, vocab, 1);
  }
  const T loss = count > 0 ? total / count : T(0);
  return make_result<T>({1}, {loss}, {&logits},
                        [lab = std::move(lab), probs = std::move(probs), count, vocab,
                         ignore_id](Node<T>& out) {
                          T* g = grad_of(out.parents[0]);
                          if (!g || count == 0) return;
                          const T s = corruption<T>("cross_entropy") * out.grad[0] / count;
                          for (std::size_t i = 0; i < lab.size(); ++i) {
                            if (lab[i] == ignore_id) continue;
                            const std::size_t b = i * static_cast<std::size_t>(vocab);
                            for (int j = 0; j < vocab; ++j) {
                              const T onehot = j == lab[i] ? T(1) : T(0);
                              g[b + j] += s * (probs[b + j] - onehot);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> masked_l1(const Tensor<T>& x, std::span<const T> mask) {
  if (mask.size() != x.numel()) {
    throw ShapeError("masked_l1: mask has " + std::to_string(mask.size()) + " entries for " +
                     shape_str(x.shape()));
  }
  std::vector<T> w(mask.begin(), mask.end());
  T denom = 0;
  T total = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    denom += w[i];
    total += w[i] * std::abs(x.data()[i]);
  }
  const T loss = denom > T(0) ? total / denom : T(0);
  return make_result<T>({1}, {loss}, {&x}, [w = std::move(w), denom](Node<T>& out) {
    T* g = grad_of(out.parents[0]);
    if (!g || !(denom > T(0))) return;
    const T s = corruption<T>("masked_l1") * out.grad[0] / denom;
    const auto& xv = out.parents[0]->value;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T sgn = xv[i] > T(0) ? T(1) : (xv[i] < T(0) ? T(-1) : T(0));
      g[i] += s * w[i] * sgn;
    }
  });
}

template <typename T>
Tensor<T> soft_argmax(const Tensor<T>& logits, const Tensor<T>& centers) {
  require_rank(centers, 2, "soft_argmax");
  const int n = centers.dim(0);
  return matmul(softmax(slice_cols(logits, 0, n), 1), centers);
}

#define PARKBENCH_INSTANTIATE(T)                                                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                               \
  template Tensor<T> slice_rows(const Tensor<T>&, int, int);                                   \
  template Tensor<T> slice_cols(const Tensor<T>&, int, int);                                   \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const int>);                        \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                  \
  template Tensor<T> softmax(const Tensor<T>&, int);                                           \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);      \
  template Tensor<T> gelu(const Tensor<T>&);                                                   \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> wrap_angle(const Tensor<T>&);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,      \
                               AttentionMask, std::vector<T>*);                                \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&, std::span<const T>);              \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>, int);               \
  template Tensor<T> masked_l1(const Tensor<T>&, std::span<const T>);                          \
  template Tensor<T> soft_argmax(const Tensor<T>&, const Tensor<T>&);

PARKBENCH_INSTANTIATE(float)
PARKBENCH_INSTANTIATE(double)

#undef PARKBENCH_INSTANTIATE

}  // namespace parkbench::ad
