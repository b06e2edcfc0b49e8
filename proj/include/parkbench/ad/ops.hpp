#pragma once

#include <span>
#include <vector>

#include "parkbench/ad/tensor.hpp"

namespace parkbench::ad {

// Matrices are rank-2 row-major tensors; vectors are rank 1.

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// a[m, n] + b[n] on every row.
template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);

/// Concatenation of rank-2 tensors along axis 0 or 1.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, int begin, int end);

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, int begin, int end);

/// Rows of `table` picked by `ids` (embedding lookup).
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape);

/// Softmax of a rank-2 tensor along axis 0 or 1.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis);

/// Row-wise normalization of x[m, n] with affine gamma[n], beta[n].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

/// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);

template <typename T>
Tensor<T> relu(const Tensor<T>& a);

/// x - 2 pi round(x / 2 pi); gradient treated as identity.
template <typename T>
Tensor<T> wrap_angle(const Tensor<T>& a);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> mean(const Tensor<T>& a);

struct AttentionMask {
  bool causal = false;
  /// Query i sees keys j <= i + offset; use Tk - Tq for a query suffix.
  int offset = 0;
};

/// Multi-head scaled dot-product attention. q[Tq, C], k and v[Tk, C], C split
/// into `heads` equal slices. Masked logits are -inf before the softmax.
/// When `weights` is non-null it receives the attention rows [heads, Tq, Tk].
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                    AttentionMask mask = {}, std::vector<T>* weights = nullptr);

// --- losses (scalar results) ---

/// sum(mask * (pred - target)^2) / sum(mask); mask empty means all ones.
/// Zero when the mask is all zero.
template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target, std::span<const T> mask = {});

/// Mean token cross-entropy of logits[T, V] over rows whose label != ignore_id.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels, int ignore_id);

/// sum(mask * |x|) / sum(mask), zero when the mask is all zero.
template <typename T>
Tensor<T> masked_l1(const Tensor<T>& x, std::span<const T> mask);

/// Expectation of `centers` under softmax(logits[:, 0:n]), shape [T, 1].
template <typename T>
Tensor<T> soft_argmax(const Tensor<T>& logits, const Tensor<T>& centers);

}  // namespace parkbench::ad
