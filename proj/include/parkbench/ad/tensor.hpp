#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "parkbench/errors.hpp"

namespace parkbench::ad {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

/// Shape mismatch between operands; the message names both shapes.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& op, const Shape& a, const Shape& b)
      : Error(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b)) {}
  explicit ShapeError(const std::string& what) : Error(what) {}
};

/// Gradient recording is on by default; NoGrad turns it off for the current
/// thread while in scope.
bool grad_enabled();

class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  ///< empty until needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

/// Shared handle to a node of the tape. Copies alias the same storage.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }
  [[nodiscard]] const Shape& shape() const { return node_->shape; }
  [[nodiscard]] int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  [[nodiscard]] int rank() const { return static_cast<int>(node_->shape.size()); }
  [[nodiscard]] std::size_t numel() const { return node_->value.size(); }
  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }

  [[nodiscard]] std::span<T> data() { return node_->value; }
  [[nodiscard]] std::span<const T> data() const { return node_->value; }
  /// Empty span when no gradient has been accumulated.
  [[nodiscard]] std::span<T> grad() { return node_->grad; }
  [[nodiscard]] std::span<const T> grad() const { return node_->grad; }
  [[nodiscard]] T item() const;

  /// Reverse sweep from this scalar (seed 1) or with an explicit seed.
  void backward() const;
  void backward(std::span<const T> seed) const;
  void zero_grad();

  [[nodiscard]] Node<T>* node() const { return node_.get(); }
  [[nodiscard]] const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Creates an op output. Records parents and the backward closure only when
/// recording is on and some parent needs gradients.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> parents,
                      std::function<void(Node<T>& out)> backward);

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& parents,
                      std::function<void(Node<T>& out)> backward);

/// Test hook: when set to an op name, that op's backward scales its input
/// gradients by 1.01. Used to prove the gradient checker catches errors.
void set_gradient_corruption(const std::string& op);
bool gradient_corrupted(const char* op);

}  // namespace parkbench::ad
