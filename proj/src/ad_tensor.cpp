#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <string>
#include <unordered_set>

#include "parkbench/ad/tensor.hpp"

namespace parkbench::ad {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative extent in " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

namespace {
thread_local bool g_grad_enabled = true;

std::mutex g_corrupt_mu;
std::string g_corrupt_op;
std::atomic<bool> g_corrupt_any{false};
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGrad::NoGrad() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGrad::~NoGrad() { g_grad_enabled = prev_; }

void set_gradient_corruption(const std::string& op) {
  std::lock_guard lock(g_corrupt_mu);
  g_corrupt_op = op;
  g_corrupt_any = !op.empty();
}

bool gradient_corrupted(const char* op) {
  if (!g_corrupt_any) return false;
  std::lock_guard lock(g_corrupt_mu);
  return g_corrupt_op == op;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return from(shape, std::vector<T>(shape_numel(shape), T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(const Shape& shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor data has " + std::to_string(data.size()) + " values for shape " +
                     shape_str(shape));
  }
  auto n = std::make_shared<Node<T>>();
  n->shape = shape;
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  if (requires_grad) n->ensure_grad();
  return Tensor(std::move(n));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) throw ShapeError("backward() without seed needs a scalar, got " +
                                     shape_str(shape()));
  const T one(1);
  backward(std::span<const T>(&one, 1));
}

template <typename T>
void Tensor<T>::backward(std::span<const T> seed) const {
  if (seed.size() != numel()) throw ShapeError("backward seed size mismatch");
  if (!node_->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<T>* p = n->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  for (std::size_t i = 0; i < seed.size(); ++i) node_->grad[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward();
  }
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

namespace {

template <typename T>
Tensor<T> finish(Shape shape, std::vector<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
                 std::function<void(Node<T>& out)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  if (shape_numel(n->shape) != value.size()) {
    throw ShapeError("op produced " + std::to_string(value.size()) + " values for shape " +
                     shape_str(n->shape));
  }
  n->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    Node<T>* raw = n.get();
    n->backward = [raw, bw = std::move(backward)]() { bw(*raw); };
  }
  return Tensor<T>(std::move(n));
}

}  // namespace

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> parents,
                      std::function<void(Node<T>& out)> backward) {
  std::vector<std::shared_ptr<Node<T>>> ps;
  for (const auto* p : parents) ps.push_back(p->ptr());
  return finish<T>(std::move(shape), std::move(value), std::move(ps), std::move(backward));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& parents,
                      std::function<void(Node<T>& out)> backward) {
  std::vector<std::shared_ptr<Node<T>>> ps;
  for (const auto& p : parents) ps.push_back(p.ptr());
  return finish<T>(std::move(shape), std::move(value), std::move(ps), std::move(backward));
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>,
                                   std::initializer_list<const Tensor<float>*>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    std::initializer_list<const Tensor<double>*>,
                                    std::function<void(Node<double>&)>);
template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    const std::vector<Tensor<double>>&,
                                    std::function<void(Node<double>&)>);

}  // namespace parkbench::ad
