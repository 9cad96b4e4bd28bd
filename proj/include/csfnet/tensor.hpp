#ifndef CSFNET_TENSOR_HPP
#define CSFNET_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace csf {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Thrown for contract violations (bad shapes, bad arguments, bad files).
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

[[noreturn]] inline void fail(const std::string& msg) {
  throw ValidationError(msg);
}

inline void check_shape_positive(const Shape& s, const char* what) {
  if (s.empty()) fail(std::string(what) + ": empty shape");
  for (int d : s)
    if (d <= 0) fail(std::string(what) + ": non-positive extent in " + shape_str(s));
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized iff tracked
  bool tracked = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Accumulates this node's grad into its parents' grads. Null for leaves.
  std::function<void(TensorNode&)> backprop;
};

// Value-semantics handle over a shared autodiff node.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool tracked = false) {
    check_shape_positive(shape, "Tensor");
    node_ = std::make_shared<TensorNode<T>>();
    node_->shape = std::move(shape);
    node_->value.assign(numel(node_->shape), T(0));
    node_->tracked = tracked;
    if (tracked) node_->grad.assign(node_->value.size(), T(0));
  }

  static Tensor from(Shape shape, std::vector<T> data, bool tracked = false) {
    check_shape_positive(shape, "Tensor::from");
    if (numel(shape) != static_cast<int64_t>(data.size()))
      fail("Tensor::from: shape " + shape_str(shape) + " does not match data length " +
           std::to_string(data.size()));
    Tensor t(shape, tracked);
    t.node_->value = std::move(data);
    return t;
  }

  static Tensor full(Shape shape, T v, bool tracked = false) {
    Tensor t(std::move(shape), tracked);
    std::fill(t.node_->value.begin(), t.node_->value.end(), v);
    return t;
  }

  static Tensor scalar(T v, bool tracked = false) { return full({1}, v, tracked); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(node_->value.size()); }
  bool tracked() const { return node_->tracked; }

  std::vector<T>& value() { return node_->value; }
  const std::vector<T>& value() const { return node_->value; }

  std::vector<T>& grad() {
    if (!node_->tracked) fail("Tensor::grad: tensor is not tracked");
    return node_->grad;
  }
  const std::vector<T>& grad() const {
    if (!node_->tracked) fail("Tensor::grad: tensor is not tracked");
    return node_->grad;
  }

  void zero_grad() {
    if (node_->tracked) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  T item() const {
    if (size() != 1) fail("Tensor::item: tensor has " + std::to_string(size()) + " elements");
    return node_->value[0];
  }

  std::shared_ptr<TensorNode<T>>& node() { return node_; }
  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Builds an op result node. `backprop` may be empty when no input is tracked.
template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> value,
                         std::vector<std::shared_ptr<TensorNode<T>>> inputs,
                         std::function<void(TensorNode<T>&)> backprop) {
  bool tracked = false;
  for (auto& in : inputs)
    if (in && in->tracked) tracked = true;
  Tensor<T> out = Tensor<T>::from(std::move(shape), std::move(value), tracked);
  if (tracked) {
    out.node()->parents = std::move(inputs);
    out.node()->backprop = std::move(backprop);
  }
  return out;
}

// Reverse-mode backpropagation from a scalar root. Visits each node once in
// reverse topological order; leaf gradients accumulate across calls.
template <typename T>
void backward(const Tensor<T>& root) {
  if (root.size() != 1) fail("backward: root must be scalar, got " + shape_str(root.shape()));
  if (!root.tracked()) return;

  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> seen;
  std::vector<std::pair<TensorNode<T>*, size_t>> stack;
  stack.push_back({root.node().get(), 0});
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      TensorNode<T>* p = n->parents[i++].get();
      if (p && p->tracked && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior grads are recomputed each call; leaves keep accumulating.
  for (TensorNode<T>* n : order)
    if (n->backprop) std::fill(n->grad.begin(), n->grad.end(), T(0));
  root.node()->grad[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

}  // namespace csf

#endif  // CSFNET_TENSOR_HPP
