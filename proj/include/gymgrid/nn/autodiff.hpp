#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gymgrid/nn/tensor.hpp"

namespace gymgrid::nn {

template <typename T>
struct Node {
  Tensor<T> value;
  /// Allocated on demand; parameters keep theirs between updates.
  Tensor<T> grad;
  bool requires_grad = false;
  bool is_parameter = false;
  /// Set on parameters by backward(), cleared by zero_grad().
  bool grad_pending = false;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  /// Propagates this node's grad into its parents' grads.
  std::function<void(Node&)> backward;

  Tensor<T>& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape(), T{0});
    return grad;
  }
};

/// Handle to a node in the recorded computation graph.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  /// A constant (no gradient).
  static Var constant(Tensor<T> value);
  /// A learnable leaf with a zeroed gradient buffer.
  static Var parameter(Tensor<T> value, std::string name);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() const { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->ensure_grad(); }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const std::string& name() const { return node_->name; }
  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const noexcept { return node_; }

  /// Scalar value of a single-element variable.
  T item() const;

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

/// Builds a result node. Records parents and the backward closure only when
/// recording is on and some parent requires a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward);

/// Reverse-mode accumulation from a scalar loss into every reachable
/// parameter. Throws std::logic_error if a reachable parameter still holds an
/// unconsumed gradient from an earlier backward (zero_grad first).
template <typename T>
void backward(const Var<T>& loss);

template <typename T>
void zero_grad(const std::vector<Var<T>>& params);

}  // namespace gymgrid::nn
