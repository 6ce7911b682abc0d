#include "gymgrid/nn/autodiff.hpp"

#include <stdexcept>
#include <unordered_set>

namespace gymgrid::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() noexcept { return g_grad_enabled; }

template <typename T>
Var<T> Var<T>::constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return Var(std::move(node));
}

template <typename T>
Var<T> Var<T>::parameter(Tensor<T> value, std::string name) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->is_parameter = true;
  node->name = std::move(name);
  node->ensure_grad();
  return Var(std::move(node));
}

template <typename T>
T Var<T>::item() const {
  if (node_->value.size() != 1)
    throw std::logic_error("item() on a tensor of shape " + node_->value.shape().str());
  return node_->value[0];
}

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.ptr());
      node->backward = std::move(backward_fn);
    }
  }
  return Var<T>(std::move(node));
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined()) throw std::logic_error("backward on an undefined variable");
  if (loss.value().size() != 1)
    throw std::logic_error("backward needs a scalar loss, got shape " + loss.shape().str());
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order)
    if (n->is_parameter && n->grad_pending)
      throw std::logic_error("backward called twice without zeroing gradients (parameter '" +
                             n->name + "')");

  loss.node()->ensure_grad().fill(T{1});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    if (!n->is_parameter) n->grad = Tensor<T>();  // intermediate grads are single-use
  }
  for (Node<T>* n : order)
    if (n->is_parameter) n->grad_pending = true;
}

template <typename T>
void zero_grad(const std::vector<Var<T>>& params) {
  for (const auto& p : params) {
    p.node()->ensure_grad().fill(T{0});
    p.node()->grad_pending = false;
  }
}

template class Var<float>;
template class Var<double>;
template Var<float> make_result(Tensor<float>, std::vector<Var<float>>,
                                std::function<void(Node<float>&)>);
template Var<double> make_result(Tensor<double>, std::vector<Var<double>>,
                                 std::function<void(Node<double>&)>);
template void backward(const Var<float>&);
template void backward(const Var<double>&);
template void zero_grad(const std::vector<Var<float>>&);
template void zero_grad(const std::vector<Var<double>>&);

}  // namespace gymgrid::nn
