#include "gymgrid/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace gymgrid::nn {

nlohmann::json to_json(const RMSPropConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"decay", c.decay},
          {"epsilon", c.epsilon},
          {"max_grad_norm", c.max_grad_norm}};
}

RMSPropConfig rmsprop_config_from_json(const nlohmann::json& j) {
  RMSPropConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.decay = j.value("decay", c.decay);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  return c;
}

template <typename T>
double global_grad_norm(const std::vector<Var<T>>& params) {
  double sq = 0.0;
  for (const auto& p : params)
    for (auto g : p.grad().vec()) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

template <typename T>
double clip_grad_norm(const std::vector<Var<T>>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto factor = static_cast<T>(max_norm / norm);
    for (const auto& p : params)
      for (auto& g : p.node()->ensure_grad().vec()) g *= factor;
  }
  return norm;
}

template <typename T>
RMSProp<T>::RMSProp(std::vector<Var<T>> params, RMSPropConfig config)
    : params_(std::move(params)), config_(config) {
  square_avg_.reserve(params_.size());
  for (const auto& p : params_) square_avg_.emplace_back(p.shape(), T{0});
}

template <typename T>
double RMSProp<T>::step() {
  for (const auto& p : params_) {
    for (auto g : p.node()->ensure_grad().vec())
      if (!std::isfinite(static_cast<double>(g)))
        throw std::runtime_error("non-finite gradient in parameter '" + p.name() + "'");
  }
  const double norm = clip_grad_norm(params_, config_.max_grad_norm);
  const auto decay = static_cast<T>(config_.decay);
  const auto lr = static_cast<T>(config_.learning_rate);
  const auto eps = static_cast<T>(config_.epsilon);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Node<T>* node = params_[k].node();
    auto& v = square_avg_[k];
    auto& w = node->value;
    const auto& g = node->grad;
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = decay * v[i] + (T{1} - decay) * g[i] * g[i];
      w[i] -= lr * g[i] / (std::sqrt(v[i]) + eps);
    }
  }
  zero_grad(params_);
  return norm;
}

template double global_grad_norm(const std::vector<Var<float>>&);
template double global_grad_norm(const std::vector<Var<double>>&);
template double clip_grad_norm(const std::vector<Var<float>>&, double);
template double clip_grad_norm(const std::vector<Var<double>>&, double);
template class RMSProp<float>;
template class RMSProp<double>;

}  // namespace gymgrid::nn
