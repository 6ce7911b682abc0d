#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "gymgrid/nn/autodiff.hpp"

namespace gymgrid::nn {

struct RMSPropConfig {
  double learning_rate = 7e-4;
  double decay = 0.99;
  double epsilon = 1e-5;
  /// Global L2 clip threshold; <= 0 disables clipping.
  double max_grad_norm = 0.5;
};

nlohmann::json to_json(const RMSPropConfig& c);
RMSPropConfig rmsprop_config_from_json(const nlohmann::json& j);

/// L2 norm over every parameter gradient, accumulated in double.
template <typename T>
double global_grad_norm(const std::vector<Var<T>>& params);

/// Scales all gradients so their global norm is at most max_norm. Returns the
/// norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<Var<T>>& params, double max_norm);

/// RMSProp with global gradient-norm clipping:
///   g <- clip(g);  v <- decay*v + (1-decay)*g^2;  p <- p - lr*g/(sqrt(v)+eps)
template <typename T>
class RMSProp {
 public:
  RMSProp(std::vector<Var<T>> params, RMSPropConfig config = {});

  /// Applies one update and zeroes the gradients. Throws std::runtime_error
  /// naming the first parameter whose gradient is not finite, leaving every
  /// parameter untouched. Returns the pre-clip gradient norm.
  double step();

  const RMSPropConfig& config() const noexcept { return config_; }
  const std::vector<Var<T>>& params() const noexcept { return params_; }
  std::vector<Tensor<T>>& accumulators() noexcept { return square_avg_; }
  const std::vector<Tensor<T>>& accumulators() const noexcept { return square_avg_; }

 private:
  std::vector<Var<T>> params_;
  RMSPropConfig config_;
  std::vector<Tensor<T>> square_avg_;
};

}  // namespace gymgrid::nn
