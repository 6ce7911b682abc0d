#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "gymgrid/nn/autodiff.hpp"
#include "gymgrid/rng.hpp"

namespace gymgrid::nn {

struct GradCheckOptions {
  /// Central-difference step.
  double h = 1e-6;
  /// Gradients smaller than this are compared absolutely:
  /// err = |analytic - numeric| / max(floor, |analytic|, |numeric|).
  double floor = 1e-3;
  /// 0 checks every element; otherwise this many random elements per parameter.
  std::size_t samples_per_param = 0;
  std::uint64_t seed = 1;
};

struct GradCheckResult {
  double max_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

/// Compares backward() against central differences of `loss`, which must
/// rebuild the scalar from the current parameter values on every call.
inline GradCheckResult gradcheck(const std::function<Var<double>()>& loss,
                                 const std::vector<Var<double>>& params,
                                 const GradCheckOptions& opt = {}) {
  zero_grad(params);
  backward(loss());
  std::vector<Tensor<double>> analytic;
  for (const auto& p : params) {
    auto copy = p;
    analytic.push_back(copy.mutable_grad());
  }
  zero_grad(params);

  Rng rng(opt.seed);
  GradCheckResult r;
  NoGradGuard guard;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    auto& v = p.mutable_value().vec();
    std::vector<std::size_t> idx;
    if (opt.samples_per_param == 0 || opt.samples_per_param >= v.size()) {
      for (std::size_t i = 0; i < v.size(); ++i) idx.push_back(i);
    } else {
      for (std::size_t s = 0; s < opt.samples_per_param; ++s) idx.push_back(rng.below(v.size()));
    }
    for (std::size_t i : idx) {
      const double saved = v[i];
      v[i] = saved + opt.h;
      const double up = loss().item();
      v[i] = saved - opt.h;
      const double down = loss().item();
      v[i] = saved;
      const double numeric = (up - down) / (2 * opt.h);
      const double a = analytic[k].vec()[i];
      const double err = std::abs(a - numeric) / std::max({opt.floor, std::abs(a), std::abs(numeric)});
      ++r.checked;
      if (err > r.max_error) {
        r.max_error = err;
        r.worst = p.name() + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                  std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace gymgrid::nn
