#pragma once

#include "gymgrid/nn/tensor.hpp"
#include "gymgrid/rng.hpp"

namespace gymgrid::nn {

/// Fills a weight tensor (out, in, kh, kw) with a scaled orthogonal matrix of
/// shape out x (in*kh*kw): rows orthonormal when out <= fan_in, columns
/// orthonormal otherwise.
template <typename T>
void orthogonal_init(Tensor<T>& weight, double gain, Rng& rng);

}  // namespace gymgrid::nn
