#pragma once

#include <span>
#include <vector>

#include "gymgrid/nn/autodiff.hpp"

namespace gymgrid::nn {

/// Cross-correlation of x (N,C,H,W) with weight (O,C,k,k) plus bias (O,1,1,1).
/// Output spatial size floor((H + 2*padding - k) / stride) + 1.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

/// Stride-1 convolution with "same" zero padding; k must be odd.
template <typename T>
Var<T> conv2d_same(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  return conv2d(x, weight, bias, 1, (weight.shape().h - 1) / 2);
}

/// Dense layer over each flattened sample: x (N, F...) , weight (O,F,1,1),
/// bias (O,1,1,1) -> (N,O,1,1).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> tanh(const Var<T>& x);
template <typename T> Var<T> exp(const Var<T>& x);
template <typename T> Var<T> square(const Var<T>& x);

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);

/// Arithmetic mean of equally shaped inputs.
template <typename T> Var<T> mean_of(const std::vector<Var<T>>& xs);

/// Sum / mean of every element, shape (1,1,1,1).
template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
/// Per-sample sum, shape (N,1,1,1).
template <typename T> Var<T> sum_per_sample(const Var<T>& x);

/// Log-softmax over each sample's flattened (channel, y, x) axis,
/// stabilised by max subtraction.
template <typename T> Var<T> log_softmax(const Var<T>& x);
template <typename T> Var<T> softmax(const Var<T>& x);

/// Picks element indices[n] of sample n's flattened values -> (N,1,1,1).
template <typename T> Var<T> gather(const Var<T>& x, std::span<const int> indices);

template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);

/// Zero-pads height and width on the high edge up to even sizes (a no-op for
/// even sizes).
template <typename T> Var<T> pad_to_even(const Var<T>& x);

/// Zero-extends the channel axis to `channels`.
template <typename T> Var<T> pad_channels(const Var<T>& x, int channels);

}  // namespace gymgrid::nn
