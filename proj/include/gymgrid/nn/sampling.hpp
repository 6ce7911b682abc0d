#pragma once

#include <span>

#include "gymgrid/rng.hpp"

namespace gymgrid::nn {

inline constexpr double kDistributionTolerance = 1e-5;

/// Inverse-CDF draw. Throws std::invalid_argument unless the probabilities are
/// finite, non-negative and sum to 1 within kDistributionTolerance.
template <typename T>
int sample_categorical(std::span<const T> probabilities, Rng& rng);

/// Index of the largest probability; ties go to the lowest index.
template <typename T>
int argmax(std::span<const T> probabilities);

}  // namespace gymgrid::nn
