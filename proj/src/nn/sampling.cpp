#include "gymgrid/nn/sampling.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gymgrid::nn {

namespace {

template <typename T>
void validate(std::span<const T> p) {
  if (p.empty()) throw std::invalid_argument("empty distribution");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto v = static_cast<double>(p[i]);
    if (!std::isfinite(v) || v < 0.0)
      throw std::invalid_argument("invalid probability " + std::to_string(v) + " at index " +
                                  std::to_string(i));
    total += v;
  }
  if (std::abs(total - 1.0) > kDistributionTolerance)
    throw std::invalid_argument("probabilities sum to " + std::to_string(total));
}

}  // namespace

template <typename T>
int sample_categorical(std::span<const T> probabilities, Rng& rng) {
  validate(probabilities);
  const double u = rng.uniform01();
  double cdf = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const auto v = static_cast<double>(probabilities[i]);
    if (v <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cdf += v;
    if (u < cdf) return static_cast<int>(i);
  }
  // Rounding left the total slightly below u.
  return last_positive;
}

template <typename T>
int argmax(std::span<const T> probabilities) {
  if (probabilities.empty()) throw std::invalid_argument("argmax of an empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probabilities.size(); ++i)
    if (probabilities[i] > probabilities[best]) best = i;
  return static_cast<int>(best);
}

template int sample_categorical(std::span<const float>, Rng&);
template int sample_categorical(std::span<const double>, Rng&);
template int argmax(std::span<const float>);
template int argmax(std::span<const double>);

}  // namespace gymgrid::nn
