#pragma once

#include <cstdint>
#include <vector>

#include "gymgrid/grid.hpp"
#include "gymgrid/models.hpp"
#include "gymgrid/nn/tensor.hpp"
#include "gymgrid/rng.hpp"

namespace gymgrid::test {

// Direct neighbour count, dead outside the board.
inline GolBoard naive_gol_step(const GolBoard& b) {
  GolBoard next(b.width(), b.height());
  for (int y = 0; y < b.height(); ++y)
    for (int x = 0; x < b.width(); ++x) {
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx >= 0 && ny >= 0 && nx < b.width() && ny < b.height() && b(nx, ny)) ++n;
        }
      next.set(x, y, b(x, y) ? (n == 2 || n == 3) : n == 3);
    }
  return next;
}

template <typename T = double>
nn::Tensor<T> random_tensor(Rng& rng, nn::Shape s, double scale = 1.0) {
  nn::Tensor<T> t(s);
  for (auto& v : t.vec()) v = static_cast<T>(scale * rng.normal());
  return t;
}

// Moves biases off zero so ReLU inputs do not sit exactly on the kink.
template <typename T>
void jitter_biases(PolicyModel<T>& model, Rng& rng, double scale = 0.1) {
  for (auto p : model.parameters())
    if (p.name().ends_with(".bias"))
      for (auto& v : p.mutable_value().vec()) v = static_cast<T>(scale * rng.normal());
}

}  // namespace gymgrid::test
