#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "gymgrid/environment.hpp"
#include "gymgrid/models.hpp"

namespace gymgrid {

struct EvalOptions {
  int episodes = 100;
  /// -1 evaluates the whole network; otherwise a single fractal column.
  int column = -1;
  bool deterministic = true;
  std::uint64_t seed = 0x5eed;
  /// Episodes stepped together through one batched forward pass.
  int batch = 16;
};

struct EvalReport {
  Game game = Game::GameOfLife;
  int width = 0;
  int height = 0;
  int column = -1;
  bool deterministic = true;
  double init_alive_prob = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> returns;
  /// Puzzle only: fraction of episodes ending with every zone powered.
  std::optional<double> connection_rate;
};

nlohmann::json to_json(const EvalReport& r);

/// Plays `episodes` complete episodes. Episode i starts from
/// derive_seed(options.seed, i), so reports do not depend on the batch size.
/// Throws std::invalid_argument when the model's input channels do not match
/// the game, and propagates forward errors (FullyConv off its bound size).
EvalReport evaluate(const PolicyModel<float>& model, const EnvConfig& env, const EvalOptions& options);

/// Uniform random actions, same episode seeds as evaluate.
EvalReport random_baseline(const EnvConfig& env, int episodes, std::uint64_t seed = 0x5eed);

inline const std::vector<int> kDefaultSweepSizes{16, 20, 32, 64};

/// One report per square size, same weights. `alive_prob` overrides the Game
/// of Life initial density for particular sizes.
std::vector<EvalReport> scale_sweep(const PolicyModel<float>& model, const EnvConfig& base,
                                    const std::vector<int>& sizes, const EvalOptions& options,
                                    const std::map<int, double>& alive_prob = {});

}  // namespace gymgrid
