#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "gymgrid/checkpoint.hpp"
#include "gymgrid/environment.hpp"
#include "gymgrid/models.hpp"
#include "gymgrid/nn/optim.hpp"
#include "gymgrid/rng.hpp"

namespace gymgrid {

struct TrainConfig {
  int num_envs = 16;
  int n_steps = 5;
  double gamma = 0.99;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  long long total_frames = 2'000'000;
  /// Frames between checkpoints; 0 disables periodic checkpoints.
  long long checkpoint_interval = 0;
  /// Frames between evaluations; 0 disables them.
  long long eval_interval = 0;
  int eval_episodes = 100;
  /// Frames between training rows in the metrics log.
  long long log_interval = 10'000;
  std::uint64_t seed = 0;
  nn::RMSPropConfig optimizer;
  bool normalize_advantages = false;
  /// Rewards are multiplied by this before computing returns.
  double reward_scale = 1.0;

  long long frames_per_update() const noexcept {
    return static_cast<long long>(num_envs) * n_steps;
  }
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// One rollout; per-step arrays are indexed [t * num_envs + e].
struct RolloutBatch {
  int n_steps = 0;
  int num_envs = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> observations;  // (n_steps * num_envs, C, H, W)
  std::vector<int> actions;
  std::vector<float> rewards;
  std::vector<float> values;
  std::vector<std::uint8_t> dones;
  std::vector<std::uint8_t> human_substituted;
  std::vector<float> bootstrap;  // num_envs
  /// Returns of episodes that ended during this rollout.
  std::vector<double> finished_returns;

  std::size_t transitions() const noexcept {
    return static_cast<std::size_t>(n_steps) * static_cast<std::size_t>(num_envs);
  }
  std::size_t index(int t, int e) const noexcept {
    return static_cast<std::size_t>(t) * static_cast<std::size_t>(num_envs) + static_cast<std::size_t>(e);
  }
};

/// Steps every environment n_steps times with actions sampled from the full
/// network (a queued human action replaces the sample), resetting finished
/// environments. Every environment must have been reset. Environment errors are
/// rethrown as std::runtime_error naming the environment index.
RolloutBatch collect_rollout(std::vector<std::unique_ptr<Environment>>& envs,
                             const PolicyModel<float>& model, int n_steps, Rng& rng);

struct Returns {
  std::vector<float> returns;
  std::vector<float> advantages;
};

/// R_t = scale*r_t + gamma * R_{t+1} * (1 - done_t), seeded by the bootstrap
/// values; A_t = R_t - V_t.
Returns compute_returns(const RolloutBatch& batch, double gamma, double reward_scale = 1.0);

struct LossReport {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

/// Builds the A2C loss for the batch under `mode` without touching the model.
struct A2CLoss {
  nn::Var<float> total;
  LossReport report;
};
A2CLoss a2c_loss(const PolicyModel<float>& model, const RolloutBatch& batch, const Returns& targets,
                 const TrainConfig& config, const ForwardMode& mode = EvalMode{});

/// One optimizer step on the A2C loss. Throws std::runtime_error if the loss is
/// not finite.
LossReport a2c_update(const PolicyModel<float>& model, const RolloutBatch& batch,
                      const Returns& targets, const TrainConfig& config,
                      nn::RMSProp<float>& optimizer, const ForwardMode& mode = EvalMode{});

inline constexpr const char* kMetricsHeader =
    "frame,updates,mean_return,policy_loss,value_loss,entropy,fps,column";

/// A2C over parallel environments. Environment 0 is the interactive one.
class Trainer {
 public:
  Trainer(TrainConfig config, EnvConfig env, ModelSpec spec);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;
  Trainer(Trainer&&) = default;
  Trainer& operator=(Trainer&&) = default;
  /// Continues from a checkpoint written by save(); the resumed run is
  /// bit-identical to an uninterrupted one.
  static Trainer resume(const std::filesystem::path& checkpoint_dir);

  /// One rollout and one update.
  LossReport update();
  bool finished() const noexcept { return frames_ >= config_.total_frames; }

  /// Runs to total_frames, writing metrics.csv, periodic checkpoints under
  /// out/checkpoints/frame_<F> and the final one under out/final.
  void run(const std::filesystem::path& out_dir);

  Checkpoint checkpoint() const;
  void save(const std::filesystem::path& dir) const;

  const TrainConfig& config() const noexcept { return config_; }
  const EnvConfig& env_config() const noexcept { return env_; }
  const PolicyModel<float>& model() const noexcept { return model_; }
  PolicyModel<float>& mutable_model() noexcept { return model_; }
  std::vector<std::unique_ptr<Environment>>& envs() noexcept { return envs_; }
  Environment& interactive_env() { return *envs_.front(); }
  const RolloutBatch& last_batch() const noexcept { return last_batch_; }
  const LossReport& last_loss() const noexcept { return last_loss_; }
  long long frames() const noexcept { return frames_; }
  long long updates() const noexcept { return updates_; }
  /// Mean of the last 100 finished episode returns; NaN before any finish.
  double recent_mean_return() const;

 private:
  TrainConfig config_;
  EnvConfig env_;
  PolicyModel<float> model_;
  nn::RMSProp<float> optimizer_;
  Rng rng_;
  std::vector<std::unique_ptr<Environment>> envs_;
  std::deque<double> recent_;
  long long frames_ = 0;
  long long updates_ = 0;
  RolloutBatch last_batch_;
  LossReport last_loss_;
};

}  // namespace gymgrid
