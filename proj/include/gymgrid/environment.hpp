#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gymgrid/grid_engine.hpp"

namespace gymgrid {

enum class Game { GameOfLife, PowerPuzzle };

std::string game_name(Game g);
Game game_from_name(const std::string& name);

struct EnvConfig {
  Game game = Game::GameOfLife;
  int map_width = 16;
  int map_height = 16;
  int max_steps = 100;
  double init_alive_prob = 0.2;
  ZoneRange zone_range{1, 5};
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

/// Serializes every field. Parsing rejects unknown fields; missing fields keep
/// their defaults.
nlohmann::json to_json(const EnvConfig& cfg);
EnvConfig env_config_from_json(const nlohmann::json& j);

/// Puzzle observation channel layout.
namespace puzzle_channel {
inline constexpr int kEmpty = 0;
inline constexpr int kWire = 1;
inline constexpr int kResidential = 2;
inline constexpr int kPlant = 3;
inline constexpr int kPowered = 4;
inline constexpr int kCount = 5;
}  // namespace puzzle_channel

/// channels x height x width image, row-major within a channel.
struct Observation {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  friend bool operator==(const Observation&, const Observation&) = default;
};

Observation encode_observation(const GolBoard& board);
Observation encode_observation(const PuzzleBoard& board);

/// A queued human build. For Game of Life a tile of Empty kills the cell and
/// anything else brings it to life; for the puzzle the default tile is Wire.
struct HumanAction {
  int action = 0;
  bool force = false;
  std::optional<Tile> tile;
  friend bool operator==(const HumanAction&, const HumanAction&) = default;
};

/// FIFO of human builds. Any number of producers, one consumer.
class HumanBuildQueue {
 public:
  static constexpr std::size_t kDefaultCapacity = 64;

  explicit HumanBuildQueue(std::size_t capacity = kDefaultCapacity);

  /// Appends; when full the oldest entries are dropped. Returns how many were
  /// dropped by this call.
  std::size_t push(HumanAction a);
  std::optional<HumanAction> pop();
  std::size_t size() const;
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t total_dropped() const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::deque<HumanAction> items_;
  std::size_t capacity_;
  std::size_t dropped_ = 0;
};

struct StepInfo {
  int population = 0;
  bool human_substituted = false;
  /// Flat action index that was actually applied (the human's when substituted).
  int applied_action = 0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

class Environment {
 public:
  explicit Environment(EnvConfig config);
  virtual ~Environment() = default;
  Environment(const Environment&) = delete;
  Environment& operator=(const Environment&) = delete;

  const EnvConfig& config() const noexcept { return config_; }
  int width() const noexcept { return config_.map_width; }
  int height() const noexcept { return config_.map_height; }
  int action_count() const noexcept { return config_.map_width * config_.map_height; }
  virtual int observation_channels() const noexcept = 0;

  /// Starts an episode from an explicit seed.
  Observation reset(std::uint64_t episode_seed);
  /// Starts the next episode in this environment's own seed stream.
  Observation reset();

  /// Applies the next queued human action if there is one, otherwise `action`.
  StepResult step(int action);

  virtual Observation observe() const = 0;

  /// Queues a human build for the next step. Returns the number of older
  /// entries dropped to make room.
  std::size_t inject_human_action(int action, bool force = false,
                                  std::optional<Tile> tile = std::nullopt);
  HumanBuildQueue& human_queue() noexcept { return queue_; }
  std::size_t human_queue_depth() const { return queue_.size(); }

  bool started() const noexcept { return started_; }
  bool done() const noexcept { return started_ && step_ >= config_.max_steps; }
  int step_index() const noexcept { return step_; }
  double episode_return() const noexcept { return episode_return_; }
  std::uint64_t episodes_started() const noexcept { return episodes_; }

  /// Current population measure (the reward the current board would earn).
  virtual int population() const = 0;
  virtual std::string board_text() const = 0;

  /// Episode bookkeeping and board, enough to continue bit-exactly.
  nlohmann::json save_state() const;
  void load_state(const nlohmann::json& j);

 protected:
  virtual void reset_board(std::uint64_t episode_seed) = 0;
  virtual void apply_agent_action(int action) = 0;
  virtual void apply_human_action(const HumanAction& a) = 0;
  /// Advances the game after the build; returns the step reward.
  virtual int advance() = 0;
  virtual void load_board_text(const std::string& text) = 0;

  /// Marks a hand-loaded board as a fresh episode.
  void begin_episode();

 private:
  void check_action(int action) const;

  EnvConfig config_;
  HumanBuildQueue queue_;
  bool started_ = false;
  int step_ = 0;
  double episode_return_ = 0.0;
  std::uint64_t episodes_ = 0;
};

class GolEnvironment final : public Environment {
 public:
  explicit GolEnvironment(EnvConfig config);

  int observation_channels() const noexcept override { return 1; }
  Observation observe() const override { return encode_observation(board_); }
  int population() const override { return count_alive(board_); }
  std::string board_text() const override { return to_text(board_); }

  const GolBoard& board() const noexcept { return board_; }
  /// Begins an episode from a given board (dimensions must match the config).
  Observation load_board(GolBoard board);

 protected:
  void reset_board(std::uint64_t episode_seed) override;
  void apply_agent_action(int action) override;
  void apply_human_action(const HumanAction& a) override;
  int advance() override;
  void load_board_text(const std::string& text) override;

 private:
  GolBoard board_;
};

class PowerPuzzleEnvironment final : public Environment {
 public:
  explicit PowerPuzzleEnvironment(EnvConfig config);

  int observation_channels() const noexcept override { return puzzle_channel::kCount; }
  Observation observe() const override { return encode_observation(board_); }
  int population() const override { return count_powered_residential(board_); }
  std::string board_text() const override { return to_text(board_.tiles); }

  const PuzzleBoard& board() const noexcept { return board_; }
  Observation load_board(PuzzleBoard board);

  /// True when every residential tile is powered.
  bool all_zones_powered() const;

 protected:
  void reset_board(std::uint64_t episode_seed) override;
  void apply_agent_action(int action) override;
  void apply_human_action(const HumanAction& a) override;
  int advance() override;
  void load_board_text(const std::string& text) override;

 private:
  PuzzleBoard board_;
};

std::unique_ptr<Environment> make_environment(const EnvConfig& config);

int observation_channels(Game game);

}  // namespace gymgrid
