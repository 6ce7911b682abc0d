#include "gymgrid/environment.hpp"

#include <set>
#include <stdexcept>

namespace gymgrid {

using nlohmann::json;

std::string game_name(Game g) {
  return g == Game::GameOfLife ? "GoL" : "PowerPuzzle";
}

Game game_from_name(const std::string& name) {
  if (name == "GoL") return Game::GameOfLife;
  if (name == "PowerPuzzle") return Game::PowerPuzzle;
  throw std::invalid_argument("unknown game '" + name + "' (expected GoL or PowerPuzzle)");
}

void EnvConfig::validate() const {
  if (map_width < 3 || map_height < 3)
    throw std::invalid_argument("map_width and map_height must be at least 3");
  if (max_steps < 1) throw std::invalid_argument("max_steps must be at least 1");
  if (!(init_alive_prob >= 0.0 && init_alive_prob <= 1.0))
    throw std::invalid_argument("init_alive_prob must lie in [0,1]");
  if (zone_range.min < 1 || zone_range.max > 5 || zone_range.min > zone_range.max)
    throw std::invalid_argument("zone_range must be a sub-interval of [1,5]");
  if (game == Game::PowerPuzzle && map_width * map_height < zone_range.max + 1)
    throw std::invalid_argument("map too small for zone_range");
}

json to_json(const EnvConfig& cfg) {
  return json{{"game", game_name(cfg.game)},
              {"map_width", cfg.map_width},
              {"map_height", cfg.map_height},
              {"max_steps", cfg.max_steps},
              {"init_alive_prob", cfg.init_alive_prob},
              {"zone_range", {cfg.zone_range.min, cfg.zone_range.max}},
              {"seed", cfg.seed}};
}

EnvConfig env_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("EnvConfig must be a JSON object");
  static const std::set<std::string> known = {"game",           "map_width",  "map_height",
                                              "max_steps",      "init_alive_prob",
                                              "zone_range",     "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown EnvConfig field '" + key + "'");

  EnvConfig cfg;
  try {
    if (j.contains("game")) cfg.game = game_from_name(j.at("game").get<std::string>());
    if (j.contains("map_width")) cfg.map_width = j.at("map_width").get<int>();
    if (j.contains("map_height")) cfg.map_height = j.at("map_height").get<int>();
    if (j.contains("max_steps")) cfg.max_steps = j.at("max_steps").get<int>();
    if (j.contains("init_alive_prob")) cfg.init_alive_prob = j.at("init_alive_prob").get<double>();
    if (j.contains("zone_range")) {
      const auto& zr = j.at("zone_range");
      if (!zr.is_array() || zr.size() != 2)
        throw std::invalid_argument("zone_range must be a [min, max] pair");
      cfg.zone_range = {zr[0].get<int>(), zr[1].get<int>()};
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed EnvConfig: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------- observation

Observation encode_observation(const GolBoard& board) {
  Observation obs{1, board.height(), board.width(), {}};
  obs.data.reserve(board.alive().size());
  for (auto v : board.alive().cells()) obs.data.push_back(static_cast<float>(v));
  return obs;
}

Observation encode_observation(const PuzzleBoard& board) {
  const int h = board.height();
  const int w = board.width();
  const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  Observation obs{puzzle_channel::kCount, h, w,
                  std::vector<float>(plane * puzzle_channel::kCount, 0.0f)};
  for (std::size_t i = 0; i < plane; ++i) {
    int ch = puzzle_channel::kEmpty;
    switch (board.tiles.cells()[i]) {
      case Tile::Empty: ch = puzzle_channel::kEmpty; break;
      case Tile::Wire: ch = puzzle_channel::kWire; break;
      case Tile::Residential: ch = puzzle_channel::kResidential; break;
      case Tile::PowerPlant: ch = puzzle_channel::kPlant; break;
    }
    obs.data[static_cast<std::size_t>(ch) * plane + i] = 1.0f;
    if (board.powered.cells()[i]) obs.data[puzzle_channel::kPowered * plane + i] = 1.0f;
  }
  return obs;
}

// ---------------------------------------------------------------- human queue

HumanBuildQueue::HumanBuildQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("human queue capacity must be positive");
}

std::size_t HumanBuildQueue::push(HumanAction a) {
  std::lock_guard lock(mu_);
  std::size_t dropped = 0;
  while (items_.size() >= capacity_) {
    items_.pop_front();
    ++dropped;
  }
  items_.push_back(a);
  dropped_ += dropped;
  return dropped;
}

std::optional<HumanAction> HumanBuildQueue::pop() {
  std::lock_guard lock(mu_);
  if (items_.empty()) return std::nullopt;
  HumanAction a = items_.front();
  items_.pop_front();
  return a;
}

std::size_t HumanBuildQueue::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

std::size_t HumanBuildQueue::total_dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

void HumanBuildQueue::clear() {
  std::lock_guard lock(mu_);
  items_.clear();
}

// ---------------------------------------------------------------- environment

Environment::Environment(EnvConfig config) : config_(config) { config_.validate(); }

Observation Environment::reset(std::uint64_t episode_seed) {
  reset_board(episode_seed);
  begin_episode();
  return observe();
}

Observation Environment::reset() { return reset(derive_seed(config_.seed, episodes_)); }

void Environment::begin_episode() {
  started_ = true;
  step_ = 0;
  episode_return_ = 0.0;
  ++episodes_;
}

void Environment::check_action(int action) const {
  if (action < 0 || action >= action_count())
    throw std::out_of_range("action " + std::to_string(action) + " outside [0, " +
                            std::to_string(action_count()) + ")");
}

StepResult Environment::step(int action) {
  if (!started_) throw std::logic_error("step called before reset");
  if (done()) throw std::logic_error("episode finished; call reset before stepping again");
  check_action(action);

  StepResult r;
  if (auto human = queue_.pop()) {
    apply_human_action(*human);
    r.info.human_substituted = true;
    r.info.applied_action = human->action;
  } else {
    apply_agent_action(action);
    r.info.applied_action = action;
  }
  const int reward = advance();
  ++step_;
  episode_return_ += reward;
  r.reward = reward;
  r.info.population = reward;
  r.done = done();
  r.observation = observe();
  return r;
}

std::size_t Environment::inject_human_action(int action, bool force, std::optional<Tile> tile) {
  check_action(action);
  return queue_.push(HumanAction{action, force, tile});
}

json Environment::save_state() const {
  return json{{"board", board_text()},
              {"started", started_},
              {"step", step_},
              {"episode_return", episode_return_},
              {"episodes", episodes_}};
}

void Environment::load_state(const json& j) {
  load_board_text(j.at("board").get<std::string>());
  started_ = j.at("started").get<bool>();
  step_ = j.at("step").get<int>();
  episode_return_ = j.at("episode_return").get<double>();
  episodes_ = j.at("episodes").get<std::uint64_t>();
}

// ---------------------------------------------------------------- Game of Life

GolEnvironment::GolEnvironment(EnvConfig config)
    : Environment(config), board_(config.map_width, config.map_height) {
  if (config.game != Game::GameOfLife) throw std::invalid_argument("config is not a GoL config");
}

void GolEnvironment::reset_board(std::uint64_t episode_seed) {
  Rng rng(episode_seed);
  board_ = random_gol_init(rng, width(), height(), config().init_alive_prob);
}

Observation GolEnvironment::load_board(GolBoard board) {
  if (board.width() != width() || board.height() != height())
    throw std::invalid_argument("board dimensions do not match the environment");
  board_ = std::move(board);
  begin_episode();
  return observe();
}

void GolEnvironment::load_board_text(const std::string& text) {
  GolBoard b = gol_from_text(text);
  if (b.width() != width() || b.height() != height())
    throw std::invalid_argument("saved board dimensions do not match the environment");
  board_ = std::move(b);
}

void GolEnvironment::apply_agent_action(int action) {
  board_.set(action % width(), action / width(), true);
}

void GolEnvironment::apply_human_action(const HumanAction& a) {
  const bool kill = a.tile && *a.tile == Tile::Empty;
  if (kill && !a.force) return;  // unforced "build nothing" is a no-op
  board_.set(a.action % width(), a.action / width(), !kill);
}

int GolEnvironment::advance() {
  board_ = gol_step(board_);
  return count_alive(board_);
}

// ---------------------------------------------------------------- Power Puzzle

PowerPuzzleEnvironment::PowerPuzzleEnvironment(EnvConfig config)
    : Environment(config),
      board_(make_puzzle_board(TileGrid(config.map_width, config.map_height))) {
  if (config.game != Game::PowerPuzzle)
    throw std::invalid_argument("config is not a PowerPuzzle config");
}

void PowerPuzzleEnvironment::reset_board(std::uint64_t episode_seed) {
  Rng rng(episode_seed);
  board_ = random_power_layout(rng, width(), height(), config().zone_range);
}

Observation PowerPuzzleEnvironment::load_board(PuzzleBoard board) {
  if (board.width() != width() || board.height() != height())
    throw std::invalid_argument("board dimensions do not match the environment");
  board_ = std::move(board);
  refresh_power(board_);
  begin_episode();
  return observe();
}

void PowerPuzzleEnvironment::load_board_text(const std::string& text) {
  TileGrid t = tiles_from_text(text);
  if (t.width() != width() || t.height() != height())
    throw std::invalid_argument("saved board dimensions do not match the environment");
  board_ = make_puzzle_board(std::move(t));
}

bool PowerPuzzleEnvironment::all_zones_powered() const {
  for (std::size_t i = 0; i < board_.tiles.size(); ++i)
    if (board_.tiles.cells()[i] == Tile::Residential && !board_.powered.cells()[i]) return false;
  return true;
}

void PowerPuzzleEnvironment::apply_agent_action(int action) {
  place_inplace(board_, {action % width(), action / width()}, Tile::Wire);
}

void PowerPuzzleEnvironment::apply_human_action(const HumanAction& a) {
  const Coord at{a.action % width(), a.action / width()};
  const Tile tile = a.tile.value_or(Tile::Wire);
  if (a.force)
    force_place_inplace(board_, at, tile);
  else
    place_inplace(board_, at, tile);
}

int PowerPuzzleEnvironment::advance() { return count_powered_residential(board_); }

// ---------------------------------------------------------------- factory

std::unique_ptr<Environment> make_environment(const EnvConfig& config) {
  config.validate();
  if (config.game == Game::GameOfLife) return std::make_unique<GolEnvironment>(config);
  return std::make_unique<PowerPuzzleEnvironment>(config);
}

int observation_channels(Game game) {
  return game == Game::GameOfLife ? 1 : puzzle_channel::kCount;
}

}  // namespace gymgrid
