#include "gymgrid/session.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "gymgrid/checkpoint.hpp"
#include "gymgrid/nn/ops.hpp"
#include "gymgrid/nn/sampling.hpp"

namespace gymgrid {

using nlohmann::json;

int port_from_environment() {
  const char* v = std::getenv("GYMGRID_PORT");
  if (!v || !*v) return kDefaultPort;
  char* end = nullptr;
  const long p = std::strtol(v, &end, 10);
  if (*end != '\0' || p < 0 || p > 65535) return kDefaultPort;
  return static_cast<int>(p);
}

std::string session_mode_name(SessionMode m) {
  switch (m) {
    case SessionMode::Training: return "training";
    case SessionMode::Inference: return "inference";
    case SessionMode::Paused: return "paused";
  }
  return "unknown";
}

namespace {

json error_frame(const std::string& msg) { return {{"v", kProtocolVersion}, {"type", "error"}, {"msg", msg}}; }

json split_rows(const std::string& text) {
  json rows = json::array();
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) rows.push_back(line);
  return rows;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::optional<Tile> parse_tile(Game game, const std::string& name) {
  const std::string n = lower(name);
  if (n == "empty") return Tile::Empty;
  if (game == Game::GameOfLife) {
    if (n == "cell" || n == "alive" || n == "wire") return Tile::Wire;
    return std::nullopt;
  }
  if (n == "wire") return Tile::Wire;
  if (n == "residential") return Tile::Residential;
  if (n == "plant" || n == "powerplant" || n == "power_plant") return Tile::PowerPlant;
  return std::nullopt;
}

}  // namespace

SessionCore::SessionCore(SessionConfig config)
    : config_(std::move(config)), rng_(derive_seed(config_.seed, 0x73657373)), speed_(config_.speed) {
  if (config_.speed < 0) throw std::invalid_argument("speed must be non-negative");
  std::optional<Checkpoint> ckpt;
  if (config_.checkpoint) {
    ckpt = load_checkpoint(*config_.checkpoint);
    config_.spec = ckpt->spec;
  }
  config_.env.validate();
  if (config_.spec.input_channels != observation_channels(config_.env.game))
    throw std::invalid_argument("model input channels do not match " + game_name(config_.env.game));
  if (config_.training) {
    trainer_ = std::make_unique<Trainer>(config_.train, config_.env, config_.spec);
    if (ckpt) restore(trainer_->mutable_model(), *ckpt);
  } else {
    model_ = std::make_unique<PolicyModel<float>>(config_.spec);
    if (ckpt) restore(*model_, *ckpt);
    env_ = make_environment(config_.env);
    env_->reset();
    // Fail early (e.g. FullyConv off its bound size) rather than on the loop thread.
    nn::NoGradGuard guard;
    const Observation o = env_->observe();
    model_->forward(nn::Var<float>::constant(
        nn::Tensor<float>(nn::Shape{1, o.channels, o.height, o.width}, o.data)));
  }
  publish(0.0);
}

SessionCore::~SessionCore() { stop(); }

Environment& SessionCore::interactive_env() { return trainer_ ? trainer_->interactive_env() : *env_; }

SessionMode SessionCore::mode() const {
  std::lock_guard lock(mu_);
  if (paused_) return SessionMode::Paused;
  return trainer_ ? SessionMode::Training : SessionMode::Inference;
}

double SessionCore::speed() const {
  std::lock_guard lock(mu_);
  return speed_;
}

std::shared_ptr<const Snapshot> SessionCore::latest() const {
  std::lock_guard lock(mu_);
  return latest_;
}

void SessionCore::on_publish(std::function<void(std::shared_ptr<const Snapshot>)> fn) {
  std::lock_guard lock(mu_);
  on_publish_ = std::move(fn);
}

void SessionCore::start() {
  std::lock_guard lock(mu_);
  if (running_) return;
  running_ = true;
  thread_ = std::thread([this] { loop(); });
}

void SessionCore::stop() {
  {
    std::lock_guard lock(mu_);
    running_ = false;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void SessionCore::loop() {
  using clock = std::chrono::steady_clock;
  auto next = clock::now();
  for (;;) {
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return !running_ || !paused_; });
      if (!running_) return;
    }
    step_once();
    std::unique_lock lock(mu_);
    if (speed_ > 0) {
      next += std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / speed_));
      const auto now = clock::now();
      if (next < now) next = now;
      cv_.wait_until(lock, next, [&] { return !running_; });
    } else {
      next = clock::now();
    }
    if (!running_) return;
  }
}

void SessionCore::step_once() {
  std::lock_guard step_lock(step_mu_);
  bool reset = false;
  {
    std::lock_guard lock(mu_);
    std::swap(reset, reset_requested_);
  }
  Environment& env = interactive_env();
  if (reset) {
    env.reset();
    publish(0.0);
    return;
  }
  advance();
}

void SessionCore::advance() {
  Environment& env = interactive_env();
  if (trainer_) {
    trainer_->update();
    const auto& b = trainer_->last_batch();
    {
      std::lock_guard lock(mu_);
      step_ += static_cast<std::uint64_t>(b.n_steps);
    }
    publish(b.rewards[b.index(b.n_steps - 1, 0)]);
    return;
  }
  if (env.done()) env.reset();
  const Observation o = env.observe();
  int action = 0;
  {
    nn::NoGradGuard guard;
    const auto out = model_->forward(nn::Var<float>::constant(
        nn::Tensor<float>(nn::Shape{1, o.channels, o.height, o.width}, o.data)));
    const auto probs = nn::softmax(out.logits);
    const std::span<const float> row(probs.value().vec());
    action = config_.deterministic ? nn::argmax(row) : nn::sample_categorical(row, rng_);
  }
  const StepResult r = env.step(action);
  {
    std::lock_guard lock(mu_);
    ++step_;
  }
  publish(r.reward, &r.info);
}

void SessionCore::publish(double reward, const StepInfo* info) {
  Environment& env = interactive_env();
  auto snap = std::make_shared<Snapshot>();
  {
    std::lock_guard lock(mu_);
    snap->step = step_;
  }
  json s = {{"v", kProtocolVersion},
            {"type", "state"},
            {"step", snap->step},
            {"episode", env.episodes_started()},
            {"episode_step", env.step_index()},
            {"board", split_rows(env.board_text())},
            {"reward", reward},
            {"episode_return", env.episode_return()},
            {"human_queue_depth", env.human_queue_depth()}};
  if (info) {
    s["human_substituted"] = info->human_substituted;
    s["action"] = {info->applied_action % env.width(), info->applied_action / env.width()};
  }
  if (const auto* p = dynamic_cast<const PowerPuzzleEnvironment*>(&env)) {
    json rows = json::array();
    const auto& m = p->board().powered;
    for (int y = 0; y < m.height(); ++y) {
      std::string row;
      for (int x = 0; x < m.width(); ++x) row.push_back(m(x, y) ? '1' : '0');
      rows.push_back(row);
    }
    s["powered"] = rows;
  }
  snap->state = std::move(s);
  if (trainer_) {
    const auto& l = trainer_->last_loss();
    const double mr = trainer_->recent_mean_return();
    snap->metrics = json{{"v", kProtocolVersion},
                         {"type", "metrics"},
                         {"frame", trainer_->frames()},
                         {"updates", trainer_->updates()},
                         {"mean_return", std::isfinite(mr) ? json(mr) : json(nullptr)},
                         {"policy_loss", l.policy},
                         {"value_loss", l.value},
                         {"entropy", l.entropy}};
  }
  std::function<void(std::shared_ptr<const Snapshot>)> cb;
  std::shared_ptr<const Snapshot> published = snap;
  {
    std::lock_guard lock(mu_);
    latest_ = published;
    cb = on_publish_;
  }
  if (cb) cb(published);
}

json SessionCore::session_state() const {
  auto snap = latest();
  json s = snap->state;
  s.erase("type");
  s["v"] = kProtocolVersion;
  s["mode"] = session_mode_name(mode());
  s["speed"] = speed();
  s["game"] = game_name(config_.env.game);
  s["width"] = config_.env.map_width;
  s["height"] = config_.env.map_height;
  json model = to_json(config_.spec);
  if (config_.checkpoint) model["checkpoint"] = config_.checkpoint->string();
  s["model"] = model;
  if (snap->metrics) {
    s["frame"] = snap->metrics->at("frame");
    s["updates"] = snap->metrics->at("updates");
    s["mean_return"] = snap->metrics->at("mean_return");
  }
  return s;
}

std::optional<json> SessionCore::handle_message(const std::string& text) {
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::exception&) {
    return error_frame("malformed JSON");
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
    return error_frame("message needs a string 'type'");
  if (msg.contains("v") && msg["v"] != kProtocolVersion) return error_frame("unsupported protocol version");
  const std::string type = msg["type"];
  if (type == "control") {
    json err = handle_control(msg);
    if (err.is_null()) return std::nullopt;
    return err;
  }
  if (type != "build") return error_frame("unknown message type '" + type + "'");

  const auto& env_cfg = config_.env;
  if (!msg.contains("x") || !msg.contains("y") || !msg["x"].is_number_integer() || !msg["y"].is_number_integer())
    return error_frame("build needs integer x and y");
  const int x = msg["x"];
  const int y = msg["y"];
  if (x < 0 || y < 0 || x >= env_cfg.map_width || y >= env_cfg.map_height)
    return error_frame("build position outside the board");
  bool force = false;
  if (msg.contains("force")) {
    if (!msg["force"].is_boolean()) return error_frame("force must be a boolean");
    force = msg["force"];
  }
  std::optional<Tile> tile;
  if (msg.contains("tile")) {
    if (!msg["tile"].is_string()) return error_frame("tile must be a string");
    tile = parse_tile(env_cfg.game, msg["tile"]);
    if (!tile) return error_frame("unknown tile '" + msg["tile"].get<std::string>() + "'");
  }
  interactive_env().inject_human_action(y * env_cfg.map_width + x, force, tile);
  return std::nullopt;
}

json SessionCore::handle_control(const json& msg) {
  if (!msg.contains("cmd") || !msg["cmd"].is_string()) return error_frame("control needs a string 'cmd'");
  const std::string cmd = msg["cmd"];
  std::lock_guard lock(mu_);
  if (cmd == "pause") {
    paused_ = true;
  } else if (cmd == "resume") {
    paused_ = false;
  } else if (cmd == "speed") {
    if (!msg.contains("value") || !msg["value"].is_number()) return error_frame("speed needs a numeric value");
    const double v = msg["value"];
    if (!(v >= 0)) return error_frame("speed must be non-negative");
    speed_ = v;
  } else if (cmd == "reset") {
    reset_requested_ = true;
  } else {
    return error_frame("unknown control command '" + cmd + "'");
  }
  cv_.notify_all();
  return nullptr;
}

}  // namespace gymgrid
