#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "gymgrid/environment.hpp"
#include "gymgrid/models.hpp"
#include "gymgrid/trainer.hpp"

namespace gymgrid {

inline constexpr int kProtocolVersion = 1;
inline constexpr int kDefaultPort = 8080;

/// GYMGRID_PORT if set and valid, otherwise 8080.
int port_from_environment();

enum class SessionMode { Training, Inference, Paused };
std::string session_mode_name(SessionMode m);

struct SessionConfig {
  EnvConfig env;
  ModelSpec spec;
  /// Weights for inference (and the starting point for training). Without one
  /// the model is freshly initialised from `spec`.
  std::optional<std::filesystem::path> checkpoint;
  bool training = false;
  TrainConfig train;
  /// Inference picks argmax actions when true, samples otherwise.
  bool deterministic = true;
  /// Cap on loop iterations (state frames) per second; 0 removes the cap.
  double speed = 10.0;
  std::uint64_t seed = 0;
  int port = kDefaultPort;
  std::string bind_address = "0.0.0.0";
  std::filesystem::path static_dir = "web";
};

/// What a client receives for one loop iteration.
struct Snapshot {
  std::uint64_t step = 0;
  nlohmann::json state;                  // {"type":"state", ...}
  std::optional<nlohmann::json> metrics;  // training only
};

/// Owns the environments and model. One loop thread advances them; any thread
/// may send commands or read the latest snapshot.
class SessionCore {
 public:
  explicit SessionCore(SessionConfig config);
  ~SessionCore();
  SessionCore(const SessionCore&) = delete;
  SessionCore& operator=(const SessionCore&) = delete;

  void start();
  void stop();

  /// One loop iteration on the caller's thread (inference: one env step;
  /// training: one update). Not to be mixed with a running loop.
  void step_once();

  /// Parses and applies a client message. Returns an error frame when the
  /// message is rejected.
  std::optional<nlohmann::json> handle_message(const std::string& text);

  std::shared_ptr<const Snapshot> latest() const;
  /// SessionState for GET /api/session.
  nlohmann::json session_state() const;

  SessionMode mode() const;
  double speed() const;
  const SessionConfig& config() const noexcept { return config_; }
  Environment& interactive_env();

  /// Invoked on the loop thread after each snapshot is published.
  void on_publish(std::function<void(std::shared_ptr<const Snapshot>)> fn);

 private:
  void loop();
  void advance();
  void publish(double reward, const StepInfo* info = nullptr);
  nlohmann::json handle_control(const nlohmann::json& msg);

  SessionConfig config_;
  std::unique_ptr<Trainer> trainer_;
  std::unique_ptr<PolicyModel<float>> model_;
  std::unique_ptr<Environment> env_;
  Rng rng_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool paused_ = false;
  bool running_ = false;
  bool reset_requested_ = false;
  double speed_;
  std::uint64_t step_ = 0;
  std::shared_ptr<const Snapshot> latest_;
  std::function<void(std::shared_ptr<const Snapshot>)> on_publish_;
  std::mutex step_mu_;
  std::thread thread_;
};

/// HTTP + WebSocket front end for a SessionCore.
///   GET /api/session  -> SessionState JSON
///   GET /ws           -> WebSocket (ServerMessage frames out, ClientMessage in)
///   GET /<file>       -> static assets from static_dir
class SessionServer {
 public:
  /// Binds immediately; throws std::runtime_error if the port is unavailable.
  SessionServer(SessionCore& core, const std::string& address, int port,
                std::filesystem::path static_dir);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// Actual bound port (useful with port 0).
  int port() const noexcept;
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs a session until SIGINT/SIGTERM.
int serve(const SessionConfig& config);

}  // namespace gymgrid
