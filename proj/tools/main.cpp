#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gymgrid/checkpoint.hpp"
#include "gymgrid/evaluator.hpp"
#include "gymgrid/oracle.hpp"
#include "gymgrid/session.hpp"
#include "gymgrid/trainer.hpp"
#include "selfcheck.hpp"

using namespace gymgrid;
using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// A run config is {"env": {...}, "model": {...}, "train": {...}}; every
// section is optional.
struct RunConfig {
  EnvConfig env;
  ModelSpec model;
  TrainConfig train;
};

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  json j = path.empty() ? json::object() : read_json_file(path);
  for (const auto& [k, _] : j.items())
    if (k != "env" && k != "model" && k != "train")
      throw std::invalid_argument("config: unknown section '" + k + "'");
  if (j.contains("env")) rc.env = env_config_from_json(j["env"]);
  json model = j.value("model", json::object());
  if (!model.contains("input_channels")) model["input_channels"] = observation_channels(rc.env.game);
  rc.model = model_spec_from_json(model);
  if (j.contains("train")) rc.train = train_config_from_json(j["train"]);
  return rc;
}

struct Overrides {
  std::optional<std::string> game;
  std::optional<int> size;
  std::optional<double> alive_prob;
  std::optional<int> max_steps;
  std::optional<std::string> architecture;
  std::optional<std::string> sharing;
  std::optional<long long> total_frames;
  std::optional<int> num_envs;
  std::optional<std::uint64_t> seed;

  void add_env(CLI::App* app) {
    app->add_option("--game", game, "GoL or PowerPuzzle");
    app->add_option("--size", size, "Square map size");
    app->add_option("--alive-prob", alive_prob, "Game of Life initial density");
    app->add_option("--max-steps", max_steps, "Episode length");
  }
  void add_train(CLI::App* app) {
    app->add_option("--architecture", architecture, "FullyConv, StrictlyConv or Fractal");
    app->add_option("--sharing", sharing, "NoShare, IntraColumn or InterColumn");
    app->add_option("--total-frames", total_frames, "Training budget in frames");
    app->add_option("--num-envs", num_envs, "Parallel environments");
    app->add_option("--seed", seed, "Seed for training and environments");
  }
  void apply(RunConfig& rc) const {
    if (game) {
      rc.env.game = game_from_name(*game);
      rc.model.input_channels = observation_channels(rc.env.game);
    }
    if (size) rc.env.map_width = rc.env.map_height = *size;
    if (alive_prob) rc.env.init_alive_prob = *alive_prob;
    if (max_steps) rc.env.max_steps = *max_steps;
    if (architecture) rc.model.architecture = architecture_from_name(*architecture);
    if (sharing) rc.model.sharing = sharing_from_name(*sharing);
    if (size && rc.model.architecture == Architecture::FullyConv)
      rc.model.input_width = rc.model.input_height = *size;
    if (total_frames) rc.train.total_frames = *total_frames;
    if (num_envs) rc.train.num_envs = *num_envs;
    if (seed) {
      rc.train.seed = *seed;
      rc.env.seed = *seed;
    }
    rc.env.validate();
    rc.model.validate();
    rc.train.validate();
  }
};

// Env config stored by the trainer, or one inferred from the model inputs.
EnvConfig env_for_checkpoint(const Checkpoint& c) {
  if (c.extra.contains("env_config")) return env_config_from_json(c.extra["env_config"]);
  EnvConfig env;
  env.game = c.spec.input_channels == observation_channels(Game::PowerPuzzle) ? Game::PowerPuzzle
                                                                               : Game::GameOfLife;
  return env;
}

void append_eval_rows(const std::string& csv_path, const Checkpoint& c, const std::vector<EvalReport>& reports) {
  const bool fresh = !std::filesystem::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::app);
  if (!csv) throw std::runtime_error("cannot open " + csv_path);
  if (fresh) csv << kMetricsHeader << '\n';
  const long long frame = c.extra.value("frames", 0LL);
  const long long updates = c.extra.value("updates", 0LL);
  for (const auto& r : reports) csv << frame << ',' << updates << ',' << r.mean << ",,,,," << r.column << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gymgrid: multi-scale reinforcement learning on cellular grid games"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train an A2C agent");
  std::string train_config, train_out = "runs/latest", resume;
  Overrides train_ov;
  train->add_option("--config", train_config, "Run config JSON ({env, model, train})");
  train->add_option("--out", train_out, "Output directory")->capture_default_str();
  train->add_option("--resume", resume, "Checkpoint directory to continue from");
  train_ov.add_env(train);
  train_ov.add_train(train);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_metrics;
  std::optional<int> eval_size;
  std::optional<double> eval_alive;
  int eval_episodes = 100, eval_column = -1;
  bool eval_det = false, eval_all_columns = false, eval_baseline = false;
  std::vector<int> eval_sweep;
  std::uint64_t eval_seed = EvalOptions{}.seed;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required();
  eval->add_option("--size", eval_size, "Square map size");
  eval->add_option("--episodes", eval_episodes, "Episodes per report")->capture_default_str();
  eval->add_option("--column", eval_column, "Fractal column, -1 for the whole network")->capture_default_str();
  eval->add_flag("--deterministic", eval_det, "Argmax actions instead of sampling");
  eval->add_flag("--all-columns", eval_all_columns, "Report column -1 and every fractal column");
  eval->add_option("--sweep", eval_sweep, "Evaluate at each of these sizes")->delimiter(',');
  eval->add_option("--alive-prob", eval_alive, "Game of Life initial density");
  eval->add_flag("--baseline", eval_baseline, "Also report a uniform random policy");
  eval->add_option("--seed", eval_seed, "Episode seed")->capture_default_str();
  eval->add_option("--metrics", eval_metrics, "Append reports to this metrics CSV");

  // play
  auto* play = app.add_subcommand("play", "Serve a live session for the browser client");
  std::string play_ckpt, play_config, play_static = "web", play_bind = "0.0.0.0";
  std::optional<int> play_port;
  double play_speed = 10.0;
  bool play_train = false, play_stochastic = false;
  Overrides play_ov;
  play->add_option("--checkpoint", play_ckpt, "Checkpoint directory (fresh weights when omitted)");
  play->add_option("--config", play_config, "Run config JSON ({env, model, train})");
  play->add_option("--port", play_port, "Port (default GYMGRID_PORT or 8080)");
  play->add_option("--bind", play_bind, "Bind address")->capture_default_str();
  play->add_option("--speed", play_speed, "State frames per second, 0 for uncapped")->capture_default_str();
  play->add_option("--static-dir", play_static, "Directory of client assets")->capture_default_str();
  play->add_flag("--train", play_train, "Train while playing instead of pure inference");
  play->add_flag("--stochastic", play_stochastic, "Sample actions instead of argmax");
  play_ov.add_env(play);
  play_ov.add_train(play);

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Plan wires for a Power Puzzle board file");
  std::string board_file;
  int horizon = 100;
  bool brute = false;
  oracle->add_option("board", board_file, "Board text file (. W R P rows)")->required();
  oracle->add_option("--horizon", horizon, "Episode length")->capture_default_str();
  oracle->add_flag("--brute-force", brute, "Exhaustive search over zone orders and wire routes (small boards)");

  // selfcheck
  auto* selfcheck = app.add_subcommand("selfcheck", "Run the built-in invariant checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      if (!resume.empty()) {
        if (!train_config.empty()) std::cerr << "note: --config is ignored when resuming\n";
        Trainer t = Trainer::resume(resume);
        std::cout << "resuming at frame " << t.frames() << '\n';
        t.run(train_out);
        std::cout << "finished at frame " << t.frames() << ", checkpoint " << train_out << "/final\n";
        return 0;
      }
      RunConfig rc = load_run_config(train_config);
      train_ov.apply(rc);
      Trainer t(rc.train, rc.env, rc.model);
      t.run(train_out);
      std::cout << "finished at frame " << t.frames() << ", mean return " << t.recent_mean_return()
                << ", checkpoint " << train_out << "/final\n";
      return 0;
    }

    if (*eval) {
      const Checkpoint c = load_checkpoint(eval_ckpt);
      PolicyModel<float> model(c.spec);
      restore(model, c);
      EnvConfig env = env_for_checkpoint(c);
      if (eval_size) env.map_width = env.map_height = *eval_size;
      if (eval_alive) env.init_alive_prob = *eval_alive;
      EvalOptions opts;
      opts.episodes = eval_episodes;
      opts.deterministic = eval_det;
      opts.seed = eval_seed;
      std::vector<int> columns{eval_column};
      if (eval_all_columns) {
        columns = {-1};
        if (c.spec.architecture == Architecture::Fractal)
          for (int k = 0; k < c.spec.n_expansions; ++k) columns.push_back(k);
      }
      std::vector<int> sizes = eval_sweep.empty() ? std::vector<int>{env.map_width} : eval_sweep;
      std::vector<EvalReport> reports;
      json out = json::array();
      for (int size : sizes) {
        EnvConfig e = env;
        e.map_width = e.map_height = size;
        for (int col : columns) {
          opts.column = col;
          reports.push_back(evaluate(model, e, opts));
          out.push_back(to_json(reports.back()));
        }
        if (eval_baseline) {
          json b = to_json(random_baseline(e, eval_episodes, eval_seed));
          b["policy"] = "random";
          out.push_back(b);
        }
      }
      if (!eval_metrics.empty()) append_eval_rows(eval_metrics, c, reports);
      std::cout << (out.size() == 1 ? out[0] : out).dump(2) << '\n';
      return 0;
    }

    if (*play) {
      RunConfig rc = load_run_config(play_config);
      play_ov.apply(rc);
      SessionConfig sc;
      sc.env = rc.env;
      sc.spec = rc.model;
      sc.train = rc.train;
      if (!play_ckpt.empty()) {
        sc.checkpoint = play_ckpt;
        const Checkpoint c = load_checkpoint(play_ckpt);
        if (!play_ov.game) sc.env.game = env_for_checkpoint(c).game;
      }
      sc.training = play_train;
      sc.deterministic = !play_stochastic;
      sc.speed = play_speed;
      sc.port = play_port ? *play_port : port_from_environment();
      sc.bind_address = play_bind;
      sc.static_dir = play_static;
      return serve(sc);
    }

    if (*oracle) {
      const PuzzleBoard board = make_puzzle_board(tiles_from_text(read_text_file(board_file)));
      const WirePlan plan = brute ? brute_force_optimal(board, horizon) : nearest_first_plan(board, horizon);
      std::cout << to_json(plan).dump() << '\n';
      return 0;
    }

    if (*selfcheck) return run_selfcheck(std::cout) ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
