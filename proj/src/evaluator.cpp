#include "gymgrid/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "gymgrid/nn/ops.hpp"
#include "gymgrid/nn/sampling.hpp"

namespace gymgrid {

using nlohmann::json;

namespace {

constexpr std::uint64_t kActionStream = 0x616374;  // "act"

void finish(EvalReport& r) {
  const double n = static_cast<double>(r.returns.size());
  double sum = 0.0;
  for (double v : r.returns) sum += v;
  r.mean = n > 0 ? sum / n : 0.0;
  double sq = 0.0;
  for (double v : r.returns) sq += (v - r.mean) * (v - r.mean);
  r.std = n > 0 ? std::sqrt(sq / n) : 0.0;
}

EvalReport blank_report(const EnvConfig& env, int column, bool deterministic) {
  EvalReport r;
  r.game = env.game;
  r.width = env.map_width;
  r.height = env.map_height;
  r.column = column;
  r.deterministic = deterministic;
  r.init_alive_prob = env.init_alive_prob;
  return r;
}

bool connected(const Environment& e) {
  const auto* p = dynamic_cast<const PowerPuzzleEnvironment*>(&e);
  return p && p->all_zones_powered();
}

// Runs episodes in lockstep groups. `choose` fills one action per live env.
template <typename Choose>
EvalReport run_episodes(const EnvConfig& env, int episodes, int batch, std::uint64_t seed,
                        EvalReport report, Choose&& choose) {
  if (episodes < 1) throw std::invalid_argument("episodes must be at least 1");
  batch = std::max(1, batch);
  int connected_count = 0;
  for (int first = 0; first < episodes; first += batch) {
    const int count = std::min(batch, episodes - first);
    std::vector<std::unique_ptr<Environment>> envs;
    std::vector<Observation> obs;
    for (int i = 0; i < count; ++i) {
      envs.push_back(make_environment(env));
      obs.push_back(envs.back()->reset(derive_seed(seed, static_cast<std::uint64_t>(first + i))));
    }
    std::vector<int> actions(static_cast<std::size_t>(count));
    while (!envs.front()->done()) {
      choose(obs, actions);
      for (int i = 0; i < count; ++i) obs[i] = envs[i]->step(actions[i]).observation;
    }
    for (const auto& e : envs) {
      report.returns.push_back(e->episode_return());
      if (connected(*e)) ++connected_count;
    }
  }
  if (env.game == Game::PowerPuzzle)
    report.connection_rate = static_cast<double>(connected_count) / episodes;
  finish(report);
  return report;
}

}  // namespace

json to_json(const EvalReport& r) {
  json j = {{"v", 1},
            {"game", game_name(r.game)},
            {"width", r.width},
            {"height", r.height},
            {"column", r.column},
            {"deterministic", r.deterministic},
            {"episodes", r.returns.size()},
            {"mean", r.mean},
            {"std", r.std},
            {"returns", r.returns}};
  if (r.game == Game::GameOfLife) j["init_alive_prob"] = r.init_alive_prob;
  if (r.connection_rate) j["connection_rate"] = *r.connection_rate;
  return j;
}

EvalReport evaluate(const PolicyModel<float>& model, const EnvConfig& env, const EvalOptions& options) {
  env.validate();
  if (model.spec().input_channels != observation_channels(env.game))
    throw std::invalid_argument("model expects " + std::to_string(model.spec().input_channels) +
                                " input channels, " + game_name(env.game) + " provides " +
                                std::to_string(observation_channels(env.game)));
  Rng rng(derive_seed(options.seed, kActionStream));
  const ForwardMode mode = EvalMode{options.column};
  auto choose = [&](const std::vector<Observation>& obs, std::vector<int>& actions) {
    const auto& o0 = obs.front();
    const nn::Shape shape{static_cast<int>(obs.size()), o0.channels, o0.height, o0.width};
    std::vector<float> data;
    data.reserve(shape.size());
    for (const auto& o : obs) data.insert(data.end(), o.data.begin(), o.data.end());
    nn::NoGradGuard guard;
    const auto out = model.forward(nn::Var<float>::constant(nn::Tensor<float>(shape, std::move(data))), mode);
    const auto probs = nn::softmax(out.logits);
    const auto& p = probs.value();
    const std::size_t per = p.shape().sample_size();
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const std::span<const float> row(p.vec().data() + i * per, per);
      actions[i] = options.deterministic ? nn::argmax(row) : nn::sample_categorical(row, rng);
    }
  };
  return run_episodes(env, options.episodes, options.batch, options.seed,
                      blank_report(env, options.column, options.deterministic), choose);
}

EvalReport random_baseline(const EnvConfig& env, int episodes, std::uint64_t seed) {
  env.validate();
  Rng rng(derive_seed(seed, kActionStream));
  const auto n = static_cast<std::uint64_t>(env.map_width) * static_cast<std::uint64_t>(env.map_height);
  auto choose = [&](const std::vector<Observation>&, std::vector<int>& actions) {
    for (auto& a : actions) a = static_cast<int>(rng.below(n));
  };
  return run_episodes(env, episodes, 16, seed, blank_report(env, -1, false), choose);
}

std::vector<EvalReport> scale_sweep(const PolicyModel<float>& model, const EnvConfig& base,
                                    const std::vector<int>& sizes, const EvalOptions& options,
                                    const std::map<int, double>& alive_prob) {
  std::vector<EvalReport> out;
  for (int size : sizes) {
    EnvConfig cfg = base;
    cfg.map_width = size;
    cfg.map_height = size;
    if (auto it = alive_prob.find(size); it != alive_prob.end()) cfg.init_alive_prob = it->second;
    out.push_back(evaluate(model, cfg, options));
  }
  return out;
}

}  // namespace gymgrid
