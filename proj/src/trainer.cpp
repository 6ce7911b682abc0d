#include "gymgrid/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "gymgrid/evaluator.hpp"
#include "gymgrid/nn/ops.hpp"
#include "gymgrid/nn/sampling.hpp"

namespace gymgrid {

using nlohmann::json;

namespace {

constexpr std::size_t kRecentWindow = 100;
constexpr std::uint64_t kTrainerStream = 0x747261696e;  // "train"

template <typename V>
void read_field(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

nn::Var<float> batch_constant(std::vector<float> values, int n) {
  return nn::Var<float>::constant(nn::Tensor<float>(nn::Shape{n, 1, 1, 1}, std::move(values)));
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream s;
  s.precision(9);
  s << v;
  return s.str();
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (num_envs < 1) fail("num_envs must be at least 1");
  if (n_steps < 1) fail("n_steps must be at least 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
  if (total_frames < frames_per_update()) fail("total_frames must be at least num_envs * n_steps");
  if (value_coef < 0 || entropy_coef < 0) fail("loss coefficients must be non-negative");
  if (checkpoint_interval < 0 || eval_interval < 0 || log_interval < 0)
    fail("intervals must be non-negative");
  if (eval_episodes < 1) fail("eval_episodes must be at least 1");
  if (!(reward_scale > 0.0)) fail("reward_scale must be positive");
  if (!(optimizer.learning_rate > 0.0)) fail("learning_rate must be positive");
}

json to_json(const TrainConfig& c) {
  return {{"num_envs", c.num_envs},
          {"n_steps", c.n_steps},
          {"gamma", c.gamma},
          {"value_coef", c.value_coef},
          {"entropy_coef", c.entropy_coef},
          {"total_frames", c.total_frames},
          {"checkpoint_interval", c.checkpoint_interval},
          {"eval_interval", c.eval_interval},
          {"eval_episodes", c.eval_episodes},
          {"log_interval", c.log_interval},
          {"seed", c.seed},
          {"optimizer", nn::to_json(c.optimizer)},
          {"normalize_advantages", c.normalize_advantages},
          {"reward_scale", c.reward_scale}};
}

TrainConfig train_config_from_json(const json& j) {
  static const std::vector<std::string> known{
      "num_envs",      "n_steps",      "gamma",        "value_coef",
      "entropy_coef",  "total_frames", "checkpoint_interval", "eval_interval",
      "eval_episodes", "log_interval", "seed",         "optimizer",
      "normalize_advantages", "reward_scale"};
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw std::invalid_argument("train config: unknown field '" + k + "'");
  TrainConfig c;
  read_field(j, "num_envs", c.num_envs);
  read_field(j, "n_steps", c.n_steps);
  read_field(j, "gamma", c.gamma);
  read_field(j, "value_coef", c.value_coef);
  read_field(j, "entropy_coef", c.entropy_coef);
  read_field(j, "total_frames", c.total_frames);
  read_field(j, "checkpoint_interval", c.checkpoint_interval);
  read_field(j, "eval_interval", c.eval_interval);
  read_field(j, "eval_episodes", c.eval_episodes);
  read_field(j, "log_interval", c.log_interval);
  read_field(j, "seed", c.seed);
  read_field(j, "normalize_advantages", c.normalize_advantages);
  read_field(j, "reward_scale", c.reward_scale);
  if (j.contains("optimizer")) c.optimizer = nn::rmsprop_config_from_json(j.at("optimizer"));
  c.validate();
  return c;
}

// ---------------------------------------------------------------- rollout

RolloutBatch collect_rollout(std::vector<std::unique_ptr<Environment>>& envs,
                             const PolicyModel<float>& model, int n_steps, Rng& rng) {
  if (envs.empty()) throw std::invalid_argument("collect_rollout needs at least one environment");
  if (n_steps < 1) throw std::invalid_argument("n_steps must be at least 1");
  for (std::size_t e = 0; e < envs.size(); ++e)
    if (!envs[e]->started())
      throw std::logic_error("environment " + std::to_string(e) + " was never reset");

  RolloutBatch b;
  b.n_steps = n_steps;
  b.num_envs = static_cast<int>(envs.size());
  b.channels = envs[0]->observation_channels();
  b.height = envs[0]->height();
  b.width = envs[0]->width();
  const std::size_t obs_size = static_cast<std::size_t>(b.channels) * b.height * b.width;
  const std::size_t total = b.transitions();
  b.observations.reserve(total * obs_size);
  b.actions.resize(total);
  b.rewards.resize(total);
  b.values.resize(total);
  b.dones.resize(total);
  b.human_substituted.resize(total);

  auto forward_current = [&](std::vector<float>& step_obs) {
    step_obs.clear();
    for (const auto& env : envs) {
      const Observation o = env->observe();
      step_obs.insert(step_obs.end(), o.data.begin(), o.data.end());
    }
    nn::NoGradGuard guard;
    const nn::Shape shape{b.num_envs, b.channels, b.height, b.width};
    return model.forward(nn::Var<float>::constant(nn::Tensor<float>(shape, step_obs)), EvalMode{});
  };

  std::vector<float> step_obs;
  for (int t = 0; t < n_steps; ++t) {
    const auto out = forward_current(step_obs);
    b.observations.insert(b.observations.end(), step_obs.begin(), step_obs.end());
    const auto probs = nn::softmax(out.logits);
    const std::size_t per = probs.value().shape().sample_size();
    for (int e = 0; e < b.num_envs; ++e) {
      const std::size_t i = b.index(t, e);
      const std::span<const float> row(probs.value().vec().data() + static_cast<std::size_t>(e) * per, per);
      const int sampled = nn::sample_categorical(row, rng);
      b.values[i] = out.value.value().vec()[static_cast<std::size_t>(e)];
      StepResult r;
      try {
        r = envs[static_cast<std::size_t>(e)]->step(sampled);
      } catch (const std::exception& ex) {
        throw std::runtime_error("environment " + std::to_string(e) + ": " + ex.what());
      }
      b.actions[i] = r.info.applied_action;
      b.human_substituted[i] = r.info.human_substituted ? 1 : 0;
      b.rewards[i] = static_cast<float>(r.reward);
      b.dones[i] = r.done ? 1 : 0;
      if (r.done) {
        b.finished_returns.push_back(envs[static_cast<std::size_t>(e)]->episode_return());
        envs[static_cast<std::size_t>(e)]->reset();
      }
    }
  }
  const auto last = forward_current(step_obs);
  b.bootstrap = last.value.value().vec();
  return b;
}

Returns compute_returns(const RolloutBatch& b, double gamma, double reward_scale) {
  Returns r;
  r.returns.resize(b.transitions());
  r.advantages.resize(b.transitions());
  for (int e = 0; e < b.num_envs; ++e) {
    double running = b.bootstrap[static_cast<std::size_t>(e)];
    for (int t = b.n_steps - 1; t >= 0; --t) {
      const std::size_t i = b.index(t, e);
      const double carry = b.dones[i] ? 0.0 : gamma * running;
      running = reward_scale * b.rewards[i] + carry;
      r.returns[i] = static_cast<float>(running);
      r.advantages[i] = static_cast<float>(running - b.values[i]);
    }
  }
  return r;
}

// ---------------------------------------------------------------- update

A2CLoss a2c_loss(const PolicyModel<float>& model, const RolloutBatch& b, const Returns& targets,
                 const TrainConfig& config, const ForwardMode& mode) {
  const int n = static_cast<int>(b.transitions());
  const nn::Shape shape{n, b.channels, b.height, b.width};
  const auto out = model.forward(nn::Var<float>::constant(nn::Tensor<float>(shape, b.observations)), mode);

  std::vector<float> adv = targets.advantages;
  if (config.normalize_advantages && adv.size() > 1) {
    double mean = 0.0;
    for (float a : adv) mean += a;
    mean /= static_cast<double>(adv.size());
    double var = 0.0;
    for (float a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(adv.size()));
    for (float& a : adv) a = static_cast<float>((a - mean) / (sd + 1e-8));
  }

  const auto log_probs = nn::log_softmax(out.logits);
  const auto probs = nn::softmax(out.logits);
  const auto chosen = nn::gather(log_probs, std::span<const int>(b.actions));
  const auto policy = nn::scale(nn::mean(nn::mul(chosen, batch_constant(adv, n))), -1.0f);
  const auto value = nn::mean(nn::square(nn::sub(out.value, batch_constant(targets.returns, n))));
  const auto entropy = nn::scale(nn::mean(nn::sum_per_sample(nn::mul(probs, log_probs))), -1.0f);
  const auto total =
      nn::sub(nn::add(policy, nn::scale(value, static_cast<float>(config.value_coef))),
              nn::scale(entropy, static_cast<float>(config.entropy_coef)));

  A2CLoss l{total, {}};
  l.report.policy = policy.item();
  l.report.value = value.item();
  l.report.entropy = entropy.item();
  l.report.total = total.item();
  return l;
}

LossReport a2c_update(const PolicyModel<float>& model, const RolloutBatch& batch,
                      const Returns& targets, const TrainConfig& config,
                      nn::RMSProp<float>& optimizer, const ForwardMode& mode) {
  A2CLoss l = a2c_loss(model, batch, targets, config, mode);
  if (!std::isfinite(l.report.total)) {
    std::ostringstream m;
    m << "non-finite loss (policy " << l.report.policy << ", value " << l.report.value
      << ", entropy " << l.report.entropy << ")";
    throw std::runtime_error(m.str());
  }
  nn::backward(l.total);
  l.report.grad_norm = optimizer.step();
  return l.report;
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(TrainConfig config, EnvConfig env, ModelSpec spec)
    : config_(config),
      env_(env),
      model_((spec.validate(), spec)),
      optimizer_(model_.parameters(), config.optimizer),
      rng_(derive_seed(config.seed, kTrainerStream)) {
  config_.validate();
  env_.validate();
  if (spec.input_channels != observation_channels(env_.game))
    throw std::invalid_argument("model input_channels does not match the game's observation channels");
  for (int e = 0; e < config_.num_envs; ++e) {
    EnvConfig c = env_;
    c.seed = derive_seed(config_.seed, static_cast<std::uint64_t>(e));
    envs_.push_back(make_environment(c));
    envs_.back()->reset();
  }
}

LossReport Trainer::update() {
  last_batch_ = collect_rollout(envs_, model_, config_.n_steps, rng_);
  for (double r : last_batch_.finished_returns) {
    recent_.push_back(r);
    if (recent_.size() > kRecentWindow) recent_.pop_front();
  }
  const Returns targets = compute_returns(last_batch_, config_.gamma, config_.reward_scale);
  ForwardMode mode = EvalMode{};
  if (model_.spec().architecture == Architecture::Fractal)
    mode = TrainMode{sample_droppath(model_.spec(), rng_)};
  last_loss_ = a2c_update(model_, last_batch_, targets, config_, optimizer_, mode);
  frames_ += config_.frames_per_update();
  ++updates_;
  return last_loss_;
}

double Trainer::recent_mean_return() const {
  if (recent_.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double r : recent_) s += r;
  return s / static_cast<double>(recent_.size());
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c = capture(model_);
  const auto& params = optimizer_.params();
  const auto& acc = optimizer_.accumulators();
  for (std::size_t i = 0; i < params.size(); ++i) c.tensors.emplace_back("opt/" + params[i].name(), acc[i]);
  json envs = json::array();
  for (const auto& e : envs_) envs.push_back(e->save_state());
  c.extra = {{"train_config", to_json(config_)},
             {"env_config", to_json(env_)},
             {"frames", frames_},
             {"updates", updates_},
             {"rng", rng_.serialize()},
             {"recent_returns", recent_},
             {"envs", envs}};
  return c;
}

void Trainer::save(const std::filesystem::path& dir) const { save_checkpoint(dir, checkpoint()); }

Trainer Trainer::resume(const std::filesystem::path& dir) {
  const Checkpoint c = load_checkpoint(dir);
  if (!c.extra.contains("train_config"))
    throw std::runtime_error("checkpoint " + dir.string() + " holds no trainer state");
  Trainer t(train_config_from_json(c.extra.at("train_config")),
            env_config_from_json(c.extra.at("env_config")), c.spec);
  restore(t.model_, c);
  const auto& params = t.optimizer_.params();
  auto& acc = t.optimizer_.accumulators();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* s = c.find("opt/" + params[i].name());
    if (!s || s->shape() != acc[i].shape())
      throw std::runtime_error("checkpoint lacks optimizer state for " + params[i].name());
    acc[i] = *s;
  }
  t.frames_ = c.extra.at("frames").get<long long>();
  t.updates_ = c.extra.at("updates").get<long long>();
  t.rng_.restore(c.extra.at("rng").get<std::string>());
  t.recent_ = c.extra.at("recent_returns").get<std::deque<double>>();
  const auto& envs = c.extra.at("envs");
  if (envs.size() != t.envs_.size()) throw std::runtime_error("checkpoint environment count mismatch");
  for (std::size_t e = 0; e < t.envs_.size(); ++e) t.envs_[e]->load_state(envs[e]);
  return t;
}

void Trainer::run(const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto metrics_path = out_dir / "metrics.csv";
  const bool fresh = !std::filesystem::exists(metrics_path);
  std::ofstream csv(metrics_path, std::ios::app);
  if (!csv) throw std::runtime_error("cannot open " + metrics_path.string());
  if (fresh) csv << kMetricsHeader << '\n';

  auto crossed = [](long long before, long long after, long long interval) {
    return interval > 0 && after / interval > before / interval;
  };
  using clock = std::chrono::steady_clock;
  auto window_start = clock::now();
  long long window_frames = 0;

  while (!finished()) {
    const long long before = frames_;
    update();
    window_frames += frames_ - before;
    if (crossed(before, frames_, config_.log_interval) || finished()) {
      const double secs = std::chrono::duration<double>(clock::now() - window_start).count();
      const double fps = secs > 0 ? static_cast<double>(window_frames) / secs : 0.0;
      csv << frames_ << ',' << updates_ << ',' << fmt(recent_mean_return()) << ','
          << fmt(last_loss_.policy) << ',' << fmt(last_loss_.value) << ',' << fmt(last_loss_.entropy)
          << ',' << fmt(fps) << ",-1\n";
      csv.flush();
      window_start = clock::now();
      window_frames = 0;
    }
    if (crossed(before, frames_, config_.eval_interval)) {
      EvalOptions opts;
      opts.episodes = config_.eval_episodes;
      opts.seed = derive_seed(config_.seed, 0x6576616c);  // "eval"
      const EvalReport r = evaluate(model_, env_, opts);
      csv << frames_ << ',' << updates_ << ',' << fmt(r.mean) << ",,,,," << r.column << '\n';
      csv.flush();
    }
    if (crossed(before, frames_, config_.checkpoint_interval))
      save(out_dir / "checkpoints" / ("frame_" + std::to_string(frames_)));
  }
  save(out_dir / "final");
}

}  // namespace gymgrid
