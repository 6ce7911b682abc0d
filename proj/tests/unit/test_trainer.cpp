#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "gymgrid/nn/ops.hpp"
#include "gymgrid/trainer.hpp"
#include "support.hpp"

using namespace gymgrid;
namespace fs = std::filesystem;

namespace {

// Observation is a constant image holding 100 * episode + step; reward is
// step + 1. Optionally queues a human build during the first step.
class ScriptedEnv final : public Environment {
 public:
  explicit ScriptedEnv(EnvConfig c, int human_at_second_step = -1)
      : Environment(c), human_(human_at_second_step) {}

  int observation_channels() const noexcept override { return 1; }
  Observation observe() const override {
    Observation o{1, height(), width(), {}};
    o.data.assign(static_cast<std::size_t>(width() * height()),
                  static_cast<float>(100 * episodes_started() + static_cast<std::uint64_t>(step_index())));
    return o;
  }
  int population() const override { return 0; }
  std::string board_text() const override { return ""; }

  std::vector<int> applied;

 protected:
  void reset_board(std::uint64_t) override {}
  void apply_agent_action(int a) override { applied.push_back(a); }
  void apply_human_action(const HumanAction& a) override { applied.push_back(a.action); }
  int advance() override {
    if (step_index() == 0 && human_ >= 0) inject_human_action(human_);
    return step_index() + 1;
  }
  void load_board_text(const std::string&) override {}

 private:
  int human_;
};

EnvConfig tiny_env(int steps) {
  EnvConfig c;
  c.map_width = c.map_height = 3;
  c.max_steps = steps;
  return c;
}

ModelSpec tiny_model(int hidden = 4) {
  ModelSpec s;
  s.architecture = Architecture::StrictlyConv;
  s.hidden_channels = hidden;
  return s;
}

RolloutBatch manual_batch(std::vector<float> rewards, std::vector<std::uint8_t> dones,
                          float bootstrap, std::vector<float> values = {}) {
  RolloutBatch b;
  b.n_steps = static_cast<int>(rewards.size());
  b.num_envs = 1;
  b.rewards = std::move(rewards);
  b.dones = std::move(dones);
  b.values = values.empty() ? std::vector<float>(b.rewards.size(), 0.0f) : std::move(values);
  b.bootstrap = {bootstrap};
  return b;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("gymgrid_train_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

TrainConfig small_train(long long frames) {
  TrainConfig t;
  t.num_envs = 4;
  t.n_steps = 5;
  t.total_frames = frames;
  t.log_interval = 40;
  t.seed = 3;
  return t;
}

EnvConfig gol8() {
  EnvConfig e;
  e.map_width = e.map_height = 8;
  e.max_steps = 12;
  return e;
}

// Hand evaluation of the loss for a batch against the model's own outputs.
LossReport hand_loss(const PolicyModel<float>& m, const RolloutBatch& b, const Returns& r,
                     const TrainConfig& c) {
  const int n = static_cast<int>(b.transitions());
  const auto out = m.forward(nn::Var<float>::constant(
      nn::Tensor<float>({n, b.channels, b.height, b.width}, b.observations)));
  const auto& logits = out.logits.value();
  const std::size_t per = logits.shape().sample_size();
  LossReport rep;
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (std::size_t k = 0; k < per; ++k) mx = std::max(mx, double(logits[i * per + k]));
    double z = 0;
    for (std::size_t k = 0; k < per; ++k) z += std::exp(logits[i * per + k] - mx);
    double ent = 0;
    for (std::size_t k = 0; k < per; ++k) {
      const double lp = logits[i * per + k] - mx - std::log(z);
      ent -= std::exp(lp) * lp;
    }
    const double chosen = logits[i * per + static_cast<std::size_t>(b.actions[static_cast<std::size_t>(i)])] - mx - std::log(z);
    rep.policy -= chosen * r.advantages[static_cast<std::size_t>(i)] / n;
    const double dv = out.value.value()[static_cast<std::size_t>(i)] - r.returns[static_cast<std::size_t>(i)];
    rep.value += dv * dv / n;
    rep.entropy += ent / n;
  }
  rep.total = rep.policy + c.value_coef * rep.value - c.entropy_coef * rep.entropy;
  return rep;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("config validation and json") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.frames_per_update() == 80);
    auto bad = c;
    bad.num_envs = 0;
    CHECK_THROWS(bad.validate());
    bad = c;
    bad.gamma = 1.5;
    CHECK_THROWS(bad.validate());
    bad = c;
    bad.total_frames = 79;
    CHECK_THROWS(bad.validate());

    c.seed = 9;
    c.reward_scale = 0.1;
    c.normalize_advantages = true;
    c.optimizer.learning_rate = 1e-3;
    CHECK(to_json(train_config_from_json(to_json(c))) == to_json(c));
    CHECK_THROWS(train_config_from_json({{"num_envs", 2}, {"lr", 0.1}}));
  }

  TEST_CASE("returns: zero discount, hand recurrence, terminal masking, scaling") {
    auto b = manual_batch({1, 2, 3}, {0, 0, 0}, 10);
    auto r = compute_returns(b, 0.0);
    CHECK(r.returns == std::vector<float>{1, 2, 3});

    b = manual_batch({1, 1}, {0, 0}, 0);
    r = compute_returns(b, 0.5);
    CHECK(r.returns == std::vector<float>{1.5f, 1.0f});

    b = manual_batch({4, 7, 9}, {1, 0, 0}, 5, {1, 0, 0});
    r = compute_returns(b, 0.9);
    CHECK(r.returns[0] == 4.0f);
    CHECK(r.advantages[0] == 3.0f);
    CHECK(r.returns[2] == doctest::Approx(9 + 0.9 * 5));

    b = manual_batch({10, 10}, {0, 1}, 0);
    r = compute_returns(b, 1.0, 0.1);
    CHECK(r.returns[1] == doctest::Approx(1.0));
    CHECK(r.returns[0] == doctest::Approx(2.0));
  }

  TEST_CASE("returns with several environments interleaved") {
    RolloutBatch b;
    b.n_steps = 2;
    b.num_envs = 2;
    // index t * num_envs + e
    b.rewards = {1, 10, 2, 20};
    b.dones = {0, 1, 0, 0};
    b.values = {0, 0, 0, 0};
    b.bootstrap = {100, 1000};
    const auto r = compute_returns(b, 0.5);
    CHECK(r.returns[b.index(1, 0)] == doctest::Approx(2 + 50));
    CHECK(r.returns[b.index(0, 0)] == doctest::Approx(1 + 26));
    CHECK(r.returns[b.index(1, 1)] == doctest::Approx(20 + 500));
    CHECK(r.returns[b.index(0, 1)] == doctest::Approx(10));
  }

  TEST_CASE("scripted rollout, auto-reset and bootstrap") {
    std::vector<std::unique_ptr<Environment>> envs;
    auto* env = new ScriptedEnv(tiny_env(2));
    envs.emplace_back(env);
    const PolicyModel<float> m(tiny_model());
    Rng rng(1);
    CHECK_THROWS_AS(collect_rollout(envs, m, 3, rng), std::logic_error);
    env->reset(0);
    const auto b = collect_rollout(envs, m, 3, rng);
    REQUIRE(b.transitions() == 3);
    CHECK(b.observations.size() == 27);
    CHECK(b.observations[0] == 100.0f);
    CHECK(b.observations[9] == 101.0f);
    CHECK(b.observations[18] == 200.0f);  // fresh episode after the terminal step
    CHECK(b.rewards == std::vector<float>{1, 2, 1});
    CHECK(b.dones == std::vector<std::uint8_t>{0, 1, 0});
    CHECK(b.finished_returns == std::vector<double>{3});
    CHECK(b.actions == env->applied);
    for (int a : b.actions) CHECK((a >= 0 && a < 9));

    // values and the bootstrap come from the model on the recorded observations
    const auto v = m.forward(nn::Var<float>::constant(nn::Tensor<float>({3, 1, 3, 3}, b.observations))).value.value();
    for (std::size_t i = 0; i < 3; ++i) CHECK(b.values[i] == doctest::Approx(v[i]).epsilon(1e-5));
    const auto boot = m.forward(nn::Var<float>::constant(nn::Tensor<float>({1, 1, 3, 3}, 201.0f))).value.item();
    CHECK(b.bootstrap[0] == doctest::Approx(boot).epsilon(1e-5));
  }

  TEST_CASE("human action queued mid-rollout replaces the sample") {
    std::vector<std::unique_ptr<Environment>> envs;
    auto* env = new ScriptedEnv(tiny_env(10), 4);
    envs.emplace_back(env);
    env->reset(0);
    const PolicyModel<float> m(tiny_model());
    Rng rng(2);
    const auto b = collect_rollout(envs, m, 3, rng);
    CHECK(b.human_substituted == std::vector<std::uint8_t>{0, 1, 0});
    CHECK(b.actions[1] == 4);
    CHECK(env->applied[1] == 4);
  }

  TEST_CASE("environment errors name the environment") {
    std::vector<std::unique_ptr<Environment>> envs;
    envs.push_back(make_environment(tiny_env(5)));
    envs.push_back(make_environment(tiny_env(5)));
    envs[0]->reset(0);
    envs[1]->reset(0);
    // a queued action that the environment rejects on step
    envs[1]->human_queue().push({99});
    const PolicyModel<float> m(tiny_model());
    Rng rng(3);
    CHECK_THROWS_WITH(collect_rollout(envs, m, 1, rng), doctest::Contains("environment 1"));
  }

  TEST_CASE("loss matches a hand evaluation") {
    std::vector<std::unique_ptr<Environment>> envs;
    envs.push_back(make_environment(gol8()));
    envs[0]->reset(5);
    PolicyModel<float> m(tiny_model());
    Rng rng(4);
    test::jitter_biases(m, rng);
    TrainConfig c;
    c.value_coef = 0.7;
    c.entropy_coef = 0.05;
    for (int steps : {1, 4}) {
      const auto b = collect_rollout(envs, m, steps, rng);
      const auto r = compute_returns(b, c.gamma);
      const auto got = a2c_loss(m, b, r, c).report;
      const auto want = hand_loss(m, b, r, c);
      CHECK(got.policy == doctest::Approx(want.policy).epsilon(1e-4));
      CHECK(got.value == doctest::Approx(want.value).epsilon(1e-4));
      CHECK(got.entropy == doctest::Approx(want.entropy).epsilon(1e-4));
      CHECK(got.total == doctest::Approx(want.total).epsilon(1e-4));
    }
  }

  TEST_CASE("zero advantages and exact values leave only the entropy term; uniform entropy is ln N") {
    std::vector<std::unique_ptr<Environment>> envs;
    envs.push_back(make_environment(gol8()));
    envs[0]->reset(1);
    PolicyModel<float> m(tiny_model());
    for (auto p : m.parameters())
      if (p.name().starts_with("action.")) p.mutable_value().fill(0.0f);
    Rng rng(5);
    const auto b = collect_rollout(envs, m, 3, rng);
    Returns r;
    r.returns = b.values;
    r.advantages.assign(b.transitions(), 0.0f);
    TrainConfig c;
    const auto rep = a2c_loss(m, b, r, c).report;
    CHECK(rep.policy == 0.0);
    CHECK(rep.value == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(rep.entropy == doctest::Approx(std::log(64.0)).epsilon(1e-5));
    CHECK(rep.total == doctest::Approx(-c.entropy_coef * std::log(64.0)).epsilon(1e-5));
  }

  TEST_CASE("value coefficient does not reach the action head") {
    std::vector<std::unique_ptr<Environment>> envs;
    envs.push_back(make_environment(gol8()));
    envs[0]->reset(2);
    PolicyModel<float> m(tiny_model());
    Rng rng(6);
    const auto b = collect_rollout(envs, m, 4, rng);
    const auto r = compute_returns(b, 0.99);
    auto action_grad = [&](double vc) {
      TrainConfig c;
      c.value_coef = vc;
      nn::zero_grad(m.parameters());
      nn::backward(a2c_loss(m, b, r, c).total);
      for (const auto& p : m.parameters())
        if (p.name() == "action.weight") return p.grad();
      return nn::Tensor<float>();
    };
    const auto g1 = action_grad(0.5);
    const auto g2 = action_grad(5.0);
    REQUIRE(g1.size() > 0);
    CHECK(g1 == g2);
    nn::zero_grad(m.parameters());
  }

  TEST_CASE("entropy rises on a frozen batch with zero advantages") {
    std::vector<std::unique_ptr<Environment>> envs;
    envs.push_back(make_environment(gol8()));
    envs[0]->reset(3);
    PolicyModel<float> m(tiny_model());
    Rng rng(7);
    const auto b = collect_rollout(envs, m, 4, rng);
    Returns r;
    r.returns.assign(b.transitions(), 0.0f);
    r.advantages.assign(b.transitions(), 0.0f);
    TrainConfig c;
    c.entropy_coef = 1.0;
    c.value_coef = 0.0;
    c.optimizer.learning_rate = 1e-3;
    nn::RMSProp<float> opt(m.parameters(), c.optimizer);
    double last = a2c_loss(m, b, r, c).report.entropy;
    for (int i = 0; i < 15; ++i) {
      a2c_update(m, b, r, c, opt);
      const double now = a2c_loss(m, b, r, c).report.entropy;
      CHECK(now > last);
      last = now;
    }
  }

  TEST_CASE("non-finite loss aborts the update") {
    std::vector<std::unique_ptr<Environment>> envs;
    envs.push_back(make_environment(gol8()));
    envs[0]->reset(4);
    PolicyModel<float> m(tiny_model());
    Rng rng(8);
    const auto b = collect_rollout(envs, m, 2, rng);
    auto r = compute_returns(b, 0.99);
    r.returns[0] = std::numeric_limits<float>::infinity();
    nn::RMSProp<float> opt(m.parameters());
    const auto before = m.parameters()[0].value();
    CHECK_THROWS_WITH_AS(a2c_update(m, b, r, TrainConfig{}, opt), doctest::Contains("non-finite"),
                         std::runtime_error);
    CHECK(m.parameters()[0].value() == before);
  }

  TEST_CASE("one update when total frames equal one rollout") {
    auto t = small_train(20);
    Trainer tr(t, gol8(), tiny_model());
    TempDir out;
    tr.run(out.path);
    CHECK(tr.updates() == 1);
    CHECK(tr.frames() == 20);
    CHECK(fs::exists(out.path / "final" / kManifestFile));
    std::ifstream csv(out.path / "metrics.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == kMetricsHeader);
  }

  TEST_CASE("frame accounting and recent returns") {
    Trainer tr(small_train(400), gol8(), tiny_model());
    CHECK(std::isnan(tr.recent_mean_return()));
    while (!tr.finished()) {
      tr.update();
      REQUIRE(tr.frames() == tr.updates() * 20);
    }
    CHECK(tr.updates() == 20);
    // 4 envs x 100 steps / 12 steps per episode
    CHECK(std::isfinite(tr.recent_mean_return()));
    CHECK(std::isfinite(tr.last_loss().total));
  }

  TEST_CASE("constructor rejects mismatched channels") {
    EnvConfig p = gol8();
    p.game = Game::PowerPuzzle;
    CHECK_THROWS_AS(Trainer(small_train(20), p, tiny_model()), std::invalid_argument);
  }

  TEST_CASE("human builds reach the batch through the interactive env") {
    Trainer tr(small_train(40), gol8(), tiny_model());
    tr.interactive_env().inject_human_action(9);
    tr.update();
    const auto& b = tr.last_batch();
    CHECK(b.human_substituted[b.index(0, 0)] == 1);
    CHECK(b.actions[b.index(0, 0)] == 9);
    for (int e = 1; e < b.num_envs; ++e) CHECK(b.human_substituted[b.index(0, e)] == 0);
  }

  TEST_CASE("resume continues bit-identically") {
    for (auto arch : {Architecture::StrictlyConv, Architecture::Fractal}) {
      ModelSpec spec = tiny_model();
      spec.architecture = arch;
      spec.n_expansions = 3;
      Trainer straight(small_train(200), gol8(), spec);
      for (int i = 0; i < 4; ++i) straight.update();
      TempDir dir;
      straight.save(dir.path);
      std::vector<LossReport> expected;
      while (!straight.finished()) expected.push_back(straight.update());

      Trainer resumed = Trainer::resume(dir.path);
      CHECK(resumed.frames() == 80);
      std::vector<LossReport> got;
      while (!resumed.finished()) got.push_back(resumed.update());
      REQUIRE(got.size() == expected.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].total == expected[i].total);
        CHECK(got[i].grad_norm == expected[i].grad_norm);
      }
      for (std::size_t k = 0; k < straight.model().parameters().size(); ++k)
        CHECK(straight.model().parameters()[k].value() == resumed.model().parameters()[k].value());
    }
  }

  TEST_CASE("resume needs trainer state") {
    TempDir dir;
    save_checkpoint(dir.path, capture(PolicyModel<float>(tiny_model())));
    CHECK_THROWS_WITH(Trainer::resume(dir.path), doctest::Contains("no trainer state"));
  }
}
