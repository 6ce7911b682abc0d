#include <doctest.h>

#include <thread>

#include "gymgrid/environment.hpp"
#include "support.hpp"

using namespace gymgrid;

namespace {

EnvConfig gol_config(int size = 5, int steps = 100) {
  EnvConfig c;
  c.game = Game::GameOfLife;
  c.map_width = c.map_height = size;
  c.max_steps = steps;
  return c;
}

EnvConfig puzzle_config(int size = 3, int steps = 100) {
  EnvConfig c = gol_config(size, steps);
  c.game = Game::PowerPuzzle;
  return c;
}

int index_of(const Environment& e, int x, int y) { return y * e.width() + x; }

}  // namespace

TEST_SUITE("environments") {
  TEST_CASE("config validation and json") {
    EnvConfig c;
    CHECK_NOTHROW(c.validate());
    c.max_steps = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.map_width = 2;
    CHECK_THROWS(c.validate());
    c = {};
    c.init_alive_prob = -0.1;
    CHECK_THROWS(c.validate());
    c = {};
    c.zone_range = {0, 3};
    CHECK_THROWS(c.validate());

    EnvConfig d = puzzle_config(12, 40);
    d.zone_range = {2, 4};
    d.seed = 99;
    CHECK(env_config_from_json(to_json(d)) == d);
    CHECK(env_config_from_json(nlohmann::json::object()) == EnvConfig{});
    CHECK_THROWS(env_config_from_json({{"game", "GoL"}, {"colour", 3}}));
    CHECK_THROWS(env_config_from_json({{"game", "Chess"}}));
  }

  TEST_CASE("reset examples") {
    auto c = gol_config(8);
    c.init_alive_prob = 0.0;
    GolEnvironment g(c);
    const auto o = g.reset(1);
    for (float v : o.data) CHECK(v == 0.0f);

    PowerPuzzleEnvironment p(puzzle_config(16));
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto obs = p.reset(s);
      int plants = 0, zones = 0;
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
          plants += obs.at(puzzle_channel::kPlant, y, x) == 1.0f;
          zones += obs.at(puzzle_channel::kResidential, y, x) == 1.0f;
        }
      REQUIRE(plants == 1);
      REQUIRE(zones >= 1);
      REQUIRE(zones <= 5);
    }
    CHECK(p.reset(7) == p.reset(7));
    CHECK(p.reset(7) != p.reset(8));
  }

  TEST_CASE("step before reset, after done and out of range") {
    GolEnvironment g(gol_config(5, 2));
    CHECK_THROWS_AS(g.step(0), std::logic_error);
    g.reset(0);
    CHECK_THROWS_AS(g.step(25), std::out_of_range);
    CHECK_THROWS_AS(g.step(-1), std::out_of_range);
    CHECK_FALSE(g.step(0).done);
    CHECK(g.step(0).done);
    CHECK(g.done());
    CHECK_THROWS_AS(g.step(0), std::logic_error);
    g.reset();
    CHECK(g.step_index() == 0);
  }

  TEST_CASE("gol: lone cell dies, completed blinker lives") {
    GolEnvironment g(gol_config(5));
    g.load_board(GolBoard(5, 5));
    auto r = g.step(index_of(g, 2, 2));
    CHECK(r.reward == 0);

    GolBoard two(5, 5);
    two.set(1, 2, true);
    two.set(2, 2, true);
    g.load_board(two);
    r = g.step(index_of(g, 3, 2));
    CHECK(r.reward == 3);
    CHECK(g.board() == gol_from_text(".....\n..#..\n..#..\n..#..\n.....\n"));
  }

  TEST_CASE("gol: reward equals count_alive of the successor") {
    auto c = gol_config(10);
    c.init_alive_prob = 0.3;
    GolEnvironment g(c);
    g.reset(3);
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
      GolBoard before = g.board();
      const int a = static_cast<int>(rng.below(100));
      before.set(a % 10, a / 10, true);
      const auto r = g.step(a);
      REQUIRE(r.reward == count_alive(gol_step(before)));
      REQUIRE(r.info.population == r.reward);
    }
  }

  TEST_CASE("puzzle: wire connects, building on the plant does nothing") {
    PowerPuzzleEnvironment p(puzzle_config(3));
    p.load_board(make_puzzle_board(tiles_from_text("P.R\n...\n...\n")));
    auto blocked = p.step(index_of(p, 0, 0));
    CHECK(blocked.reward == 0);
    CHECK(p.board().tiles(0, 0) == Tile::PowerPlant);
    const auto r = p.step(index_of(p, 1, 0));
    CHECK(r.reward == 1);
    CHECK(p.all_zones_powered());
    CHECK(p.step(index_of(p, 0, 0)).reward == 1);
  }

  TEST_CASE("puzzle: reward never decreases under agent play and return sums rewards") {
    PowerPuzzleEnvironment p(puzzle_config(8, 60));
    Rng rng(9);
    for (int ep = 0; ep < 20; ++ep) {
      p.reset(static_cast<std::uint64_t>(ep));
      double last = 0, total = 0;
      while (!p.done()) {
        const auto r = p.step(static_cast<int>(rng.below(64)));
        REQUIRE(r.reward >= last);
        last = r.reward;
        total += r.reward;
      }
      REQUIRE(p.episode_return() == total);
    }
  }

  TEST_CASE("puzzle: connecting earlier earns more") {
    const auto board = make_puzzle_board(tiles_from_text("P..R\n....\n....\n"));
    auto run = [&](int delay) {
      EnvConfig c = puzzle_config(4, 10);
      c.map_height = 3;
      PowerPuzzleEnvironment q(c);
      q.load_board(board);
      for (int i = 0; i < delay; ++i) q.step(index_of(q, 0, 2));
      q.step(index_of(q, 1, 0));
      q.step(index_of(q, 2, 0));
      while (!q.done()) q.step(index_of(q, 0, 0));
      return q.episode_return();
    };
    CHECK(run(0) == 9);
    CHECK(run(0) > run(1));
    CHECK(run(1) > run(3));
  }

  TEST_CASE("observation encoding") {
    auto b = make_puzzle_board(tiles_from_text("PW.R\n.W..\nRW..\n"));
    const auto o = encode_observation(b);
    CHECK(o.channels == puzzle_channel::kCount);
    int plants = 0;
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 4; ++x) {
        float s = 0;
        for (int c = 0; c < 4; ++c) s += o.at(c, y, x);
        REQUIRE(s == 1.0f);
        REQUIRE(o.at(puzzle_channel::kPowered, y, x) == static_cast<float>(b.powered(x, y)));
        plants += o.at(puzzle_channel::kPlant, y, x) == 1.0f;
      }
    CHECK(plants == 1);
    CHECK(o.at(puzzle_channel::kResidential, 0, 3) == 1.0f);
    CHECK(o.at(puzzle_channel::kPowered, 0, 3) == 0.0f);
    CHECK(o.at(puzzle_channel::kPowered, 2, 0) == 1.0f);

    const auto g = encode_observation(gol_from_text("#..\n...\n..#\n"));
    CHECK(g.channels == 1);
    CHECK(g.at(0, 0, 0) == 1.0f);
    CHECK(g.at(0, 2, 2) == 1.0f);
    CHECK(g.at(0, 1, 1) == 0.0f);
  }

  TEST_CASE("human actions replace the agent's") {
    PowerPuzzleEnvironment p(puzzle_config(3));
    p.load_board(make_puzzle_board(tiles_from_text("P.R\n...\n...\n")));
    CHECK_FALSE(p.step(index_of(p, 2, 2)).info.human_substituted);
    p.inject_human_action(index_of(p, 1, 0));
    CHECK(p.human_queue_depth() == 1);
    const auto r = p.step(index_of(p, 0, 2));
    CHECK(r.info.human_substituted);
    CHECK(r.info.applied_action == index_of(p, 1, 0));
    CHECK(p.board().tiles(0, 2) == Tile::Empty);
    CHECK(p.board().tiles(1, 0) == Tile::Wire);
    CHECK(p.human_queue_depth() == 0);
    CHECK(r.reward == 1);
  }

  TEST_CASE("bulldozing the plant cuts power") {
    PowerPuzzleEnvironment p(puzzle_config(3));
    p.load_board(make_puzzle_board(tiles_from_text("PWR\n...\n...\n")));
    p.inject_human_action(index_of(p, 0, 0), true, Tile::Empty);
    const auto r = p.step(index_of(p, 2, 2));
    CHECK(p.board().tiles(0, 0) == Tile::Empty);
    CHECK(r.reward == 0);
    // without force the plant stays
    p.load_board(make_puzzle_board(tiles_from_text("PWR\n...\n...\n")));
    p.inject_human_action(index_of(p, 0, 0), false, Tile::Empty);
    CHECK(p.step(0).reward == 1);
  }

  TEST_CASE("gol human actions: build and forced kill") {
    GolEnvironment g(gol_config(5));
    const auto block = gol_from_text(".....\n.##..\n.##..\n.....\n.....\n");
    g.load_board(block);
    g.inject_human_action(index_of(g, 1, 1), true, Tile::Empty);
    const auto r = g.step(index_of(g, 4, 4));
    CHECK(r.info.human_substituted);
    // three cells of a block become a block again (each has 2 neighbours, the gap is born)
    CHECK(g.board() == block);
    g.inject_human_action(index_of(g, 1, 1), false, Tile::Empty);
    CHECK(g.step(0).reward == 4);
  }

  TEST_CASE("queue is FIFO, one entry per step, and drops the oldest when full") {
    HumanBuildQueue q(3);
    CHECK(q.push({1}) == 0);
    CHECK(q.push({2}) == 0);
    CHECK(q.push({3}) == 0);
    CHECK(q.push({4}) == 1);
    CHECK(q.total_dropped() == 1);
    CHECK(q.pop()->action == 2);
    CHECK(q.size() == 2);
    q.clear();
    CHECK_FALSE(q.pop().has_value());

    PowerPuzzleEnvironment p(puzzle_config(4));
    p.reset(1);
    for (int i = 0; i < 70; ++i) p.inject_human_action(i % 16);
    CHECK(p.human_queue_depth() == HumanBuildQueue::kDefaultCapacity);
    const auto first = p.step(15);
    CHECK(first.info.applied_action == (70 - 64) % 16);
    CHECK(p.human_queue_depth() == 63);
  }

  TEST_CASE("queue accepts concurrent producers") {
    HumanBuildQueue q(100000);
    std::vector<std::thread> producers;
    for (int t = 0; t < 4; ++t)
      producers.emplace_back([&q, t] {
        for (int i = 0; i < 1000; ++i) q.push({t * 1000 + i});
      });
    for (auto& th : producers) th.join();
    CHECK(q.size() == 4000);
    std::vector<int> last(4, -1);
    while (auto a = q.pop()) {
      const int t = a->action / 1000;
      REQUIRE(a->action % 1000 > last[t]);
      last[t] = a->action % 1000;
    }
  }

  TEST_CASE("runs are reproducible and save/load continues exactly") {
    auto c = gol_config(8, 30);
    c.seed = 5;
    auto play = [](Environment& e, int from, int to) {
      std::vector<double> rewards;
      for (int t = from; t < to; ++t) rewards.push_back(e.step((t * 7) % 64).reward);
      return rewards;
    };
    GolEnvironment a(c), b(c);
    a.reset();
    b.reset();
    CHECK(play(a, 0, 30) == play(b, 0, 30));

    GolEnvironment x(c), y(c);
    x.reset();
    play(x, 0, 10);
    y.load_state(x.save_state());
    CHECK(y.step_index() == 10);
    CHECK(play(x, 10, 30) == play(y, 10, 30));
    x.reset();
    y.reset();
    CHECK(x.observe() == y.observe());

    PowerPuzzleEnvironment p(puzzle_config(6)), q(puzzle_config(6));
    p.reset(3);
    play(p, 0, 5);
    q.load_state(p.save_state());
    CHECK(q.board() == p.board());
    CHECK(q.episode_return() == p.episode_return());
  }

  TEST_CASE("factory") {
    CHECK(make_environment(gol_config())->observation_channels() == 1);
    CHECK(make_environment(puzzle_config())->observation_channels() == 5);
    auto bad = gol_config();
    bad.max_steps = 0;
    CHECK_THROWS(make_environment(bad));
  }
}
