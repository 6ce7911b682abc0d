#include "selfcheck.hpp"

#include <functional>
#include <string>
#include <vector>

#include "gymgrid/grid_engine.hpp"
#include "gymgrid/models.hpp"
#include "gymgrid/nn/gradcheck.hpp"
#include "gymgrid/nn/ops.hpp"

namespace gymgrid {

namespace {

// Plain reference: count the eight neighbours, dead outside the board.
GolBoard naive_step(const GolBoard& b) {
  GolBoard next(b.width(), b.height());
  for (int y = 0; y < b.height(); ++y) {
    for (int x = 0; x < b.width(); ++x) {
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx >= 0 && ny >= 0 && nx < b.width() && ny < b.height() && b(nx, ny)) ++n;
        }
      next.set(x, y, b(x, y) ? (n == 2 || n == 3) : n == 3);
    }
  }
  return next;
}

bool golden() {
  const GolBoard blinker = gol_from_text(".....\n..#..\n..#..\n..#..\n.....\n");
  const GolBoard flipped = gol_from_text(".....\n.....\n.###.\n.....\n.....\n");
  const GolBoard block = gol_from_text("....\n.##.\n.##.\n....\n");
  const GolBoard glider = gol_from_text(".#....\n..#...\n###...\n......\n......\n......\n");
  const GolBoard moved = gol_from_text("......\n..#...\n...#..\n.###..\n......\n......\n");
  GolBoard g = glider;
  for (int i = 0; i < 4; ++i) g = gol_step(g);
  return gol_step(blinker) == flipped && gol_step(flipped) == blinker && gol_step(block) == block && g == moved;
}

bool exhaustive_3x3() {
  for (int bits = 0; bits < 512; ++bits) {
    GolBoard b(3, 3);
    for (int i = 0; i < 9; ++i) b.set(i % 3, i / 3, (bits >> i) & 1);
    if (gol_step(b) != naive_step(b) || gol_step_conv(b) != gol_step(b)) return false;
  }
  return true;
}

bool random_boards() {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const int w = 3 + static_cast<int>(rng.below(30));
    const int h = 3 + static_cast<int>(rng.below(30));
    const GolBoard b = random_gol_init(rng, w, h, rng.uniform01());
    const GolBoard s = gol_step(b);
    if (s != naive_step(b) || gol_step_conv(b) != s) return false;
  }
  return true;
}

bool counting() {
  Rng rng(11);
  for (int size : {8, 9, 15, 16, 33}) {
    std::vector<std::uint8_t> cells(static_cast<std::size_t>(size * size));
    int alive = 0;
    for (auto& c : cells) alive += (c = rng.bernoulli(0.3) ? 1 : 0);
    if (value_head_counting_check(size, size, cells) != alive) return false;
  }
  return true;
}

bool receptive_fields() {
  ModelSpec f;
  f.architecture = Architecture::Fractal;
  const int expected[] = {33, 17, 9, 5, 3};
  for (int c = 0; c < 5; ++c)
    if (receptive_field(f, c).first != expected[c]) return false;
  ModelSpec s;
  s.architecture = Architecture::StrictlyConv;
  return receptive_field(s).first == 7;
}

nn::Tensor<double> random_tensor(Rng& rng, nn::Shape s) {
  nn::Tensor<double> t(s);
  for (auto& v : t.vec()) v = rng.normal();
  return t;
}

double conv_gradcheck() {
  Rng rng(3);
  auto x = nn::Var<double>::parameter(random_tensor(rng, {2, 3, 5, 6}), "x");
  auto w = nn::Var<double>::parameter(random_tensor(rng, {4, 3, 3, 3}), "w");
  auto b = nn::Var<double>::parameter(random_tensor(rng, {4, 1, 1, 1}), "b");
  auto r = random_tensor(rng, {2, 4, 5, 6});
  auto loss = [&] {
    return nn::sum(nn::mul(nn::tanh(nn::conv2d_same(x, w, b)), nn::Var<double>::constant(r)));
  };
  return nn::gradcheck(loss, {x, w, b}).max_error;
}

double model_gradcheck() {
  ModelSpec spec;
  spec.architecture = Architecture::StrictlyConv;
  spec.hidden_channels = 4;
  spec.init_seed = 5;
  PolicyModel<double> model(spec);
  Rng rng(9);
  // Zero biases put ReLU inputs exactly on the kink wherever features vanish.
  for (auto p : model.parameters())
    if (p.name().ends_with(".bias"))
      for (auto& v : p.mutable_value().vec()) v = 0.1 * rng.normal();
  const auto obs = nn::Var<double>::constant(random_tensor(rng, {2, 1, 6, 6}));
  const auto r = nn::Var<double>::constant(random_tensor(rng, {2, 1, 6, 6}));
  auto loss = [&] {
    const auto out = model.forward(obs);
    return nn::add(nn::sum(nn::mul(nn::log_softmax(out.logits), r)), nn::sum(out.value));
  };
  return nn::gradcheck(loss, model.parameters()).max_error;
}

}  // namespace

bool run_selfcheck(std::ostream& out) {
  bool all = true;
  auto report = [&](const std::string& name, bool ok) {
    out << (ok ? "PASS " : "FAIL ") << name << '\n';
    all = all && ok;
  };
  report("gol golden patterns (blinker, block, glider)", golden());
  report("gol all 512 3x3 boards vs reference and conv step", exhaustive_3x3());
  report("gol 200 random boards vs reference and conv step", random_boards());
  report("value head counts alive cells", counting());
  report("receptive fields 33/17/9/5/3 and 7", receptive_fields());
  const double conv = conv_gradcheck();
  report("conv2d gradient check (max error " + std::to_string(conv) + ")", conv < 1e-4);
  const double model = model_gradcheck();
  report("policy model gradient check (max error " + std::to_string(model) + ")", model < 1e-4);
  return all;
}

}  // namespace gymgrid
