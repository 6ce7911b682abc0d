#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gymgrid/checkpoint.hpp"
#include "gymgrid/evaluator.hpp"
#include "gymgrid/grid_engine.hpp"
#include "gymgrid/oracle.hpp"
#include "gymgrid/trainer.hpp"

namespace py = pybind11;
using namespace gymgrid;
using nlohmann::json;

namespace {

py::array_t<float> to_array(const Observation& o) {
  py::array_t<float> a({o.channels, o.height, o.width});
  std::copy(o.data.begin(), o.data.end(), a.mutable_data());
  return a;
}

py::array_t<std::uint8_t> board_array(const GolBoard& b) {
  py::array_t<std::uint8_t> a({b.height(), b.width()});
  std::copy(b.alive().cells().begin(), b.alive().cells().end(), a.mutable_data());
  return a;
}

GolBoard board_from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("board must be a 2-d array");
  GolBoard b(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t y = 0; y < a.shape(0); ++y)
    for (py::ssize_t x = 0; x < a.shape(1); ++x) b.set(static_cast<int>(x), static_cast<int>(y), r(y, x) != 0);
  return b;
}

class PyEnv {
 public:
  explicit PyEnv(const std::string& config) : env_(make_environment(env_config_from_json(json::parse(config)))) {}

  py::array_t<float> reset(std::optional<std::uint64_t> seed) {
    return to_array(seed ? env_->reset(*seed) : env_->reset());
  }

  py::tuple step(int action) {
    const auto r = env_->step(action);
    py::dict info;
    info["population"] = r.info.population;
    info["human_substituted"] = r.info.human_substituted;
    info["applied_action"] = r.info.applied_action;
    return py::make_tuple(to_array(r.observation), r.reward, r.done, info);
  }

  Environment& env() { return *env_; }

 private:
  std::unique_ptr<Environment> env_;
};

EvalOptions eval_options(int episodes, int column, bool deterministic, std::uint64_t seed) {
  EvalOptions o;
  o.episodes = episodes;
  o.column = column;
  o.deterministic = deterministic;
  o.seed = seed;
  return o;
}

}  // namespace

PYBIND11_MODULE(_gymgrid, m) {
  m.doc() = "gymgrid native core";

  m.def("gol_step", [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
    return board_array(gol_step(board_from_array(a)));
  });
  m.def("gol_step_conv", [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
    return board_array(gol_step_conv(board_from_array(a)));
  });

  py::class_<PyEnv>(m, "Env")
      .def(py::init<const std::string&>(), py::arg("config_json"))
      .def("reset", &PyEnv::reset, py::arg("seed") = py::none())
      .def("step", &PyEnv::step, py::arg("action"))
      .def("observe", [](PyEnv& e) { return to_array(e.env().observe()); })
      .def("inject_human_action",
           [](PyEnv& e, int action, bool force) { return e.env().inject_human_action(action, force); },
           py::arg("action"), py::arg("force") = false)
      .def("board_text", [](PyEnv& e) { return e.env().board_text(); })
      .def_property_readonly("action_count", [](PyEnv& e) { return e.env().action_count(); })
      .def_property_readonly("done", [](PyEnv& e) { return e.env().done(); })
      .def_property_readonly("step_index", [](PyEnv& e) { return e.env().step_index(); })
      .def_property_readonly("episode_return", [](PyEnv& e) { return e.env().episode_return(); })
      .def_property_readonly("config_json", [](PyEnv& e) { return to_json(e.env().config()).dump(); });

  m.def(
      "oracle_plan",
      [](const std::string& board_text, int horizon, bool brute_force) {
        const auto board = make_puzzle_board(tiles_from_text(board_text));
        return to_json(brute_force ? brute_force_optimal(board, horizon) : nearest_first_plan(board, horizon)).dump();
      },
      py::arg("board_text"), py::arg("horizon") = 100, py::arg("brute_force") = false);

  py::class_<Trainer>(m, "Trainer")
      .def(py::init([](const std::string& train, const std::string& env, const std::string& model) {
             return std::make_unique<Trainer>(train_config_from_json(json::parse(train)),
                                              env_config_from_json(json::parse(env)),
                                              model_spec_from_json(json::parse(model)));
           }),
           py::arg("train_json"), py::arg("env_json"), py::arg("model_json"))
      .def_static("resume", [](const std::string& dir) { return std::make_unique<Trainer>(Trainer::resume(dir)); })
      .def("update",
           [](Trainer& t) {
             LossReport r;
             {
               py::gil_scoped_release release;
               r = t.update();
             }
             py::dict d;
             d["policy"] = r.policy;
             d["value"] = r.value;
             d["entropy"] = r.entropy;
             d["total"] = r.total;
             d["grad_norm"] = r.grad_norm;
             return d;
           })
      .def("run", [](Trainer& t, const std::string& out) {
        py::gil_scoped_release release;
        t.run(out);
      })
      .def("save", [](const Trainer& t, const std::string& dir) { t.save(dir); })
      .def("inject_human_action",
           [](Trainer& t, int action, bool force) { return t.interactive_env().inject_human_action(action, force); },
           py::arg("action"), py::arg("force") = false)
      .def_property_readonly("frames", &Trainer::frames)
      .def_property_readonly("updates", &Trainer::updates)
      .def_property_readonly("finished", &Trainer::finished)
      .def_property_readonly("recent_mean_return", &Trainer::recent_mean_return)
      .def_property_readonly("last_human_substituted",
                             [](const Trainer& t) { return t.last_batch().human_substituted; });

  m.def(
      "evaluate",
      [](const std::string& checkpoint_dir, const std::string& env, int episodes, int column, bool deterministic,
         std::uint64_t seed) {
        const auto model = load_model(checkpoint_dir);
        const auto cfg = env_config_from_json(json::parse(env));
        py::gil_scoped_release release;
        return to_json(evaluate(model, cfg, eval_options(episodes, column, deterministic, seed))).dump();
      },
      py::arg("checkpoint_dir"), py::arg("env_json"), py::arg("episodes") = 100, py::arg("column") = -1,
      py::arg("deterministic") = true, py::arg("seed") = 0x5eed);

  m.def(
      "random_baseline",
      [](const std::string& env, int episodes, std::uint64_t seed) {
        return to_json(random_baseline(env_config_from_json(json::parse(env)), episodes, seed)).dump();
      },
      py::arg("env_json"), py::arg("episodes") = 100, py::arg("seed") = 0x5eed);
}
