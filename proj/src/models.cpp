#include "gymgrid/models.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "gymgrid/nn/init.hpp"
#include "gymgrid/nn/ops.hpp"

namespace gymgrid {

using nlohmann::json;
namespace nn = gymgrid::nn;

// ---------------------------------------------------------------- names & spec

std::string architecture_name(Architecture a) {
  switch (a) {
    case Architecture::FullyConv: return "FullyConv";
    case Architecture::StrictlyConv: return "StrictlyConv";
    case Architecture::Fractal: return "Fractal";
  }
  return "?";
}

Architecture architecture_from_name(const std::string& s) {
  if (s == "FullyConv") return Architecture::FullyConv;
  if (s == "StrictlyConv") return Architecture::StrictlyConv;
  if (s == "Fractal") return Architecture::Fractal;
  throw std::invalid_argument("unknown architecture '" + s + "'");
}

std::string sharing_name(Sharing s) {
  switch (s) {
    case Sharing::NoShare: return "NoShare";
    case Sharing::IntraColumn: return "IntraColumn";
    case Sharing::InterColumn: return "InterColumn";
  }
  return "?";
}

Sharing sharing_from_name(const std::string& s) {
  if (s == "NoShare") return Sharing::NoShare;
  if (s == "IntraColumn") return Sharing::IntraColumn;
  if (s == "InterColumn") return Sharing::InterColumn;
  throw std::invalid_argument("unknown sharing mode '" + s + "'");
}

void ModelSpec::validate() const {
  if (input_channels < 1) throw std::invalid_argument("input_channels must be positive");
  if (hidden_channels < 1) throw std::invalid_argument("hidden_channels must be positive");
  if (action_channels < 1) throw std::invalid_argument("action_channels must be positive");
  if (architecture == Architecture::Fractal) {
    if (n_expansions < 1) throw std::invalid_argument("n_expansions must be at least 1");
    if (n_expansions > 12) throw std::invalid_argument("n_expansions above 12 is not supported");
    if (input_channels > hidden_channels)
      throw std::invalid_argument("fractal models need input_channels <= hidden_channels");
    if (!(droppath.local_drop_prob >= 0.0 && droppath.local_drop_prob < 1.0))
      throw std::invalid_argument("local_drop_prob must lie in [0,1)");
    if (!(droppath.global_fraction >= 0.0 && droppath.global_fraction <= 1.0))
      throw std::invalid_argument("global_fraction must lie in [0,1]");
  }
  if (architecture == Architecture::FullyConv) {
    if (input_width < 3 || input_height < 3)
      throw std::invalid_argument("FullyConv input size must be at least 3x3");
    if (dense_units < 1) throw std::invalid_argument("dense_units must be positive");
  }
}

json to_json(const ModelSpec& s) {
  return json{{"architecture", architecture_name(s.architecture)},
              {"input_channels", s.input_channels},
              {"hidden_channels", s.hidden_channels},
              {"action_channels", s.action_channels},
              {"n_expansions", s.n_expansions},
              {"sharing", sharing_name(s.sharing)},
              {"droppath",
               {{"local_drop_prob", s.droppath.local_drop_prob},
                {"global_fraction", s.droppath.global_fraction}}},
              {"input_width", s.input_width},
              {"input_height", s.input_height},
              {"dense_units", s.dense_units},
              {"init_seed", s.init_seed}};
}

ModelSpec model_spec_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("ModelSpec must be a JSON object");
  static const std::set<std::string> known = {
      "architecture", "input_channels", "hidden_channels", "action_channels",
      "n_expansions", "sharing",        "droppath",        "input_width",
      "input_height", "dense_units",    "init_seed"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown ModelSpec field '" + key + "'");
  ModelSpec s;
  try {
    if (j.contains("architecture"))
      s.architecture = architecture_from_name(j.at("architecture").get<std::string>());
    s.input_channels = j.value("input_channels", s.input_channels);
    s.hidden_channels = j.value("hidden_channels", s.hidden_channels);
    s.action_channels = j.value("action_channels", s.action_channels);
    s.n_expansions = j.value("n_expansions", s.n_expansions);
    if (j.contains("sharing")) s.sharing = sharing_from_name(j.at("sharing").get<std::string>());
    if (j.contains("droppath")) {
      const auto& d = j.at("droppath");
      s.droppath.local_drop_prob = d.value("local_drop_prob", s.droppath.local_drop_prob);
      s.droppath.global_fraction = d.value("global_fraction", s.droppath.global_fraction);
    }
    s.input_width = j.value("input_width", s.input_width);
    s.input_height = j.value("input_height", s.input_height);
    s.dense_units = j.value("dense_units", s.dense_units);
    s.init_seed = j.value("init_seed", s.init_seed);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed ModelSpec: ") + e.what());
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------- fractal layout

FractalLayout::FractalLayout(int columns) : columns_(columns) {
  if (columns < 1) throw std::invalid_argument("a fractal block needs at least one column");
  for (int i = 0; i < columns; ++i) {
    column_offset_.push_back(placements_);
    depths_.push_back(1 << (columns - 1 - i));
    placements_ += depths_.back();
  }
  auto walk = [&](auto&& self, int c) -> void {
    if (c == 1) return;
    self(self, c - 1);
    if (c - 1 >= 2) join_arity_.push_back(c - 1);
    self(self, c - 1);
  };
  walk(walk, columns);
  if (columns >= 2) join_arity_.push_back(columns);
}

int FractalLayout::layer_id(int column, int index, Sharing sharing) const {
  if (column < 0 || column >= columns_ || index < 0 || index >= depth(column))
    throw std::out_of_range("no placement " + std::to_string(index) + " in column " +
                            std::to_string(column));
  switch (sharing) {
    case Sharing::NoShare: return column_offset_[static_cast<std::size_t>(column)] + index;
    case Sharing::IntraColumn: return column;
    case Sharing::InterColumn: return 0;
  }
  return 0;
}

int FractalLayout::unique_layers(Sharing sharing) const {
  switch (sharing) {
    case Sharing::NoShare: return placements_;
    case Sharing::IntraColumn: return columns_;
    case Sharing::InterColumn: return 1;
  }
  return 0;
}

DropPathMask sample_droppath(const ModelSpec& spec, Rng& rng) {
  if (spec.architecture != Architecture::Fractal)
    throw std::invalid_argument("drop-path applies to fractal models only");
  const FractalLayout layout(spec.n_expansions);
  if (rng.uniform01() < spec.droppath.global_fraction)
    return DropPathMask::global(static_cast<int>(rng.below(static_cast<std::uint64_t>(layout.columns()))));

  DropPathMask mask;
  mask.mode = DropPathMask::Mode::Local;
  const double keep_prob = 1.0 - spec.droppath.local_drop_prob;
  for (const int arity : layout.join_arity()) {
    std::vector<std::uint8_t> flags(static_cast<std::size_t>(arity));
    for (;;) {
      bool any = false;
      for (auto& f : flags) {
        f = rng.bernoulli(keep_prob) ? 1 : 0;
        any = any || f;
      }
      if (any) break;
    }
    mask.keep.push_back(std::move(flags));
  }
  return mask;
}

// ---------------------------------------------------------------- layers

template <typename T>
nn::Var<T> ConvLayer<T>::operator()(const nn::Var<T>& x) const {
  const int pad = stride == 1 ? (kernel() - 1) / 2 : 0;
  return nn::conv2d(x, weight, bias, stride, pad);
}

template <typename T>
nn::Var<T> StridedValueHead<T>::operator()(const nn::Var<T>& features) const {
  nn::Var<T> v = features;
  while (v.shape().h > 1 || v.shape().w > 1) v = nn::relu(reduce(nn::pad_to_even(v)));
  return out(v);
}

namespace {

template <typename T>
ConvLayer<T> make_conv(const std::string& name, int in, int out, int k, int stride, double gain,
                       Rng& rng) {
  nn::Tensor<T> w(nn::Shape{out, in, k, k});
  nn::orthogonal_init(w, gain, rng);
  return ConvLayer<T>{nn::Var<T>::parameter(std::move(w), name + ".weight"),
                      nn::Var<T>::parameter(nn::Tensor<T>(nn::Shape{out, 1, 1, 1}), name + ".bias"),
                      stride};
}

const double kReluGain = std::sqrt(2.0);
constexpr int kValueReduceKernel = 2;

}  // namespace

template <typename T>
PolicyModel<T>::PolicyModel(ModelSpec spec) : spec_(spec) {
  spec_.validate();
  Rng rng(derive_seed(spec_.init_seed, 0x6d6f64656cULL));
  const int hid = spec_.hidden_channels;

  switch (spec_.architecture) {
    case Architecture::FullyConv:
    case Architecture::StrictlyConv:
      body_.push_back(make_conv<T>("body.conv5", spec_.input_channels, hid, 5, 1, kReluGain, rng));
      body_.push_back(make_conv<T>("body.conv3", hid, hid, 3, 1, kReluGain, rng));
      break;
    case Architecture::Fractal: {
      layout_.emplace(spec_.n_expansions);
      const int n = layout_->unique_layers(spec_.sharing);
      for (int i = 0; i < n; ++i)
        body_.push_back(
            make_conv<T>("body.fractal" + std::to_string(i), hid, hid, 3, 1, kReluGain, rng));
      break;
    }
  }
  action_ = make_conv<T>("action", hid, spec_.action_channels, 1, 1, 1.0, rng);

  if (spec_.architecture == Architecture::FullyConv) {
    const int features = hid * spec_.input_width * spec_.input_height;
    nn::Tensor<T> w1(nn::Shape{spec_.dense_units, features, 1, 1});
    nn::orthogonal_init(w1, 1.0, rng);
    nn::Tensor<T> w2(nn::Shape{1, spec_.dense_units, 1, 1});
    nn::orthogonal_init(w2, 1.0, rng);
    dense1_w_ = nn::Var<T>::parameter(std::move(w1), "value.dense1.weight");
    dense1_b_ = nn::Var<T>::parameter(nn::Tensor<T>(nn::Shape{spec_.dense_units, 1, 1, 1}),
                                      "value.dense1.bias");
    dense2_w_ = nn::Var<T>::parameter(std::move(w2), "value.dense2.weight");
    dense2_b_ = nn::Var<T>::parameter(nn::Tensor<T>(nn::Shape{1, 1, 1, 1}), "value.dense2.bias");
  } else {
    value_head_.reduce =
        make_conv<T>("value.reduce", hid, hid, kValueReduceKernel, 2, kReluGain, rng);
    value_head_.out = make_conv<T>("value.out", hid, 1, 1, 1, 1.0, rng);
  }

  for (const auto& l : body_) {
    params_.push_back(l.weight);
    params_.push_back(l.bias);
  }
  params_.push_back(action_.weight);
  params_.push_back(action_.bias);
  if (spec_.architecture == Architecture::FullyConv) {
    for (const auto& p : {dense1_w_, dense1_b_, dense2_w_, dense2_b_}) params_.push_back(p);
  } else {
    for (const auto& p : {value_head_.reduce.weight, value_head_.reduce.bias,
                          value_head_.out.weight, value_head_.out.bias})
      params_.push_back(p);
  }
}

template <typename T>
nn::Var<T> PolicyModel<T>::fractal_body(const nn::Var<T>& input, const ForwardMode& mode) const {
  const FractalLayout& layout = *layout_;
  const nn::Var<T> x = nn::pad_channels(input, spec_.hidden_channels);

  std::vector<int> counters(static_cast<std::size_t>(layout.columns()), 0);
  auto apply = [&](int column, const nn::Var<T>& v) {
    const int j = counters[static_cast<std::size_t>(column)]++;
    if (hook_) hook_(column, j);
    const auto& layer = body_[static_cast<std::size_t>(layout.layer_id(column, j, spec_.sharing))];
    return nn::relu(layer(v));
  };
  auto run_column = [&](int column) {
    if (column < 0 || column >= layout.columns())
      throw std::out_of_range("column " + std::to_string(column) + " outside 0.." +
                              std::to_string(layout.columns() - 1));
    nn::Var<T> v = x;
    for (int j = 0; j < layout.depth(column); ++j) v = apply(column, v);
    return v;
  };

  const DropPathMask* mask = nullptr;
  if (const auto* eval = std::get_if<EvalMode>(&mode)) {
    if (eval->column != -1) return run_column(eval->column);
  } else {
    const auto& m = std::get<TrainMode>(mode).mask;
    if (m.mode == DropPathMask::Mode::Global) return run_column(m.column);
    if (m.mode == DropPathMask::Mode::Local) {
      if (m.keep.size() != layout.join_arity().size())
        throw std::invalid_argument("drop-path mask does not match the fractal layout");
      mask = &m;
    }
  }

  std::size_t join_index = 0;
  auto join = [&](const std::vector<nn::Var<T>>& inputs) {
    if (inputs.size() == 1) return inputs.front();
    const std::size_t id = join_index++;
    if (!mask) return nn::mean_of(inputs);
    const auto& keep = mask->keep[id];
    if (keep.size() != inputs.size())
      throw std::invalid_argument("drop-path mask arity mismatch at join " + std::to_string(id));
    std::vector<nn::Var<T>> kept;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      if (keep[i]) kept.push_back(inputs[i]);
    if (kept.empty()) throw std::invalid_argument("drop-path mask starves join " + std::to_string(id));
    return nn::mean_of(kept);
  };
  auto expand = [&](auto&& self, int c, const nn::Var<T>& v) -> std::vector<nn::Var<T>> {
    if (c == 1) return {apply(0, v)};
    nn::Var<T> skip = apply(c - 1, v);
    const nn::Var<T> mid = join(self(self, c - 1, v));
    auto outs = self(self, c - 1, mid);
    outs.push_back(std::move(skip));
    return outs;
  };
  return join(expand(expand, layout.columns(), x));
}

template <typename T>
PolicyOutput<T> PolicyModel<T>::forward(const nn::Var<T>& obs, const ForwardMode& mode) const {
  const nn::Shape s = obs.shape();
  if (s.c != spec_.input_channels)
    throw std::invalid_argument("observation has " + std::to_string(s.c) +
                                " channels, model expects " + std::to_string(spec_.input_channels));
  if (s.h < 3 || s.w < 3) throw std::invalid_argument("observation must be at least 3x3");

  nn::Var<T> features;
  if (spec_.architecture == Architecture::Fractal) {
    features = fractal_body(obs, mode);
  } else {
    if (const auto* eval = std::get_if<EvalMode>(&mode); eval && eval->column != -1)
      throw std::out_of_range("column evaluation needs a fractal model");
    if (spec_.architecture == Architecture::FullyConv &&
        (s.h != spec_.input_height || s.w != spec_.input_width))
      throw std::invalid_argument(
          "FullyConv is bound to " + std::to_string(spec_.input_width) + "x" +
          std::to_string(spec_.input_height) + " inputs, got " + std::to_string(s.w) + "x" +
          std::to_string(s.h));
    features = nn::relu(body_[1](nn::relu(body_[0](obs))));
  }

  PolicyOutput<T> out;
  out.logits = action_(features);
  if (spec_.architecture == Architecture::FullyConv) {
    const auto hidden = nn::tanh(nn::linear(features, dense1_w_, dense1_b_));
    out.value = nn::linear(hidden, dense2_w_, dense2_b_);
  } else {
    out.value = value_head_(features);
  }
  return out;
}

template <typename T>
ParameterCount PolicyModel<T>::count_parameters() const {
  ParameterCount c;
  c.unique_body_convs = static_cast<int>(body_.size());
  for (const auto& p : params_) c.total_scalars += p.value().size();
  return c;
}

template struct ConvLayer<float>;
template struct ConvLayer<double>;
template struct StridedValueHead<float>;
template struct StridedValueHead<double>;
template class PolicyModel<float>;
template class PolicyModel<double>;

// ---------------------------------------------------------------- analysis

int chain_receptive_field(const std::vector<std::pair<int, int>>& layers) {
  int rf = 1;
  int jump = 1;
  for (const auto& [k, stride] : layers) {
    rf += (k - 1) * jump;
    jump *= stride;
  }
  return rf;
}

std::pair<int, int> receptive_field(const ModelSpec& spec, int column) {
  std::vector<std::pair<int, int>> chain;
  if (spec.architecture == Architecture::Fractal) {
    const FractalLayout layout(spec.n_expansions);
    if (column < -1 || column >= layout.columns())
      throw std::out_of_range("column " + std::to_string(column) + " outside the fractal block");
    const int depth = layout.depth(column == -1 ? 0 : column);
    chain.assign(static_cast<std::size_t>(depth), {3, 1});
  } else {
    if (column != -1) throw std::out_of_range("baseline models have no columns");
    chain = {{5, 1}, {3, 1}};
  }
  chain.emplace_back(1, 1);  // action head
  const int rf = chain_receptive_field(chain);
  return {rf, rf};
}

double value_head_counting_check(int width, int height, const std::vector<std::uint8_t>& alive) {
  if (alive.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw std::invalid_argument("alive mask size does not match dimensions");
  nn::NoGradGuard no_grad;
  StridedValueHead<double> head;
  head.reduce = {nn::Var<double>::constant(nn::Tensor<double>(nn::Shape{1, 1, 2, 2}, 1.0)),
                 nn::Var<double>::constant(nn::Tensor<double>(nn::Shape{1, 1, 1, 1}, 0.0)), 2};
  head.out = {nn::Var<double>::constant(nn::Tensor<double>(nn::Shape{1, 1, 1, 1}, 1.0)),
              nn::Var<double>::constant(nn::Tensor<double>(nn::Shape{1, 1, 1, 1}, 0.0)), 1};
  nn::Tensor<double> board(nn::Shape{1, 1, height, width});
  for (std::size_t i = 0; i < alive.size(); ++i) board[i] = alive[i] ? 1.0 : 0.0;
  return head(nn::Var<double>::constant(std::move(board))).item();
}

}  // namespace gymgrid
