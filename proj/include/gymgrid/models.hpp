#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gymgrid/nn/autodiff.hpp"
#include "gymgrid/rng.hpp"

namespace gymgrid {

enum class Architecture { FullyConv, StrictlyConv, Fractal };
enum class Sharing { NoShare, IntraColumn, InterColumn };

std::string architecture_name(Architecture a);
Architecture architecture_from_name(const std::string& s);
std::string sharing_name(Sharing s);
Sharing sharing_from_name(const std::string& s);

struct DropPathConfig {
  double local_drop_prob = 0.15;
  double global_fraction = 0.5;
  friend bool operator==(const DropPathConfig&, const DropPathConfig&) = default;
};

struct ModelSpec {
  Architecture architecture = Architecture::StrictlyConv;
  int input_channels = 1;
  int hidden_channels = 32;
  int action_channels = 1;
  /// Fractal only; the block has this many columns.
  int n_expansions = 5;
  Sharing sharing = Sharing::NoShare;
  DropPathConfig droppath;
  /// FullyConv only: the input size its dense value head is bound to.
  int input_width = 16;
  int input_height = 16;
  /// FullyConv value head width.
  int dense_units = 256;
  std::uint64_t init_seed = 0;

  void validate() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

/// Static shape of a fractal block with `columns` columns.
///
/// Expansion f_1 = one conv; f_c(x) = join(f_{c-1}(join(f_{c-1}(x))) ++ [conv_{c-1}(x)]).
/// Column i has depth 2^(columns-1-i); column 0 is the deepest. Joins with a
/// single input are identities and are not listed.
class FractalLayout {
 public:
  explicit FractalLayout(int columns);

  int columns() const noexcept { return columns_; }
  int depth(int column) const { return depths_.at(static_cast<std::size_t>(column)); }
  int placements() const noexcept { return placements_; }
  /// Number of inputs of each join, in forward evaluation order. A join with
  /// arity a averages columns 0..a-1.
  const std::vector<int>& join_arity() const noexcept { return join_arity_; }
  /// Layer that the j-th placement of `column` uses under a sharing mode.
  int layer_id(int column, int index, Sharing sharing) const;
  int unique_layers(Sharing sharing) const;

 private:
  int columns_;
  int placements_ = 0;
  std::vector<int> depths_;
  std::vector<int> column_offset_;
  std::vector<int> join_arity_;
};

struct DropPathMask {
  enum class Mode { None, Local, Global };
  Mode mode = Mode::None;
  /// Global mode: the single active column.
  int column = -1;
  /// Local mode: keep flags per join input, indexed like join_arity().
  std::vector<std::vector<std::uint8_t>> keep;

  static DropPathMask none() { return {}; }
  static DropPathMask global(int column) { return {Mode::Global, column, {}}; }
};

/// Global with probability global_fraction (uniform column), otherwise local
/// with every join input dropped independently; a join that would lose all of
/// its inputs is redrawn.
DropPathMask sample_droppath(const ModelSpec& spec, Rng& rng);

struct EvalMode {
  /// -1 runs the whole block; otherwise only that column.
  int column = -1;
};
struct TrainMode {
  DropPathMask mask;
};
using ForwardMode = std::variant<EvalMode, TrainMode>;

template <typename T>
struct PolicyOutput {
  /// (N, action_channels, H, W)
  nn::Var<T> logits;
  /// (N, 1, 1, 1)
  nn::Var<T> value;
};

template <typename T>
struct ConvLayer {
  nn::Var<T> weight;  // (out, in, k, k)
  nn::Var<T> bias;    // (out, 1, 1, 1)
  int stride = 1;

  int kernel() const { return weight.shape().h; }
  nn::Var<T> operator()(const nn::Var<T>& x) const;
};

/// Strided value head: one shared 2x2/stride-2 conv applied (after zero-padding
/// odd sizes on the high edge) until the map is 1x1, then a 1x1 conv to a
/// scalar.
template <typename T>
struct StridedValueHead {
  ConvLayer<T> reduce;
  ConvLayer<T> out;

  nn::Var<T> operator()(const nn::Var<T>& features) const;
};

struct ParameterCount {
  int unique_body_convs = 0;
  std::size_t total_scalars = 0;
};

template <typename T>
class PolicyModel {
 public:
  using PlacementHook = std::function<void(int column, int index)>;

  explicit PolicyModel(ModelSpec spec);

  const ModelSpec& spec() const noexcept { return spec_; }

  /// obs: (N, input_channels, H, W), H and W at least 3.
  PolicyOutput<T> forward(const nn::Var<T>& obs, const ForwardMode& mode = EvalMode{}) const;

  /// Unique parameters in a fixed order.
  const std::vector<nn::Var<T>>& parameters() const noexcept { return params_; }
  const std::vector<ConvLayer<T>>& body_layers() const noexcept { return body_; }
  std::vector<ConvLayer<T>>& body_layers() noexcept { return body_; }
  const StridedValueHead<T>& value_head() const noexcept { return value_head_; }
  const std::optional<FractalLayout>& layout() const noexcept { return layout_; }

  /// Called for every fractal placement evaluated, in evaluation order.
  void set_placement_hook(PlacementHook hook) { hook_ = std::move(hook); }

  ParameterCount count_parameters() const;

 private:
  nn::Var<T> fractal_body(const nn::Var<T>& x, const ForwardMode& mode) const;

  ModelSpec spec_;
  std::optional<FractalLayout> layout_;
  std::vector<ConvLayer<T>> body_;
  ConvLayer<T> action_;
  StridedValueHead<T> value_head_;
  // FullyConv value head
  nn::Var<T> dense1_w_, dense1_b_, dense2_w_, dense2_b_;
  std::vector<nn::Var<T>> params_;
  PlacementHook hook_;
};

/// Receptive field (height, width) of one action logit. column -1 means the
/// whole model (for the fractal block the deepest column dominates).
std::pair<int, int> receptive_field(const ModelSpec& spec, int column = -1);

/// Receptive field of a chain of (kernel, stride) layers.
int chain_receptive_field(const std::vector<std::pair<int, int>>& layers);

/// Runs a 1-channel strided value head whose weights are all 1 and biases 0
/// over a binary board image; the result is the number of ones.
double value_head_counting_check(int width, int height, const std::vector<std::uint8_t>& alive);

}  // namespace gymgrid
