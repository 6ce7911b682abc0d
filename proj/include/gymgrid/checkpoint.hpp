#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gymgrid/models.hpp"
#include "gymgrid/nn/tensor.hpp"

namespace gymgrid {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "tensors.bin";

/// A checkpoint directory holds `manifest.json`
///   {"format_version": 1, "spec": {...}, "blob": "tensors.bin",
///    "tensors": {name: {"shape": [...], "dtype": "f32", "offset": bytes, "length": bytes}},
///    "extra": {...}}
/// and one raw little-endian float32 blob. Tensors are laid out back to back in
/// the order they are stored here.
struct Checkpoint {
  ModelSpec spec;
  std::vector<std::pair<std::string, nn::Tensor<float>>> tensors;
  /// Free-form state saved alongside the weights (trainer bookkeeping).
  nlohmann::json extra = nlohmann::json::object();

  const nn::Tensor<float>* find(const std::string& name) const;
};

Checkpoint capture(const PolicyModel<float>& model);

/// Copies weights by parameter name. Throws std::invalid_argument on a missing
/// tensor or a shape mismatch.
void restore(PolicyModel<float>& model, const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Builds a model from a checkpoint's spec and loads its weights.
PolicyModel<float> load_model(const std::filesystem::path& dir);

}  // namespace gymgrid
