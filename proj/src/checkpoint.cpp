#include "gymgrid/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gymgrid {

using nlohmann::json;

namespace {

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffU) << 24) | ((v & 0xff00U) << 8) | ((v >> 8) & 0xff00U) | (v >> 24);
}

void write_floats(std::ofstream& out, const std::vector<float>& data) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  } else {
    for (float f : data) {
      const std::uint32_t le = to_little(std::bit_cast<std::uint32_t>(f));
      out.write(reinterpret_cast<const char*>(&le), sizeof le);
    }
  }
}

std::vector<float> read_floats(const std::vector<char>& blob, std::size_t offset, std::size_t count) {
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t raw;
    std::memcpy(&raw, blob.data() + offset + i * sizeof raw, sizeof raw);
    out[i] = std::bit_cast<float>(to_little(raw));
  }
  return out;
}

}  // namespace

const nn::Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

Checkpoint capture(const PolicyModel<float>& model) {
  Checkpoint c;
  c.spec = model.spec();
  for (const auto& p : model.parameters()) c.tensors.emplace_back(p.name(), p.value());
  return c;
}

void restore(PolicyModel<float>& model, const Checkpoint& ckpt) {
  for (const auto& p : model.parameters()) {
    const nn::Tensor<float>* t = ckpt.find(p.name());
    if (!t) throw std::invalid_argument("checkpoint lacks tensor '" + p.name() + "'");
    if (t->shape() != p.shape())
      throw std::invalid_argument("tensor '" + p.name() + "' has shape " + t->shape().str() +
                                  ", model expects " + p.shape().str());
    auto var = p;
    var.mutable_value() = *t;
  }
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  json table = json::object();
  std::size_t offset = 0;
  {
    std::ofstream blob(dir / kBlobFile, std::ios::binary | std::ios::trunc);
    if (!blob) throw std::runtime_error("cannot write " + (dir / kBlobFile).string());
    for (const auto& [name, t] : ckpt.tensors) {
      const auto& s = t.shape();
      const std::size_t length = t.size() * sizeof(float);
      table[name] = {{"shape", {s.n, s.c, s.h, s.w}},
                     {"dtype", "f32"},
                     {"offset", offset},
                     {"length", length}};
      write_floats(blob, t.vec());
      offset += length;
    }
    if (!blob) throw std::runtime_error("failed writing " + (dir / kBlobFile).string());
  }
  json order = json::array();
  for (const auto& [name, _] : ckpt.tensors) order.push_back(name);
  const json manifest = {{"format_version", kCheckpointFormatVersion},
                         {"spec", to_json(ckpt.spec)},
                         {"blob", kBlobFile},
                         {"tensors", table},
                         {"order", order},
                         {"extra", ckpt.extra}};
  std::ofstream out(dir / kManifestFile, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / kManifestFile).string());
  out << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestFile);
  if (!in) throw std::runtime_error("no checkpoint manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed checkpoint manifest: " + std::string(e.what()));
  }
  const int version = manifest.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion)
    throw std::runtime_error("unsupported checkpoint format_version " + std::to_string(version));

  const auto blob_name = manifest.value("blob", std::string(kBlobFile));
  std::ifstream bin(dir / blob_name, std::ios::binary);
  if (!bin) throw std::runtime_error("missing checkpoint blob " + (dir / blob_name).string());
  const std::vector<char> blob((std::istreambuf_iterator<char>(bin)),
                               std::istreambuf_iterator<char>());

  Checkpoint c;
  c.spec = model_spec_from_json(manifest.at("spec"));
  c.extra = manifest.value("extra", json::object());
  const auto& table = manifest.at("tensors");
  std::vector<std::string> order;
  if (manifest.contains("order")) {
    order = manifest.at("order").get<std::vector<std::string>>();
  } else {
    for (const auto& [name, _] : table.items()) order.push_back(name);
  }
  for (const auto& name : order) {
    const auto& e = table.at(name);
    if (e.at("dtype").get<std::string>() != "f32")
      throw std::runtime_error("tensor '" + name + "' has unsupported dtype");
    const auto dims = e.at("shape").get<std::vector<int>>();
    if (dims.size() != 4) throw std::runtime_error("tensor '" + name + "' is not rank 4");
    const nn::Shape shape{dims[0], dims[1], dims[2], dims[3]};
    const auto offset = e.at("offset").get<std::size_t>();
    const auto length = e.at("length").get<std::size_t>();
    if (length != shape.size() * sizeof(float) || offset + length > blob.size())
      throw std::runtime_error("tensor '" + name + "' lies outside the blob");
    c.tensors.emplace_back(name, nn::Tensor<float>(shape, read_floats(blob, offset, shape.size())));
  }
  return c;
}

PolicyModel<float> load_model(const std::filesystem::path& dir) {
  const Checkpoint c = load_checkpoint(dir);
  PolicyModel<float> model(c.spec);
  restore(model, c);
  return model;
}

}  // namespace gymgrid
