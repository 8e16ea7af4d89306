#include "mtsk/checkpoint.hpp"

#include "mtsk/blob.hpp"
#include "mtsk/hashing.hpp"
#include "mtsk/inference.hpp"

#include <filesystem>
#include <set>

namespace mtsk {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "mtsk-checkpoint";
constexpr const char* kBlob = "tensors.bin";

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw CheckpointError("checkpoint manifest: " + where + " lacks '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint manifest: " + where + "." + key + ": " + e.what());
  }
}

}  // namespace

std::string to_string(Phase p) {
  switch (p) {
    case Phase::Pretrain: return "pretrain";
    case Phase::Adapt: return "adapt";
    case Phase::Inference: return "inference";
  }
  return "?";
}

Phase parse_phase(std::string_view s) {
  if (s == "pretrain") return Phase::Pretrain;
  if (s == "adapt") return Phase::Adapt;
  if (s == "inference") return Phase::Inference;
  throw ConfigError("unknown phase '" + std::string(s) + "'");
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
  fs::create_directories(dir);
  BlobWriter blob;
  json directory = json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    const auto offset = blob.append(t.value());
    directory.push_back(
        json{{"name", name}, {"shape", {t.rows(), t.cols()}}, {"dtype", "float32"}, {"offset", offset}});
  }
  json manifest{{"format", kFormat},
                {"version", kCheckpointVersion},
                {"byte_order", "little"},
                {"model", ckpt.model},
                {"strategy", to_string(ckpt.model.lora.strategy)},
                {"phase", to_string(ckpt.phase)},
                {"seed", ckpt.model.seed},
                {"corpus", ckpt.corpus},
                {"extra", ckpt.extra},
                {"pruned_to", ckpt.pruned_to ? json{ckpt.pruned_to->audio + 1, ckpt.pruned_to->video + 1}
                                             : json(nullptr)},
                {"blob", {{"file", kBlob}, {"bytes", blob.bytes().size()}, {"sha256", sha256_hex(blob.bytes())}}},
                {"tensors", directory}};
  write_file_bytes((fs::path(dir) / kBlob).string(), blob.bytes());
  write_file_bytes((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& dir) {
  const auto manifest_path = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest_path)) throw CheckpointError("checkpoint: missing " + manifest_path.string());
  json m;
  try {
    m = json::parse(read_file_bytes(manifest_path.string()));
  } catch (const json::parse_error& e) {
    throw CheckpointError("checkpoint manifest: malformed JSON: " + std::string(e.what()));
  }
  if (field<std::string>(m, "format", "root") != kFormat) {
    throw CheckpointError("checkpoint manifest: format is not " + std::string(kFormat));
  }
  const int version = field<int>(m, "version", "root");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint manifest: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  try {
    c.model = m.at("model").get<ModelConfig>();
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint manifest: model: " + std::string(e.what()));
  }
  c.phase = parse_phase(field<std::string>(m, "phase", "root"));
  c.corpus = m.value("corpus", json(nullptr));
  c.extra = m.value("extra", json::object());
  if (m.contains("pruned_to") && !m.at("pruned_to").is_null()) {
    const auto p = field<std::vector<int>>(m, "pruned_to", "root");
    if (p.size() != 2) throw CheckpointError("checkpoint manifest: pruned_to must be [i, j]");
    c.pruned_to = ScaleIndex{p[0] - 1, p[1] - 1};
  }
  const json& blob_info = m.at("blob");
  const auto blob_path = fs::path(dir) / field<std::string>(blob_info, "file", "blob");
  if (!fs::exists(blob_path)) throw CheckpointError("checkpoint: missing blob " + blob_path.string());
  BlobReader blob(read_file_bytes(blob_path.string()));
  if (sha256_hex(blob.bytes()) != field<std::string>(blob_info, "sha256", "blob")) {
    throw CheckpointError("checkpoint: checksum mismatch for " + blob_path.string());
  }
  std::set<std::string> seen;
  for (const auto& entry : m.at("tensors")) {
    const auto name = field<std::string>(entry, "name", "tensor");
    if (!seen.insert(name).second) throw CheckpointError("checkpoint: duplicate tensor " + name);
    if (field<std::string>(entry, "dtype", name) != "float32") {
      throw CheckpointError("checkpoint: tensor " + name + " is not float32");
    }
    const auto shape = field<std::vector<Index>>(entry, "shape", name);
    if (shape.size() != 2) throw CheckpointError("checkpoint: tensor " + name + " is not 2-D");
    const auto offset = field<std::uint64_t>(entry, "offset", name);
    try {
      c.tensors.emplace(name, Tensor<float>(blob.read<float>(offset, shape[0], shape[1], name)));
    } catch (const std::runtime_error& e) {
      throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
  }
  return c;
}

Checkpoint make_checkpoint(const MtskModel<float>& model) {
  Checkpoint c;
  c.model = model.config();
  c.phase = model.phase();
  c.tensors = model.parameters();
  return c;
}

MtskModel<float> model_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.pruned_to) {
    throw CheckpointError("checkpoint is pruned to one scale; a full model cannot be rebuilt");
  }
  MtskModel<float> model(ckpt.model);
  auto params = model.parameters();
  for (auto& [name, t] : params) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw CheckpointError("checkpoint: missing tensor " + name);
    if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) {
      throw CheckpointError("checkpoint: tensor " + name + " has shape " +
                            shape_string(it->second.rows(), it->second.cols()) + ", model expects " +
                            shape_string(t.rows(), t.cols()));
    }
    t.mutable_value() = it->second.value();
  }
  for (const auto& [name, t] : ckpt.tensors) {
    if (!params.count(name)) throw CheckpointError("checkpoint: unexpected tensor " + name);
  }
  model.set_phase(ckpt.phase);
  return model;
}

Checkpoint prune_checkpoint(const Checkpoint& ckpt, ScaleIndex idx) {
  if (ckpt.pruned_to) throw CheckpointError("checkpoint is already pruned");
  Checkpoint out = ckpt;
  out.tensors = prune_to_scale(ckpt.model, ckpt.tensors, idx);
  out.pruned_to = idx;
  return out;
}

}  // namespace mtsk
