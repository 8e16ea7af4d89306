#pragma once

#include "mtsk/model.hpp"

#include "json.hpp"

#include <optional>
#include <string>

namespace mtsk {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

/// A model on disk: `manifest.json` plus one raw float32 blob `tensors.bin`.
struct Checkpoint {
  ModelConfig model;
  Phase phase = Phase::Inference;
  ParameterMap<float> tensors;
  std::optional<ScaleIndex> pruned_to;  // set when only one scale's parameters are stored
  nlohmann::json corpus = nullptr;      // spec echo of the training corpus
  nlohmann::json extra = nlohmann::json::object();
};

std::string to_string(Phase p);
Phase parse_phase(std::string_view s);

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);
/// Validates format, version, checksum, shapes and uniqueness of names.
Checkpoint load_checkpoint(const std::string& dir);

/// Snapshot of every parameter of `model` (values shared, not copied).
Checkpoint make_checkpoint(const MtskModel<float>& model);

/// Rebuilds a full model; every parameter must be present exactly as the
/// configuration lays it out.
MtskModel<float> model_from_checkpoint(const Checkpoint& ckpt);

/// Keeps only the parameters used at `idx`.
Checkpoint prune_checkpoint(const Checkpoint& ckpt, ScaleIndex idx);

}  // namespace mtsk
