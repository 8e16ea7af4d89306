#pragma once

#include "mtsk/corpus.hpp"
#include "mtsk/cost.hpp"
#include "mtsk/inference.hpp"
#include "mtsk/model.hpp"
#include "mtsk/train.hpp"

#include "json.hpp"

#include <string>

namespace mtsk {

/// One JSON document with sections corpus, model, grid, strategy, train,
/// decode and cost. `grid` and `strategy` override the model's own; the
/// train section may hold a nested `pretrain` schedule for the base phase.
struct RunConfig {
  CorpusSpec corpus;
  ModelConfig model;
  TrainConfig train;
  TrainConfig pretrain = default_pretrain();
  DecodeConfig decode;
  CostSpec cost;

  static TrainConfig default_pretrain() {
    TrainConfig t;
    t.epochs = 5;
    t.learning_rate = 3e-3;
    return t;
  }

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Parses and validates; errors name the file and the offending field.
RunConfig load_run_config(const std::string& path);

}  // namespace mtsk
