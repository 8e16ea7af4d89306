#include "mtsk/config.hpp"

#include "mtsk/hashing.hpp"
#include "mtsk/json_util.hpp"

#include <filesystem>

namespace mtsk {

using nlohmann::json;

void RunConfig::validate() const {
  corpus.validate();
  model.validate();
  train.validate();
  pretrain.validate();
  decode.validate();
  cost.validate();
  if (model.audio_frame_dim != corpus.audio_dim || model.video_frame_dim != corpus.video_dim) {
    throw ConfigError("model frame dims (" + std::to_string(model.audio_frame_dim) + "," +
                      std::to_string(model.video_frame_dim) + ") do not match corpus (" +
                      std::to_string(corpus.audio_dim) + "," + std::to_string(corpus.video_dim) +
                      ")");
  }
  if (model.text_vocab != corpus.total_vocab()) {
    throw ConfigError("model text_vocab " + std::to_string(model.text_vocab) +
                      " does not match corpus vocabulary " + std::to_string(corpus.total_vocab()));
  }
}

void to_json(json& j, const RunConfig& c) {
  json train = c.train;
  train["pretrain"] = c.pretrain;
  j = json{{"corpus", c.corpus},
           {"model", c.model},
           {"grid", c.model.grid},
           {"strategy", to_string(c.model.lora.strategy)},
           {"train", train},
           {"decode", c.decode},
           {"cost", c.cost}};
}

void from_json(const json& j, RunConfig& c) {
  require_known_keys(j, "config", {"corpus", "model", "grid", "strategy", "train", "decode", "cost"});
  if (j.contains("corpus")) from_json(j.at("corpus"), c.corpus);
  if (j.contains("model")) from_json(j.at("model"), c.model);
  if (j.contains("grid")) from_json(j.at("grid"), c.model.grid);
  if (j.contains("strategy")) {
    std::string s;
    read_optional(j, "config", "strategy", s);
    c.model.lora.strategy = parse_strategy(s);
  }
  if (j.contains("train")) {
    json train = j.at("train");
    if (!train.is_object()) throw ConfigError("train: expected an object");
    if (train.contains("pretrain")) {
      from_json(train.at("pretrain"), c.pretrain);
      train.erase("pretrain");
    }
    from_json(train, c.train);
  }
  if (j.contains("decode")) from_json(j.at("decode"), c.decode);
  if (j.contains("cost")) from_json(j.at("cost"), c.cost);
  // Frame dims and vocabulary follow the corpus unless the model sets them.
  const json model = j.value("model", json::object());
  if (!model.contains("audio_frame_dim")) c.model.audio_frame_dim = c.corpus.audio_dim;
  if (!model.contains("video_frame_dim")) c.model.video_frame_dim = c.corpus.video_dim;
  if (!model.contains("text_vocab")) c.model.text_vocab = c.corpus.total_vocab();
  if (!model.contains("encoder_seed")) c.model.encoder_seed = c.corpus.seed;
}

RunConfig load_run_config(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError(path + ": no such config file");
  json j;
  try {
    j = json::parse(read_file_bytes(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": malformed JSON: " + e.what());
  }
  RunConfig c;
  try {
    from_json(j, c);
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

}  // namespace mtsk
