#include "mtsk/model.hpp"

#include "mtsk/json_util.hpp"

#include <sstream>

namespace mtsk {

using nlohmann::json;

namespace {

constexpr const char* kPromptWords[Tokenizer::kPromptWords] = {"Transcribe", "speech", "and",
                                                               "video",      "to",     "text",
                                                               "."};

}  // namespace

std::string to_string(PositionScheme p) {
  return p == PositionScheme::Aligned ? "aligned" : "sequential";
}

PositionScheme parse_position_scheme(std::string_view s) {
  if (s == "aligned") return PositionScheme::Aligned;
  if (s == "sequential") return PositionScheme::Sequential;
  throw ConfigError("unknown position scheme '" + std::string(s) +
                    "' (expected aligned|sequential)");
}

void DecoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("decoder: " + msg); };
  if (layers < 1) fail("layers must be >= 1");
  if (heads < 1) fail("heads must be >= 1");
  if (d_model < 2 || d_model % 2 != 0) fail("d_model must be even and >= 2");
  if (d_model % heads != 0) {
    fail("d_model " + std::to_string(d_model) + " not divisible by heads " +
         std::to_string(heads));
  }
  if (d_ff < 1) fail("d_ff must be >= 1");
  if (max_text_length < 1) fail("max_text_length must be >= 1");
  if (max_length < max_text_length) fail("max_length must be >= max_text_length");
}

std::string Tokenizer::prompt_text(Task task) {
  switch (task) {
    case Task::Asr: return "Transcribe speech to text .";
    case Task::Vsr: return "Transcribe video to text .";
    case Task::Avsr: return "Transcribe speech and video to text .";
  }
  return {};
}

std::vector<int> Tokenizer::encode_prompt(const std::string& text) const {
  std::istringstream in(text);
  std::vector<int> ids;
  std::string word;
  while (in >> word) {
    int found = -1;
    for (int k = 0; k < kPromptWords; ++k) {
      if (word == ::mtsk::kPromptWords[k]) found = k;
    }
    if (found < 0) throw ConfigError("prompt word '" + word + "' not in vocabulary");
    ids.push_back(text_vocab_ + found);
  }
  return ids;
}

std::vector<int> Tokenizer::prompt_ids(Task task) const { return encode_prompt(prompt_text(task)); }

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model: " + msg); };
  if (audio_frame_dim < 1 || video_frame_dim < 1) fail("frame dims must be >= 1");
  if (encoder_hidden < 1) fail("encoder_hidden must be >= 1");
  if (audio_token_dim < 1 || video_token_dim < 1) fail("token dims must be >= 1");
  if (text_vocab < kNumSpecials + 1) fail("text_vocab must exceed the reserved ids");
  if (projector_hidden < 0) fail("projector_hidden must be >= 0");
  decoder.validate();
  grid.validate();
  if (lora.scale < 0) fail("lora scale must be >= 0");
  if (lora.targets.empty()) fail("lora targets are empty");
  const int r = rank_for(decoder.d_model, lora.rank_divisor);
  if (r > decoder.d_model / 2) {
    fail("LoRA rank " + std::to_string(r) + " exceeds d/2 = " + std::to_string(decoder.d_model / 2));
  }
}

void to_json(json& j, const DecoderConfig& c) {
  j = json{{"layers", c.layers},         {"heads", c.heads},
           {"d_model", c.d_model},       {"d_ff", c.d_ff},
           {"max_length", c.max_length}, {"max_text_length", c.max_text_length},
           {"positions", to_string(c.positions)}};
}

void from_json(const json& j, DecoderConfig& c) {
  constexpr std::string_view sec = "model.decoder";
  require_known_keys(j, sec,
                     {"layers", "heads", "d_model", "d_ff", "max_length", "max_text_length",
                      "positions"});
  read_optional(j, sec, "layers", c.layers);
  read_optional(j, sec, "heads", c.heads);
  read_optional(j, sec, "d_model", c.d_model);
  read_optional(j, sec, "d_ff", c.d_ff);
  read_optional(j, sec, "max_length", c.max_length);
  read_optional(j, sec, "max_text_length", c.max_text_length);
  std::string pos = to_string(c.positions);
  read_optional(j, sec, "positions", pos);
  c.positions = parse_position_scheme(pos);
}

void to_json(json& j, const ScaleGrid& g) {
  j = json{{"audio_rates", g.audio_rates},
           {"video_rates", g.video_rates},
           {"method", to_string(g.method)}};
}

void from_json(const json& j, ScaleGrid& g) {
  constexpr std::string_view sec = "grid";
  require_known_keys(j, sec, {"audio_rates", "video_rates", "method"});
  read_optional(j, sec, "audio_rates", g.audio_rates);
  read_optional(j, sec, "video_rates", g.video_rates);
  std::string method = to_string(g.method);
  read_optional(j, sec, "method", method);
  g.method = parse_method(method);
}

void to_json(json& j, const LoraConfig& c) {
  std::string targets;
  for (auto p : c.targets) targets += projection_letter(p);
  j = json{{"strategy", to_string(c.strategy)},
           {"scale", c.scale},
           {"rank_divisor", c.rank_divisor},
           {"targets", targets}};
}

void from_json(const json& j, LoraConfig& c) {
  constexpr std::string_view sec = "model.lora";
  require_known_keys(j, sec, {"strategy", "scale", "rank_divisor", "targets"});
  std::string strategy = to_string(c.strategy);
  read_optional(j, sec, "strategy", strategy);
  c.strategy = parse_strategy(strategy);
  read_optional(j, sec, "scale", c.scale);
  read_optional(j, sec, "rank_divisor", c.rank_divisor);
  if (j.contains("targets")) {
    std::string targets;
    read_optional(j, sec, "targets", targets);
    c.targets.clear();
    for (char ch : targets) {
      const Projection p = parse_projection(ch);
      for (auto q : c.targets) {
        if (q == p) throw ConfigError("model.lora.targets: duplicate '" + std::string(1, ch) + "'");
      }
      c.targets.push_back(p);
    }
  }
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"task", to_string(c.task)},
           {"audio_frame_dim", c.audio_frame_dim},
           {"video_frame_dim", c.video_frame_dim},
           {"encoder_hidden", c.encoder_hidden},
           {"audio_token_dim", c.audio_token_dim},
           {"video_token_dim", c.video_token_dim},
           {"text_vocab", c.text_vocab},
           {"projector_hidden", c.projector_hidden},
           {"decoder", c.decoder},
           {"grid", c.grid},
           {"lora", c.lora},
           {"seed", c.seed},
           {"encoder_seed", c.encoder_seed}};
}

void from_json(const json& j, ModelConfig& c) {
  constexpr std::string_view sec = "model";
  require_known_keys(j, sec,
                     {"task", "audio_frame_dim", "video_frame_dim", "encoder_hidden",
                      "audio_token_dim", "video_token_dim", "text_vocab", "projector_hidden",
                      "decoder", "grid", "lora", "seed", "encoder_seed"});
  std::string task = to_string(c.task);
  read_optional(j, sec, "task", task);
  c.task = parse_task(task);
  read_optional(j, sec, "audio_frame_dim", c.audio_frame_dim);
  read_optional(j, sec, "video_frame_dim", c.video_frame_dim);
  read_optional(j, sec, "encoder_hidden", c.encoder_hidden);
  read_optional(j, sec, "audio_token_dim", c.audio_token_dim);
  read_optional(j, sec, "video_token_dim", c.video_token_dim);
  read_optional(j, sec, "text_vocab", c.text_vocab);
  read_optional(j, sec, "projector_hidden", c.projector_hidden);
  if (j.contains("decoder")) from_json(j.at("decoder"), c.decoder);
  if (j.contains("grid")) from_json(j.at("grid"), c.grid);
  if (j.contains("lora")) from_json(j.at("lora"), c.lora);
  read_optional(j, sec, "seed", c.seed);
  read_optional(j, sec, "encoder_seed", c.encoder_seed);
}

Index projector_parameter_count(const ModelConfig& cfg) {
  const ScaleGrid grid = cfg.grid.for_task(cfg.task);
  const Index h = cfg.resolved_projector_hidden();
  const Index d = cfg.decoder.d_model;
  auto one = [&](Index in) { return in * h + h + h * d + d; };
  auto in_dim = [&](Index token_dim, int rate) {
    return grid.method == CompressionMethod::Stack ? token_dim * rate : token_dim;
  };
  Index n = 0;
  if (uses_audio(cfg.task)) {
    for (int r : grid.audio_rates) n += one(in_dim(cfg.audio_token_dim, r));
  }
  if (uses_video(cfg.task)) {
    for (int r : grid.video_rates) n += one(in_dim(cfg.video_token_dim, r));
  }
  return n;
}

Index lora_parameter_count(const ModelConfig& cfg) {
  const ScaleGrid grid = cfg.grid.for_task(cfg.task);
  const Index d = cfg.decoder.d_model;
  const Index r = rank_for(cfg.decoder.d_model, cfg.lora.rank_divisor);
  const Index per_scale = Index(cfg.decoder.layers) * Index(cfg.lora.targets.size()) * 2 * d * r;
  Index n = 0;
  if (cfg.lora.strategy != LoraStrategy::SS) n += per_scale;
  if (cfg.lora.strategy != LoraStrategy::MS) n += per_scale * grid.size();
  return n;
}

}  // namespace mtsk
