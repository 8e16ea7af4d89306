#include "mtsk/inference.hpp"

#include "mtsk/json_util.hpp"

namespace mtsk {

using nlohmann::json;

std::string to_string(DecodeMode m) { return m == DecodeMode::Greedy ? "greedy" : "beam"; }

DecodeMode parse_decode_mode(std::string_view s) {
  if (s == "greedy") return DecodeMode::Greedy;
  if (s == "beam") return DecodeMode::Beam;
  throw ConfigError("unknown decode mode '" + std::string(s) + "' (expected greedy|beam)");
}

void DecodeConfig::validate() const {
  if (beam_width < 1) throw ConfigError("decode: beam_width must be >= 1");
  if (!(temperature > 0)) throw ConfigError("decode: temperature must be > 0");
  if (max_length < 1) throw ConfigError("decode: max_length must be >= 1");
}

void to_json(json& j, const DecodeConfig& c) {
  j = json{{"mode", to_string(c.mode)},
           {"beam_width", c.beam_width},
           {"temperature", c.temperature},
           {"max_length", c.max_length}};
}

void from_json(const json& j, DecodeConfig& c) {
  constexpr std::string_view sec = "decode";
  require_known_keys(j, sec, {"mode", "beam_width", "temperature", "max_length"});
  std::string mode = to_string(c.mode);
  read_optional(j, sec, "mode", mode);
  c.mode = parse_decode_mode(mode);
  read_optional(j, sec, "beam_width", c.beam_width);
  read_optional(j, sec, "temperature", c.temperature);
  read_optional(j, sec, "max_length", c.max_length);
}

std::vector<double> log_softmax(const std::vector<double>& logits, double temperature) {
  std::vector<double> out(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) mx = std::max(mx, z / temperature);
  double total = 0;
  for (double z : logits) total += std::exp(z / temperature - mx);
  const double lse = mx + std::log(total);
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] / temperature - lse;
  return out;
}

int argmax(const std::vector<double>& values) {
  int best = 0;
  for (int k = 1; k < int(values.size()); ++k) {
    if (values[std::size_t(k)] > values[std::size_t(best)]) best = k;
  }
  return best;
}

namespace {

void finalize(Hypothesis& h) {
  h.score = h.tokens.empty() ? 0 : h.logprob / double(h.tokens.size());
}

/// Higher score first; on equal score the lexicographically smaller sequence.
bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

Hypothesis greedy_decode(const NextTokenScorer& scorer, const DecodeConfig& cfg) {
  cfg.validate();
  Hypothesis h;
  std::vector<int> prefix{cfg.bos_id};
  for (int step = 0; step < cfg.max_length; ++step) {
    const auto logits = scorer(prefix);
    const int tok = argmax(logits);
    h.logprob += log_softmax(logits, cfg.temperature)[std::size_t(tok)];
    h.tokens.push_back(tok);
    prefix.push_back(tok);
    if (tok == cfg.eos_id) {
      h.finished = true;
      break;
    }
  }
  finalize(h);
  return h;
}

Hypothesis beam_decode(const NextTokenScorer& scorer, const DecodeConfig& cfg) {
  cfg.validate();
  struct Candidate {
    double logprob;
    std::size_t beam;
    int token;
  };
  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> done;
  for (int step = 0; step < cfg.max_length && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < live.size(); ++b) {
      std::vector<int> prefix{cfg.bos_id};
      prefix.insert(prefix.end(), live[b].tokens.begin(), live[b].tokens.end());
      const auto lp = log_softmax(scorer(prefix), cfg.temperature);
      for (int t = 0; t < int(lp.size()); ++t) {
        cands.push_back({live[b].logprob + lp[std::size_t(t)], b, t});
      }
    }
    // Live beams are kept in rank order, so (beam, token) breaks ties deterministically.
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.logprob > b.logprob;
    });
    const std::size_t keep = std::min(cands.size(), std::size_t(cfg.beam_width));
    std::vector<Hypothesis> next;
    for (std::size_t k = 0; k < keep; ++k) {
      Hypothesis h;
      h.tokens = live[cands[k].beam].tokens;
      h.tokens.push_back(cands[k].token);
      h.logprob = cands[k].logprob;
      if (cands[k].token == cfg.eos_id) {
        h.finished = true;
        finalize(h);
        done.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  for (auto& h : live) {
    finalize(h);
    done.push_back(std::move(h));
  }
  return *std::min_element(done.begin(), done.end(), better);
}

Hypothesis decode(const NextTokenScorer& scorer, const DecodeConfig& cfg) {
  return cfg.mode == DecodeMode::Greedy ? greedy_decode(scorer, cfg) : beam_decode(scorer, cfg);
}

std::vector<int> strip_eos(const std::vector<int>& tokens, int eos_id) {
  std::vector<int> out = tokens;
  if (!out.empty() && out.back() == eos_id) out.pop_back();
  return out;
}

std::vector<std::string> scale_parameter_names(const ModelConfig& model_cfg, ScaleIndex idx) {
  const ScaleGrid grid = model_cfg.grid.for_task(model_cfg.task);
  grid.check(idx);
  std::vector<std::string> names;
  auto linear = [&](const std::string& prefix) {
    names.push_back(prefix + ".weight");
    names.push_back(prefix + ".bias");
  };
  for (const char* m : {"audio", "video"}) {
    linear(std::string("encoder.") + m + ".fc1");
    linear(std::string("encoder.") + m + ".fc2");
  }
  if (uses_audio(model_cfg.task)) {
    const auto p = "proj.audio." + std::to_string(grid.audio_rate(idx));
    linear(p + ".fc1");
    linear(p + ".fc2");
  }
  if (uses_video(model_cfg.task)) {
    const auto p = "proj.video." + std::to_string(grid.video_rate(idx));
    linear(p + ".fc1");
    linear(p + ".fc2");
  }
  const auto& dc = model_cfg.decoder;
  names.push_back("decoder.token_embedding");
  names.push_back("decoder.segment_embedding");
  if (dc.positions == PositionScheme::Aligned) {
    names.push_back("decoder.prompt_positions");
    names.push_back("decoder.text_positions");
  }
  for (int l = 0; l < dc.layers; ++l) {
    const auto p = "decoder.layers." + std::to_string(l);
    for (const char* w : {".attn_norm", ".wq", ".wk", ".wv", ".wo", ".ffn_norm"}) {
      names.push_back(p + w);
    }
    linear(p + ".ffn_up");
    linear(p + ".ffn_down");
  }
  names.push_back("decoder.final_norm");
  names.push_back("decoder.head");
  const auto& lc = model_cfg.lora;
  for (int l = 0; l < dc.layers; ++l) {
    for (auto t : lc.targets) {
      const auto slot = std::to_string(l) + "." + std::string(1, projection_letter(t));
      if (lc.strategy != LoraStrategy::MS) {
        const auto p = "lora.ss." + std::to_string(idx.audio + 1) + "." +
                       std::to_string(idx.video + 1) + "." + slot;
        names.push_back(p + ".down");
        names.push_back(p + ".up");
      }
      if (lc.strategy != LoraStrategy::SS) {
        names.push_back("lora.ms." + slot + ".down");
        names.push_back("lora.ms." + slot + ".up");
      }
    }
  }
  return names;
}

}  // namespace mtsk
