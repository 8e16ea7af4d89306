#pragma once

#include "mtsk/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mtsk {

enum class DecodeMode { Greedy, Beam };

std::string to_string(DecodeMode m);
DecodeMode parse_decode_mode(std::string_view s);

struct DecodeConfig {
  DecodeMode mode = DecodeMode::Beam;
  int beam_width = 15;
  double temperature = 0.6;
  int max_length = 16;  // generated tokens, EOS included
  int bos_id = kBosId;
  int eos_id = kEosId;  // negative: never stop early

  void validate() const;
  friend bool operator==(const DecodeConfig&, const DecodeConfig&) = default;
};

void to_json(nlohmann::json& j, const DecodeConfig& c);
void from_json(const nlohmann::json& j, DecodeConfig& c);

struct Hypothesis {
  std::vector<int> tokens;  // generated tokens, EOS included when emitted
  double logprob = 0;       // sum of temperature-scaled log-probabilities
  double score = 0;         // logprob / tokens.size()
  bool finished = false;
};

/// Logits of the next token given the text prefix (BOS first).
using NextTokenScorer = std::function<std::vector<double>(const std::vector<int>& prefix)>;

/// log softmax(logits / temperature), max-subtracted.
std::vector<double> log_softmax(const std::vector<double>& logits, double temperature);

/// Index of the largest value; the lowest index wins ties.
int argmax(const std::vector<double>& values);

Hypothesis greedy_decode(const NextTokenScorer& scorer, const DecodeConfig& cfg);
Hypothesis beam_decode(const NextTokenScorer& scorer, const DecodeConfig& cfg);
Hypothesis decode(const NextTokenScorer& scorer, const DecodeConfig& cfg);

/// Tokens with a trailing EOS removed.
std::vector<int> strip_eos(const std::vector<int>& tokens, int eos_id = kEosId);

/// Parameter names of `model` needed to run at `idx`: encoders, decoder,
/// the two projectors of that scale and the active LoRA factors.
std::vector<std::string> scale_parameter_names(const ModelConfig& cfg, ScaleIndex idx);

/// The model at one scale, holding its own copies of exactly the parameters
/// that scale uses. Built from a name → tensor map, so it cannot reach other
/// scales' projectors or adapters.
template <typename Scalar>
class InferenceView {
 public:
  /// `params` must contain every name in scale_parameter_names(cfg, idx);
  /// extra entries are ignored.
  InferenceView(const ModelConfig& model_cfg, ScaleIndex idx, const ParameterMap<Scalar>& params)
      : cfg_(model_cfg), index_(idx), tokenizer_(model_cfg.text_vocab) {
    cfg_.grid = model_cfg.grid.for_task(model_cfg.task);
    cfg_.grid.check(idx);
    audio_rate_ = cfg_.grid.audio_rate(idx);
    video_rate_ = cfg_.grid.video_rate(idx);
    Rng skeleton(0);
    audio_encoder_ = FrozenEncoder<Scalar>(Modality::Audio, cfg_.audio_frame_dim,
                                           cfg_.encoder_hidden, cfg_.audio_token_dim, skeleton);
    video_encoder_ = FrozenEncoder<Scalar>(Modality::Video, cfg_.video_frame_dim,
                                           cfg_.encoder_hidden, cfg_.video_token_dim, skeleton);
    decoder_ = Decoder<Scalar>(cfg_.decoder, tokenizer_.input_vocab(), cfg_.text_vocab, skeleton);
    const Index hidden = cfg_.resolved_projector_hidden();
    auto in_dim = [&](Index token_dim, int rate) {
      return cfg_.grid.method == CompressionMethod::Stack ? token_dim * rate : token_dim;
    };
    if (uses_audio(cfg_.task)) {
      audio_proj_ = Projector<Scalar>(in_dim(cfg_.audio_token_dim, audio_rate_), hidden,
                                      cfg_.decoder.d_model, skeleton);
    }
    if (uses_video(cfg_.task)) {
      video_proj_ = Projector<Scalar>(in_dim(cfg_.video_token_dim, video_rate_), hidden,
                                      cfg_.decoder.d_model, skeleton);
    }
    const Index d = cfg_.decoder.d_model;
    const int r = rank_for(cfg_.decoder.d_model, cfg_.lora.rank_divisor);
    const int per_layer = int(cfg_.lora.targets.size());
    lora_.resize(std::size_t(cfg_.decoder.layers * per_layer));
    for (auto& pairs : lora_) {
      const int n = (cfg_.lora.strategy == LoraStrategy::MSS) ? 2 : 1;
      for (int k = 0; k < n; ++k) {
        pairs.push_back({Tensor<Scalar>(Matrix<Scalar>::Zero(d, r)),
                         Tensor<Scalar>(Matrix<Scalar>::Zero(r, d))});
      }
    }
    auto own = parameters();
    for (auto& [name, t] : own) {
      auto it = params.find(name);
      if (it == params.end()) throw ConfigError("scale view: missing parameter " + name);
      if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) {
        throw DimensionError("scale view: parameter " + name + " has shape " +
                             shape_string(it->second.rows(), it->second.cols()) + ", expected " +
                             shape_string(t.rows(), t.cols()));
      }
      t.mutable_value() = it->second.value();
      t.set_requires_grad(false);
    }
  }

  ScaleIndex index() const { return index_; }
  int audio_rate() const { return audio_rate_; }
  int video_rate() const { return video_rate_; }
  const ModelConfig& config() const { return cfg_; }

  /// The parameters this view holds, under their full-model names.
  ParameterMap<Scalar> parameters() const {
    ParameterMap<Scalar> out;
    audio_encoder_.collect(out, "encoder.audio");
    video_encoder_.collect(out, "encoder.video");
    decoder_.collect(out, "decoder");
    if (audio_proj_) {
      audio_proj_->collect(out, ProjectorBank<Scalar>::name(Modality::Audio, audio_rate_));
    }
    if (video_proj_) {
      video_proj_->collect(out, ProjectorBank<Scalar>::name(Modality::Video, video_rate_));
    }
    const auto names = lora_names();
    for (std::size_t s = 0; s < lora_.size(); ++s) {
      for (std::size_t k = 0; k < lora_[s].size(); ++k) {
        out.emplace(names[s][k] + ".down", lora_[s][k].down);
        out.emplace(names[s][k] + ".up", lora_[s][k].up);
      }
    }
    return out;
  }

  EncodedSample<Scalar> encode(const Sample& s) const {
    EncodedSample<Scalar> e;
    e.id = s.id;
    if (uses_audio(cfg_.task)) e.audio = audio_encoder_.encode(s.audio).tokens;
    if (uses_video(cfg_.task)) e.video = video_encoder_.encode(s.video).tokens;
    e.transcript = s.transcript;
    return e;
  }

  /// Route for this scale. Overriding the compression rates while keeping
  /// strides at 1 reproduces on-the-fly pooling in front of a rate-1 model.
  ScaleRoute<Scalar> route() const {
    ScaleRoute<Scalar> r;
    r.method = cfg_.grid.method;
    if (audio_proj_) {
      r.audio = &*audio_proj_;
      r.audio_rate = audio_rate_;
      r.audio_stride = audio_rate_;
    }
    if (video_proj_) {
      r.video = &*video_proj_;
      r.video_rate = video_rate_;
      r.video_stride = video_rate_;
    }
    const auto* lora = &lora_;
    const auto* cfg = &cfg_;
    r.adapter = [lora, cfg](const Tensor<Scalar>& x, const Tensor<Scalar>& w, int layer,
                            Projection p) {
      const auto& targets = cfg->lora.targets;
      const auto it = std::find(targets.begin(), targets.end(), p);
      if (it == targets.end()) return matmul(x, w);
      const auto slot = std::size_t(layer) * targets.size() + std::size_t(it - targets.begin());
      std::vector<const LoraPair<Scalar>*> pairs;
      for (const auto& pair : (*lora)[slot]) pairs.push_back(&pair);
      return apply_lora(x, w, pairs, Scalar(cfg->lora.scale));
    };
    return r;
  }

  Tensor<Scalar> logits(const EncodedSample<Scalar>& x, const ScaleRoute<Scalar>& r,
                        std::span<const int> text_ids) const {
    return decoder_.forward(assemble_input(x, r, tokenizer_.prompt_ids(cfg_.task), text_ids),
                            r.adapter);
  }

  Tensor<Scalar> logits(const EncodedSample<Scalar>& x, std::span<const int> text_ids) const {
    return logits(x, route(), text_ids);
  }

  NextTokenScorer scorer(const EncodedSample<Scalar>& x, const ScaleRoute<Scalar>& r) const {
    return [this, &x, r](const std::vector<int>& prefix) {
      const Tensor<Scalar> z = logits(x, r, prefix);
      const auto last = z.value().row(z.rows() - 1);
      return std::vector<double>(last.begin(), last.end());
    };
  }

  Hypothesis transcribe(const EncodedSample<Scalar>& x, const DecodeConfig& cfg) const {
    const auto r = route();
    return decode(scorer(x, r), cfg);
  }

 private:
  /// Names of the held LoRA pairs per slot, in summation order.
  std::vector<std::vector<std::string>> lora_names() const {
    std::vector<std::vector<std::string>> names(lora_.size());
    const auto& targets = cfg_.lora.targets;
    for (std::size_t s = 0; s < lora_.size(); ++s) {
      const std::string slot = std::to_string(s / targets.size()) + "." +
                               std::string(1, projection_letter(targets[s % targets.size()]));
      const std::string specific = "lora.ss." + std::to_string(index_.audio + 1) + "." +
                                   std::to_string(index_.video + 1) + "." + slot;
      const std::string global = "lora.ms." + slot;
      switch (cfg_.lora.strategy) {
        case LoraStrategy::MS: names[s] = {global}; break;
        case LoraStrategy::SS: names[s] = {specific}; break;
        case LoraStrategy::MSS: names[s] = {specific, global}; break;
      }
    }
    return names;
  }

  ModelConfig cfg_;
  ScaleIndex index_;
  Tokenizer tokenizer_;
  int audio_rate_ = 1;
  int video_rate_ = 1;
  FrozenEncoder<Scalar> audio_encoder_;
  FrozenEncoder<Scalar> video_encoder_;
  std::optional<Projector<Scalar>> audio_proj_;
  std::optional<Projector<Scalar>> video_proj_;
  Decoder<Scalar> decoder_;
  std::vector<std::vector<LoraPair<Scalar>>> lora_;
};

/// Keeps only the entries of `params` used at `idx`.
template <typename Scalar>
ParameterMap<Scalar> prune_to_scale(const ModelConfig& cfg, const ParameterMap<Scalar>& params,
                                    ScaleIndex idx) {
  ParameterMap<Scalar> out;
  for (const auto& name : scale_parameter_names(cfg, idx)) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("prune: missing parameter " + name);
    out.emplace(name, it->second);
  }
  return out;
}

template <typename Scalar>
InferenceView<Scalar> select_scale(const MtskModel<Scalar>& model, ScaleIndex idx) {
  model.grid().check(idx);
  return InferenceView<Scalar>(model.config(), idx,
                               prune_to_scale(model.config(), model.parameters(), idx));
}

/// On-the-fly average pooling at (audio_rate, video_rate) in front of a
/// model trained at rate 1: the rate-1 projectors, positions and decoder
/// are used unchanged.
template <typename Scalar>
ScaleRoute<Scalar> baseline_pool_route(const InferenceView<Scalar>& rate1_view, int audio_rate,
                                       int video_rate) {
  if (rate1_view.audio_rate() != 1 || rate1_view.video_rate() != 1) {
    throw ConfigError("pooling baseline needs a rate-1 model, got scale " +
                      scale_key(rate1_view.audio_rate(), rate1_view.video_rate()));
  }
  ScaleRoute<Scalar> r = rate1_view.route();
  r.method = CompressionMethod::AvgPool;
  r.audio_rate = audio_rate;
  r.video_rate = video_rate;
  r.audio_stride = 1;
  r.video_stride = 1;
  return r;
}

template <typename Scalar>
Hypothesis baseline_pool_inference(const InferenceView<Scalar>& rate1_view, int audio_rate,
                                   int video_rate, const EncodedSample<Scalar>& x,
                                   const DecodeConfig& cfg) {
  const auto r = baseline_pool_route(rate1_view, audio_rate, video_rate);
  return decode(rate1_view.scorer(x, r), cfg);
}

}  // namespace mtsk
