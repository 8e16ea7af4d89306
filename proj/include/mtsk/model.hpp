#pragma once

#include "mtsk/compression.hpp"
#include "mtsk/corpus.hpp"
#include "mtsk/decoder.hpp"
#include "mtsk/encoder.hpp"
#include "mtsk/lora.hpp"
#include "mtsk/projector.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mtsk {

/// Fixed prompt vocabulary appended after the text vocabulary on the input
/// side. The decoder never predicts prompt words.
class Tokenizer {
 public:
  static constexpr int kPromptWords = 7;

  explicit Tokenizer(int text_vocab = 35) : text_vocab_(text_vocab) {}

  int text_vocab() const { return text_vocab_; }
  int input_vocab() const { return text_vocab_ + kPromptWords; }

  /// "Transcribe {speech|video|speech and video} to text."
  static std::string prompt_text(Task task);
  std::vector<int> prompt_ids(Task task) const;
  /// Whitespace-split words of `text`; "." is its own token.
  std::vector<int> encode_prompt(const std::string& text) const;

 private:
  int text_vocab_;
};

struct ModelConfig {
  Task task = Task::Avsr;
  int audio_frame_dim = 16;
  int video_frame_dim = 16;
  int encoder_hidden = 32;
  int audio_token_dim = 32;
  int video_token_dim = 32;
  int text_vocab = 35;
  int projector_hidden = 0;  // 0 selects 2·d_model
  DecoderConfig decoder;
  ScaleGrid grid;
  LoraConfig lora;
  std::uint64_t seed = 7;
  std::uint64_t encoder_seed = 1234;

  int resolved_projector_hidden() const {
    return projector_hidden > 0 ? projector_hidden : 2 * decoder.d_model;
  }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const DecoderConfig& c);
void from_json(const nlohmann::json& j, DecoderConfig& c);
void to_json(nlohmann::json& j, const ScaleGrid& g);
void from_json(const nlohmann::json& j, ScaleGrid& g);
void to_json(nlohmann::json& j, const LoraConfig& c);
void from_json(const nlohmann::json& j, LoraConfig& c);

/// Frozen-encoder output for one sample.
template <typename Scalar>
struct EncodedSample {
  std::string id;
  Matrix<Scalar> audio;
  Matrix<Scalar> video;
  std::vector<int> transcript;
};

/// Which parameter groups receive gradients.
enum class Phase {
  Pretrain,  // decoder + projectors
  Adapt,     // projectors + LoRA; decoder frozen
  Inference  // nothing
};

/// Everything the decoder input depends on at one scale.
template <typename Scalar>
struct ScaleRoute {
  const Projector<Scalar>* audio = nullptr;
  const Projector<Scalar>* video = nullptr;
  int audio_rate = 1;  // compression applied to encoder output
  int video_rate = 1;
  double audio_stride = 1;  // frames per token as seen by position coding
  double video_stride = 1;
  CompressionMethod method = CompressionMethod::AvgPool;
  Adapter<Scalar> adapter;
};

template <typename Scalar>
DecoderInput<Scalar> assemble_input(const EncodedSample<Scalar>& x, const ScaleRoute<Scalar>& route,
                                    std::vector<int> prompt_ids, std::span<const int> text_ids) {
  DecoderInput<Scalar> in;
  if (route.audio) {
    in.audio = (*route.audio)(compress(Tensor<Scalar>(x.audio), route.audio_rate, route.method));
    in.audio_stride = route.audio_stride;
  }
  if (route.video) {
    in.video = (*route.video)(compress(Tensor<Scalar>(x.video), route.video_rate, route.method));
    in.video_stride = route.video_stride;
  }
  in.prompt_ids = std::move(prompt_ids);
  in.text_ids.assign(text_ids.begin(), text_ids.end());
  return in;
}

/// Teacher-forcing input: BOS followed by all transcript tokens but the last.
inline std::vector<int> teacher_forcing_prefix(const std::vector<int>& transcript) {
  std::vector<int> prefix{kBosId};
  prefix.insert(prefix.end(), transcript.begin(), transcript.end() - 1);
  return prefix;
}

/// Frozen encoders, per-rate projectors, decoder and LoRA bank: one model
/// usable at every scale of its grid.
template <typename Scalar>
class MtskModel {
 public:
  MtskModel() = default;

  explicit MtskModel(const ModelConfig& cfg) : cfg_(cfg), tokenizer_(cfg.text_vocab) {
    cfg_.validate();
    cfg_.grid = cfg.grid.for_task(cfg.task);
    Rng enc_rng = Rng::derive(cfg.encoder_seed, 101);
    audio_encoder_ = FrozenEncoder<Scalar>(Modality::Audio, cfg.audio_frame_dim, cfg.encoder_hidden,
                                           cfg.audio_token_dim, enc_rng);
    video_encoder_ = FrozenEncoder<Scalar>(Modality::Video, cfg.video_frame_dim, cfg.encoder_hidden,
                                           cfg.video_token_dim, enc_rng);
    Rng dec_rng = Rng::derive(cfg.seed, 1);
    decoder_ = Decoder<Scalar>(cfg.decoder, tokenizer_.input_vocab(), cfg.text_vocab, dec_rng);
    Rng proj_rng = Rng::derive(cfg.seed, 2);
    typename ProjectorBank<Scalar>::Dims dims{cfg.audio_token_dim, cfg.video_token_dim,
                                              cfg.resolved_projector_hidden(), cfg.decoder.d_model};
    projectors_ = ProjectorBank<Scalar>(cfg_.grid, cfg.task, dims, proj_rng);
    Rng lora_rng = Rng::derive(cfg.seed, 3);
    lora_ = LoraBank<Scalar>(cfg.lora, cfg.decoder.layers, cfg.decoder.d_model,
                             cfg_.grid.audio_scales(), cfg_.grid.video_scales(), lora_rng);
    set_phase(Phase::Adapt);
  }

  const ModelConfig& config() const { return cfg_; }
  const ScaleGrid& grid() const { return cfg_.grid; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  const FrozenEncoder<Scalar>& audio_encoder() const { return audio_encoder_; }
  const FrozenEncoder<Scalar>& video_encoder() const { return video_encoder_; }
  const ProjectorBank<Scalar>& projectors() const { return projectors_; }
  const Decoder<Scalar>& decoder() const { return decoder_; }
  const LoraBank<Scalar>& lora() const { return lora_; }
  ProjectorBank<Scalar>& projectors() { return projectors_; }
  LoraBank<Scalar>& lora() { return lora_; }
  Phase phase() const { return phase_; }

  /// Every named tensor, encoders included.
  ParameterMap<Scalar> parameters() const {
    ParameterMap<Scalar> out;
    audio_encoder_.collect(out, "encoder.audio");
    video_encoder_.collect(out, "encoder.video");
    decoder_.collect(out, "decoder");
    projectors_.collect(out);
    lora_.collect(out);
    return out;
  }

  ParameterMap<Scalar> trainable_parameters() const {
    ParameterMap<Scalar> out;
    for (auto& [name, t] : parameters()) {
      if (t.requires_grad()) out.emplace(name, t);
    }
    return out;
  }

  Index trainable_parameter_count() const {
    Index n = 0;
    for (const auto& [name, t] : trainable_parameters()) n += t.size();
    return n;
  }

  void set_phase(Phase phase) {
    phase_ = phase;
    ParameterMap<Scalar> group;
    decoder_.collect(group, "decoder");
    for (auto& [n, t] : group) t.set_requires_grad(phase == Phase::Pretrain);
    group.clear();
    projectors_.collect(group);
    for (auto& [n, t] : group) t.set_requires_grad(phase != Phase::Inference);
    group.clear();
    lora_.collect(group);
    for (auto& [n, t] : group) t.set_requires_grad(phase == Phase::Adapt);
  }

  void zero_grad() {
    for (auto& [name, t] : parameters()) t.zero_grad();
  }

  EncodedSample<Scalar> encode(const Sample& s) const {
    EncodedSample<Scalar> e;
    e.id = s.id;
    if (uses_audio(cfg_.task)) e.audio = audio_encoder_.encode(s.audio).tokens;
    if (uses_video(cfg_.task)) e.video = video_encoder_.encode(s.video).tokens;
    e.transcript = s.transcript;
    return e;
  }

  std::vector<EncodedSample<Scalar>> encode_all(const std::vector<Sample>& samples) const {
    std::vector<EncodedSample<Scalar>> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(encode(s));
    return out;
  }

  /// Route through the full bank at `idx`.
  ScaleRoute<Scalar> route(ScaleIndex idx) const {
    cfg_.grid.check(idx);
    ScaleRoute<Scalar> r;
    r.method = cfg_.grid.method;
    if (projectors_.has(Modality::Audio)) {
      r.audio = &projectors_.get(Modality::Audio, idx.audio);
      r.audio_rate = cfg_.grid.audio_rate(idx);
      r.audio_stride = r.audio_rate;
    }
    if (projectors_.has(Modality::Video)) {
      r.video = &projectors_.get(Modality::Video, idx.video);
      r.video_rate = cfg_.grid.video_rate(idx);
      r.video_stride = r.video_rate;
    }
    const LoraBank<Scalar>* bank = &lora_;
    r.adapter = [bank, idx](const Tensor<Scalar>& x, const Tensor<Scalar>& w, int layer,
                            Projection p) { return adapted_forward(x, w, *bank, idx, layer, p); };
    return r;
  }

  Tensor<Scalar> logits(const EncodedSample<Scalar>& x, const ScaleRoute<Scalar>& r,
                        std::span<const int> text_ids) const {
    return decoder_.forward(assemble_input(x, r, tokenizer_.prompt_ids(cfg_.task), text_ids),
                            r.adapter);
  }

  Tensor<Scalar> logits_at_scale(const EncodedSample<Scalar>& x, ScaleIndex idx,
                                 std::span<const int> text_ids) const {
    return logits(x, route(idx), text_ids);
  }

  /// Mean next-token NLL of the transcript under teacher forcing.
  Tensor<Scalar> loss_at_scale(const EncodedSample<Scalar>& x, ScaleIndex idx) const {
    if (x.transcript.empty()) throw std::invalid_argument("loss_at_scale: empty transcript");
    const auto prefix = teacher_forcing_prefix(x.transcript);
    return softmax_cross_entropy(logits_at_scale(x, idx, prefix),
                                 std::span<const int>(x.transcript));
  }

  /// Copies encoder and decoder values from `other` (same architecture).
  void load_base_from(const MtskModel& other) {
    auto dst = parameters();
    for (const auto& [name, src] : other.parameters()) {
      if (!name.starts_with("decoder.") && !name.starts_with("encoder.")) continue;
      auto it = dst.find(name);
      if (it == dst.end() || it->second.rows() != src.rows() || it->second.cols() != src.cols()) {
        throw ConfigError("base checkpoint does not match model: " + name);
      }
      it->second.mutable_value() = src.value();
    }
  }

  template <typename To>
  MtskModel<To> cast() const {
    MtskModel<To> out;
    out.cfg_ = cfg_;
    out.tokenizer_ = tokenizer_;
    out.audio_encoder_ = audio_encoder_.template cast<To>();
    out.video_encoder_ = video_encoder_.template cast<To>();
    out.decoder_ = decoder_.template cast<To>();
    out.projectors_ = projectors_.template cast<To>();
    out.lora_ = lora_.template cast<To>();
    out.set_phase(phase_);
    return out;
  }

 private:
  template <typename>
  friend class MtskModel;

  ModelConfig cfg_;
  Tokenizer tokenizer_;
  FrozenEncoder<Scalar> audio_encoder_;
  FrozenEncoder<Scalar> video_encoder_;
  Decoder<Scalar> decoder_;
  ProjectorBank<Scalar> projectors_;
  LoraBank<Scalar> lora_;
  Phase phase_ = Phase::Adapt;
};

/// Closed-form projector parameter count for `cfg`.
Index projector_parameter_count(const ModelConfig& cfg);
/// Closed-form LoRA parameter count for `cfg`.
Index lora_parameter_count(const ModelConfig& cfg);

}  // namespace mtsk
