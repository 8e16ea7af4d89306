#pragma once

#include "mtsk/lora.hpp"
#include "mtsk/nn.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtsk {

/// How token positions are encoded.
///
/// Aligned: audio/video tokens get a sinusoidal code of their window centre
/// on a shared timeline measured in audio frames (one video frame spans two),
/// prompt and text tokens get learned per-index embeddings. Sequential: a
/// sinusoidal code of the absolute position in the assembled sequence.
enum class PositionScheme { Aligned, Sequential };

std::string to_string(PositionScheme p);
PositionScheme parse_position_scheme(std::string_view s);

struct DecoderConfig {
  int layers = 4;
  int heads = 4;
  int d_model = 128;
  int d_ff = 512;
  int max_length = 256;
  int max_text_length = 16;
  PositionScheme positions = PositionScheme::Aligned;

  void validate() const;
  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

enum class Segment { Audio = 0, Video = 1, Prompt = 2, Text = 3 };

/// The decoder's view of one request: projected modality tokens, the prompt,
/// and the text prefix (BOS followed by the tokens generated so far).
template <typename Scalar>
struct DecoderInput {
  Tensor<Scalar> audio;  // undefined when the task has no audio stream
  Tensor<Scalar> video;
  double audio_stride = 1;  // source frames covered by one token
  double video_stride = 1;
  std::vector<int> prompt_ids;
  std::vector<int> text_ids;

  Index audio_length() const { return audio.defined() ? audio.rows() : 0; }
  Index video_length() const { return video.defined() ? video.rows() : 0; }
  Index length() const {
    return audio_length() + video_length() + Index(prompt_ids.size()) + Index(text_ids.size());
  }
};

/// Computes x·W for the (layer, projection) matrix W, possibly with adapters.
template <typename Scalar>
using Adapter = std::function<Tensor<Scalar>(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                                             int layer, Projection p)>;

template <typename Scalar>
Adapter<Scalar> plain_adapter() {
  return [](const Tensor<Scalar>& x, const Tensor<Scalar>& w, int, Projection) {
    return matmul(x, w);
  };
}

/// Sinusoidal code of a (possibly fractional) position.
template <typename Scalar>
void sinusoid_row(double position, Eigen::Ref<RowVector<Scalar>> row) {
  const Index d = row.cols();
  for (Index k = 0; k < d; k += 2) {
    const double freq = std::pow(10000.0, -double(k) / double(d));
    row(k) = Scalar(std::sin(position * freq));
    if (k + 1 < d) row(k + 1) = Scalar(std::cos(position * freq));
  }
}

template <typename Scalar>
struct DecoderLayer {
  Tensor<Scalar> attn_norm;
  Tensor<Scalar> wq, wk, wv, wo;
  Tensor<Scalar> ffn_norm;
  Linear<Scalar> ffn_up;
  Linear<Scalar> ffn_down;
};

/// Pre-norm causal transformer over [audio ‖ video ‖ prompt ‖ text].
template <typename Scalar>
class Decoder {
 public:
  Decoder() = default;

  Decoder(const DecoderConfig& cfg, int input_vocab, int output_vocab, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const Index d = cfg.d_model;
    const double proj_bound = std::sqrt(3.0 / double(d));
    token_embedding_ = Tensor<Scalar>(normal_matrix<Scalar>(rng, input_vocab, d, 1.0), true);
    segment_embedding_ = Tensor<Scalar>(normal_matrix<Scalar>(rng, 4, d, 0.5), true);
    if (cfg.positions == PositionScheme::Aligned) {
      prompt_positions_ = Tensor<Scalar>(normal_matrix<Scalar>(rng, kMaxPrompt, d, 0.5), true);
      text_positions_ =
          Tensor<Scalar>(normal_matrix<Scalar>(rng, cfg.max_text_length, d, 0.5), true);
    }
    for (int l = 0; l < cfg.layers; ++l) {
      DecoderLayer<Scalar> layer;
      layer.attn_norm = Tensor<Scalar>(Matrix<Scalar>::Ones(1, d), true);
      layer.wq = Tensor<Scalar>(uniform_matrix<Scalar>(rng, d, d, proj_bound), true);
      layer.wk = Tensor<Scalar>(uniform_matrix<Scalar>(rng, d, d, proj_bound), true);
      layer.wv = Tensor<Scalar>(uniform_matrix<Scalar>(rng, d, d, proj_bound), true);
      layer.wo = Tensor<Scalar>(
          uniform_matrix<Scalar>(rng, d, d, proj_bound / std::sqrt(2.0 * cfg.layers)), true);
      layer.ffn_norm = Tensor<Scalar>(Matrix<Scalar>::Ones(1, d), true);
      layer.ffn_up = Linear<Scalar>(d, cfg.d_ff, rng);
      layer.ffn_down = Linear<Scalar>(cfg.d_ff, d, rng);
      layer.ffn_down.weight.mutable_value() /= Scalar(std::sqrt(2.0 * cfg.layers));
      layers_.push_back(std::move(layer));
    }
    final_norm_ = Tensor<Scalar>(Matrix<Scalar>::Ones(1, d), true);
    head_ = Tensor<Scalar>(uniform_matrix<Scalar>(rng, d, output_vocab, proj_bound), true);
  }

  static constexpr Index kMaxPrompt = 8;

  const DecoderConfig& config() const { return cfg_; }
  Index d_model() const { return cfg_.d_model; }
  Index output_vocab() const { return head_.cols(); }
  Index input_vocab() const { return token_embedding_.rows(); }

  /// Logits for every text position, one row per entry of `in.text_ids`.
  Tensor<Scalar> forward(const DecoderInput<Scalar>& in, const Adapter<Scalar>& adapt) const {
    const Index total = in.length();
    if (total > cfg_.max_length) {
      throw DimensionError("decoder: assembled length " + std::to_string(total) +
                           " exceeds max_length " + std::to_string(cfg_.max_length));
    }
    if (in.text_ids.empty()) throw DimensionError("decoder: empty text prefix");
    if (Index(in.text_ids.size()) > cfg_.max_text_length) {
      throw DimensionError("decoder: text prefix of " + std::to_string(in.text_ids.size()) +
                           " exceeds max_text_length " + std::to_string(cfg_.max_text_length));
    }
    if (Index(in.prompt_ids.size()) > kMaxPrompt) {
      throw DimensionError("decoder: prompt longer than " + std::to_string(kMaxPrompt));
    }
    const Index d = cfg_.d_model;
    std::vector<Tensor<Scalar>> content;
    std::vector<int> segments;
    if (in.audio.defined()) {
      check_width(in.audio, "audio");
      content.push_back(in.audio);
      segments.insert(segments.end(), std::size_t(in.audio.rows()), int(Segment::Audio));
    }
    if (in.video.defined()) {
      check_width(in.video, "video");
      content.push_back(in.video);
      segments.insert(segments.end(), std::size_t(in.video.rows()), int(Segment::Video));
    }
    if (!in.prompt_ids.empty()) {
      content.push_back(gather_rows(token_embedding_, std::span<const int>(in.prompt_ids)));
      segments.insert(segments.end(), in.prompt_ids.size(), int(Segment::Prompt));
    }
    content.push_back(gather_rows(token_embedding_, std::span<const int>(in.text_ids)));
    segments.insert(segments.end(), in.text_ids.size(), int(Segment::Text));

    Tensor<Scalar> x = add(concat_rows(content), gather_rows(segment_embedding_, segments));
    x = add(x, positions(in));

    const int heads = cfg_.heads;
    const Index dh = d / heads;
    const Scalar inv_sqrt = Scalar(1) / std::sqrt(Scalar(dh));
    for (int l = 0; l < int(layers_.size()); ++l) {
      const auto& layer = layers_[std::size_t(l)];
      const Tensor<Scalar> h = rms_norm(x, layer.attn_norm);
      const Tensor<Scalar> q = adapt(h, layer.wq, l, Projection::Query);
      const Tensor<Scalar> k = adapt(h, layer.wk, l, Projection::Key);
      const Tensor<Scalar> v = adapt(h, layer.wv, l, Projection::Value);
      std::vector<Tensor<Scalar>> per_head;
      per_head.reserve(std::size_t(heads));
      for (int hd = 0; hd < heads; ++hd) {
        const auto qh = slice_cols(q, hd * dh, dh);
        const auto kh = slice_cols(k, hd * dh, dh);
        const auto vh = slice_cols(v, hd * dh, dh);
        const auto attn = causal_softmax(scale(matmul_transposed(qh, kh), inv_sqrt));
        per_head.push_back(matmul(attn, vh));
      }
      x = add(x, matmul(heads == 1 ? per_head.front() : concat_cols(per_head), layer.wo));
      const Tensor<Scalar> f = rms_norm(x, layer.ffn_norm);
      x = add(x, layer.ffn_down(gelu(layer.ffn_up(f))));
    }
    const Index text_begin = total - Index(in.text_ids.size());
    const Tensor<Scalar> text = slice_rows(x, text_begin, Index(in.text_ids.size()));
    return matmul(rms_norm(text, final_norm_), head_);
  }

  void collect(ParameterMap<Scalar>& out, const std::string& prefix) const {
    out.emplace(prefix + ".token_embedding", token_embedding_);
    out.emplace(prefix + ".segment_embedding", segment_embedding_);
    if (prompt_positions_.defined()) out.emplace(prefix + ".prompt_positions", prompt_positions_);
    if (text_positions_.defined()) out.emplace(prefix + ".text_positions", text_positions_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto p = prefix + ".layers." + std::to_string(l);
      const auto& layer = layers_[l];
      out.emplace(p + ".attn_norm", layer.attn_norm);
      out.emplace(p + ".wq", layer.wq);
      out.emplace(p + ".wk", layer.wk);
      out.emplace(p + ".wv", layer.wv);
      out.emplace(p + ".wo", layer.wo);
      out.emplace(p + ".ffn_norm", layer.ffn_norm);
      layer.ffn_up.collect(out, p + ".ffn_up");
      layer.ffn_down.collect(out, p + ".ffn_down");
    }
    out.emplace(prefix + ".final_norm", final_norm_);
    out.emplace(prefix + ".head", head_);
  }

  template <typename To>
  Decoder<To> cast() const {
    Decoder<To> out;
    out.cfg_ = cfg_;
    out.token_embedding_ = cast_tensor<To>(token_embedding_);
    out.segment_embedding_ = cast_tensor<To>(segment_embedding_);
    if (prompt_positions_.defined()) out.prompt_positions_ = cast_tensor<To>(prompt_positions_);
    if (text_positions_.defined()) out.text_positions_ = cast_tensor<To>(text_positions_);
    for (const auto& layer : layers_) {
      DecoderLayer<To> c;
      c.attn_norm = cast_tensor<To>(layer.attn_norm);
      c.wq = cast_tensor<To>(layer.wq);
      c.wk = cast_tensor<To>(layer.wk);
      c.wv = cast_tensor<To>(layer.wv);
      c.wo = cast_tensor<To>(layer.wo);
      c.ffn_norm = cast_tensor<To>(layer.ffn_norm);
      c.ffn_up = cast_linear<To>(layer.ffn_up);
      c.ffn_down = cast_linear<To>(layer.ffn_down);
      out.layers_.push_back(std::move(c));
    }
    out.final_norm_ = cast_tensor<To>(final_norm_);
    out.head_ = cast_tensor<To>(head_);
    return out;
  }

  /// Detached copy sharing no storage with this decoder.
  Decoder detached() const {
    Decoder out = cast<Scalar>();
    ParameterMap<Scalar> params;
    out.collect(params, "d");
    for (auto& [name, t] : params) t.set_requires_grad(false);
    return out;
  }

 private:
  template <typename>
  friend class Decoder;

  void check_width(const Tensor<Scalar>& t, const char* what) const {
    if (t.cols() != cfg_.d_model) {
      throw DimensionError(std::string("decoder: ") + what + " tokens have dim " +
                           std::to_string(t.cols()) + ", expected " +
                           std::to_string(cfg_.d_model));
    }
  }

  Tensor<Scalar> positions(const DecoderInput<Scalar>& in) const {
    const Index d = cfg_.d_model;
    const Index n_audio = in.audio_length();
    const Index n_video = in.video_length();
    const Index n_prompt = Index(in.prompt_ids.size());
    const Index n_text = Index(in.text_ids.size());
    if (cfg_.positions == PositionScheme::Sequential) {
      Matrix<Scalar> pe(in.length(), d);
      for (Index t = 0; t < pe.rows(); ++t) sinusoid_row<Scalar>(double(t), pe.row(t));
      return Tensor<Scalar>(std::move(pe));
    }
    Matrix<Scalar> timeline(n_audio + n_video, d);
    for (Index t = 0; t < n_audio; ++t) {
      const double centre = (double(t) + 0.5) * in.audio_stride - 0.5;
      sinusoid_row<Scalar>(centre, timeline.row(t));
    }
    for (Index t = 0; t < n_video; ++t) {
      const double centre_video = (double(t) + 0.5) * in.video_stride - 0.5;
      sinusoid_row<Scalar>(2.0 * centre_video + 0.5, timeline.row(n_audio + t));
    }
    std::vector<int> prompt_idx(static_cast<std::size_t>(n_prompt));
    std::iota(prompt_idx.begin(), prompt_idx.end(), 0);
    std::vector<int> text_idx(static_cast<std::size_t>(n_text));
    std::iota(text_idx.begin(), text_idx.end(), 0);
    std::vector<Tensor<Scalar>> parts;
    if (timeline.rows() > 0) parts.emplace_back(std::move(timeline));
    if (n_prompt > 0) parts.push_back(gather_rows(prompt_positions_, std::span<const int>(prompt_idx)));
    parts.push_back(gather_rows(text_positions_, std::span<const int>(text_idx)));
    return concat_rows(parts);
  }

  DecoderConfig cfg_;
  Tensor<Scalar> token_embedding_;
  Tensor<Scalar> segment_embedding_;
  Tensor<Scalar> prompt_positions_;
  Tensor<Scalar> text_positions_;
  std::vector<DecoderLayer<Scalar>> layers_;
  Tensor<Scalar> final_norm_;
  Tensor<Scalar> head_;
};

}  // namespace mtsk
