#pragma once

#include "mtsk/nn.hpp"
#include "mtsk/types.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace mtsk {

enum class Projection { Query, Key, Value };

inline char projection_letter(Projection p) {
  return p == Projection::Query ? 'q' : p == Projection::Key ? 'k' : 'v';
}

Projection parse_projection(char c);

struct LoraConfig {
  LoraStrategy strategy = LoraStrategy::MS;
  double scale = 0.125;
  int rank_divisor = 32;
  std::vector<Projection> targets{Projection::Query, Projection::Value};

  friend bool operator==(const LoraConfig&, const LoraConfig&) = default;
};

/// d_model / rank_divisor; throws ConfigError unless the division is exact.
int rank_for(int d_model, int rank_divisor);

/// W_down (d×r) and W_up (r×d); their product is the low-rank update.
template <typename Scalar>
struct LoraPair {
  Tensor<Scalar> down;
  Tensor<Scalar> up;
};

/// The adapter factors for every adapted projection of every decoder layer.
///
/// MS owns one global pair per adapted matrix, SS one pair per (scale,
/// matrix), MSS both. Down factors start as small Gaussians and up factors
/// at zero, so a fresh bank leaves the base model unchanged.
template <typename Scalar>
class LoraBank {
 public:
  LoraBank() = default;

  LoraBank(const LoraConfig& cfg, int layers, Index d_model, int audio_scales, int video_scales,
           Rng& rng)
      : cfg_(cfg), layers_(layers), d_model_(d_model), audio_scales_(audio_scales),
        video_scales_(video_scales) {
    rank_ = rank_for(int(d_model), cfg.rank_divisor);
    if (rank_ > d_model / 2) {
      throw ConfigError("LoRA rank " + std::to_string(rank_) + " exceeds d/2 = " +
                        std::to_string(d_model / 2));
    }
    const double stddev = 1.0 / std::sqrt(double(d_model));
    auto make_pair = [&] {
      return LoraPair<Scalar>{Tensor<Scalar>(normal_matrix<Scalar>(rng, d_model, rank_, stddev), true),
                              Tensor<Scalar>(Matrix<Scalar>::Zero(rank_, d_model), true)};
    };
    if (has_global()) {
      for (int s = 0; s < slots(); ++s) global_.push_back(make_pair());
    }
    if (has_specific()) {
      specific_.resize(std::size_t(audio_scales * video_scales));
      for (auto& per_scale : specific_) {
        for (int s = 0; s < slots(); ++s) per_scale.push_back(make_pair());
      }
    }
  }

  /// Bank over explicit factors. Shapes must agree (down d×r, up r×d) but
  /// the r <= d/2 rule is not applied.
  static LoraBank from_pairs(const LoraConfig& cfg, int layers, int audio_scales, int video_scales,
                             std::vector<LoraPair<Scalar>> global,
                             std::vector<std::vector<LoraPair<Scalar>>> specific) {
    LoraBank b;
    b.cfg_ = cfg;
    b.layers_ = layers;
    b.audio_scales_ = audio_scales;
    b.video_scales_ = video_scales;
    const auto& any = !global.empty() ? global.front() : specific.at(0).at(0);
    b.d_model_ = any.down.rows();
    b.rank_ = int(any.down.cols());
    if (b.has_global() && int(global.size()) != b.slots()) {
      throw ConfigError("LoRA bank: expected " + std::to_string(b.slots()) + " global pairs");
    }
    if (b.has_specific() && int(specific.size()) != audio_scales * video_scales) {
      throw ConfigError("LoRA bank: expected " + std::to_string(audio_scales * video_scales) +
                        " scale-specific pair sets");
    }
    auto check_pair = [&](const LoraPair<Scalar>& p) {
      if (p.down.rows() != b.d_model_ || p.down.cols() != b.rank_ || p.up.rows() != b.rank_ ||
          p.up.cols() != b.d_model_) {
        throw DimensionError("LoRA bank: inconsistent factor shapes");
      }
    };
    for (const auto& p : global) check_pair(p);
    for (const auto& per_scale : specific) {
      if (int(per_scale.size()) != b.slots()) {
        throw ConfigError("LoRA bank: expected " + std::to_string(b.slots()) + " pairs per scale");
      }
      for (const auto& p : per_scale) check_pair(p);
    }
    if (b.has_global()) b.global_ = std::move(global);
    if (b.has_specific()) b.specific_ = std::move(specific);
    return b;
  }

  const LoraConfig& config() const { return cfg_; }
  LoraStrategy strategy() const { return cfg_.strategy; }
  Scalar scale() const { return Scalar(cfg_.scale); }
  int rank() const { return rank_; }
  int layers() const { return layers_; }
  int slots() const { return layers_ * int(cfg_.targets.size()); }
  int specific_pair_count() const { return int(specific_.size()); }
  bool has_global() const { return cfg_.strategy != LoraStrategy::SS; }
  bool has_specific() const { return cfg_.strategy != LoraStrategy::MS; }

  /// Slot of (layer, projection), or -1 when that matrix is not adapted.
  int slot(int layer, Projection p) const {
    for (std::size_t t = 0; t < cfg_.targets.size(); ++t) {
      if (cfg_.targets[t] == p) return layer * int(cfg_.targets.size()) + int(t);
    }
    return -1;
  }

  void check(ScaleIndex idx) const {
    if (idx.audio < 0 || idx.audio >= audio_scales_ || idx.video < 0 ||
        idx.video >= video_scales_) {
      throw std::out_of_range("scale index (" + std::to_string(idx.audio) + "," +
                              std::to_string(idx.video) + ") outside " +
                              std::to_string(audio_scales_) + "x" + std::to_string(video_scales_) +
                              " LoRA grid");
    }
  }

  const LoraPair<Scalar>& global(int slot) const { return global_.at(std::size_t(slot)); }

  const LoraPair<Scalar>& specific(ScaleIndex idx, int slot) const {
    check(idx);
    return specific_.at(flat(idx)).at(std::size_t(slot));
  }

  LoraPair<Scalar>& global(int slot) { return global_.at(std::size_t(slot)); }
  LoraPair<Scalar>& specific(ScaleIndex idx, int slot) {
    check(idx);
    return specific_.at(flat(idx)).at(std::size_t(slot));
  }

  /// Pairs applied at `idx`, in summation order (specific, then global).
  std::vector<const LoraPair<Scalar>*> active(ScaleIndex idx, int slot) const {
    check(idx);
    std::vector<const LoraPair<Scalar>*> out;
    if (has_specific()) out.push_back(&specific(idx, slot));
    if (has_global()) out.push_back(&global(slot));
    return out;
  }

  std::string slot_name(int slot) const {
    const int per_layer = int(cfg_.targets.size());
    return std::to_string(slot / per_layer) + "." +
           std::string(1, projection_letter(cfg_.targets[std::size_t(slot % per_layer)]));
  }

  /// Checkpoint names; scale positions are written 1-based.
  std::string global_name(int slot) const { return "lora.ms." + slot_name(slot); }
  std::string specific_name(ScaleIndex idx, int slot) const {
    return "lora.ss." + std::to_string(idx.audio + 1) + "." + std::to_string(idx.video + 1) +
           "." + slot_name(slot);
  }

  /// Names of the factors used at `idx`.
  std::vector<std::string> active_parameters(ScaleIndex idx) const {
    check(idx);
    std::vector<std::string> names;
    for (int s = 0; s < slots(); ++s) {
      if (has_specific()) {
        names.push_back(specific_name(idx, s) + ".down");
        names.push_back(specific_name(idx, s) + ".up");
      }
      if (has_global()) {
        names.push_back(global_name(s) + ".down");
        names.push_back(global_name(s) + ".up");
      }
    }
    return names;
  }

  void collect(ParameterMap<Scalar>& out) const {
    for (int s = 0; s < int(global_.size()); ++s) {
      out.emplace(global_name(s) + ".down", global_[std::size_t(s)].down);
      out.emplace(global_name(s) + ".up", global_[std::size_t(s)].up);
    }
    for (int i = 0; i < audio_scales_; ++i) {
      for (int j = 0; j < video_scales_; ++j) {
        if (!has_specific()) continue;
        for (int s = 0; s < slots(); ++s) {
          const auto& p = specific_[flat({i, j})][std::size_t(s)];
          out.emplace(specific_name({i, j}, s) + ".down", p.down);
          out.emplace(specific_name({i, j}, s) + ".up", p.up);
        }
      }
    }
  }

  Index parameter_count() const {
    const Index per_pair = 2 * d_model_ * rank_;
    const Index pairs = Index(global_.size()) + Index(specific_.size()) * slots();
    return per_pair * pairs;
  }

  template <typename To>
  LoraBank<To> cast() const {
    LoraBank<To> out;
    out.cfg_ = cfg_;
    out.layers_ = layers_;
    out.d_model_ = d_model_;
    out.audio_scales_ = audio_scales_;
    out.video_scales_ = video_scales_;
    out.rank_ = rank_;
    auto conv = [](const LoraPair<Scalar>& p) {
      return LoraPair<To>{cast_tensor<To>(p.down), cast_tensor<To>(p.up)};
    };
    for (const auto& p : global_) out.global_.push_back(conv(p));
    for (const auto& per_scale : specific_) {
      out.specific_.emplace_back();
      for (const auto& p : per_scale) out.specific_.back().push_back(conv(p));
    }
    return out;
  }

 private:
  template <typename>
  friend class LoraBank;

  std::size_t flat(ScaleIndex idx) const { return std::size_t(idx.audio * video_scales_ + idx.video); }

  LoraConfig cfg_;
  int layers_ = 0;
  Index d_model_ = 0;
  int audio_scales_ = 1;
  int video_scales_ = 1;
  int rank_ = 1;
  std::vector<LoraPair<Scalar>> global_;
  std::vector<std::vector<LoraPair<Scalar>>> specific_;
};

/// x·W plus s·x·W_down·W_up for every pair in `pairs`, in order.
template <typename Scalar>
Tensor<Scalar> apply_lora(const Tensor<Scalar>& x, const Tensor<Scalar>& base_weight,
                          const std::vector<const LoraPair<Scalar>*>& pairs, Scalar s) {
  Tensor<Scalar> out = matmul(x, base_weight);
  for (const auto* p : pairs) out = add(out, scale(matmul(matmul(x, p->down), p->up), s));
  return out;
}

/// The adapted projection at scale `idx`: MS adds the global update, SS the
/// (i,j)-specific update, MSS both.
template <typename Scalar>
Tensor<Scalar> adapted_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& base_weight,
                               const LoraBank<Scalar>& bank, ScaleIndex idx, int layer,
                               Projection p) {
  bank.check(idx);
  const int s = bank.slot(layer, p);
  if (s < 0) return matmul(x, base_weight);
  return apply_lora(x, base_weight, bank.active(idx, s), bank.scale());
}

}  // namespace mtsk
