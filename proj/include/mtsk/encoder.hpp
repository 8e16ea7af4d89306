#pragma once

#include "mtsk/nn.hpp"
#include "mtsk/types.hpp"

#include <cstdint>

namespace mtsk {

/// Per-frame two-layer tanh MLP standing in for a pre-trained modality
/// encoder. Its weights never require gradients.
template <typename Scalar>
class FrozenEncoder {
 public:
  FrozenEncoder() = default;

  FrozenEncoder(Modality modality, Index in_dim, Index hidden, Index out_dim, Rng& rng)
      : modality_(modality), fc1_(in_dim, hidden, rng), fc2_(hidden, out_dim, rng) {
    freeze();
  }

  Modality modality() const { return modality_; }
  Index in_dim() const { return fc1_.in_features(); }
  Index out_dim() const { return fc2_.out_features(); }

  /// Same length out; the result is a constant with no graph attached.
  template <typename In>
  TokenSequence<Scalar> encode(const TokenSequence<In>& frames) const {
    if (frames.dim() != in_dim()) {
      throw DimensionError(to_string(modality_) + " encoder: frame dim " +
                           std::to_string(frames.dim()) + " != " + std::to_string(in_dim()));
    }
    Tensor<Scalar> x(frames.tokens.template cast<Scalar>());
    return {modality_, fc2_(tanh(fc1_(x))).value()};
  }

  void collect(ParameterMap<Scalar>& out, const std::string& prefix) const {
    fc1_.collect(out, prefix + ".fc1");
    fc2_.collect(out, prefix + ".fc2");
  }

  Linear<Scalar>& fc1() { return fc1_; }
  Linear<Scalar>& fc2() { return fc2_; }
  const Linear<Scalar>& fc1() const { return fc1_; }
  const Linear<Scalar>& fc2() const { return fc2_; }

  template <typename To>
  FrozenEncoder<To> cast() const {
    FrozenEncoder<To> out;
    out.modality_ = modality_;
    out.fc1_ = cast_linear<To>(fc1_);
    out.fc2_ = cast_linear<To>(fc2_);
    out.freeze();
    return out;
  }

 private:
  template <typename>
  friend class FrozenEncoder;

  void freeze() {
    for (auto* t : {&fc1_.weight, &fc1_.bias, &fc2_.weight, &fc2_.bias}) {
      t->set_requires_grad(false);
    }
  }

  Modality modality_ = Modality::Audio;
  Linear<Scalar> fc1_;
  Linear<Scalar> fc2_;
};

}  // namespace mtsk
