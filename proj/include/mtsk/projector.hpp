#pragma once

#include "mtsk/nn.hpp"
#include "mtsk/types.hpp"

#include <stdexcept>
#include <utility>
#include <vector>

namespace mtsk {

/// Linear → ReLU → Linear.
template <typename Scalar>
struct Projector {
  Linear<Scalar> fc1;
  Linear<Scalar> fc2;

  Projector() = default;
  Projector(Index in, Index hidden, Index out, Rng& rng) : fc1(in, hidden, rng), fc2(hidden, out, rng) {}

  Index in_dim() const { return fc1.in_features(); }
  Index out_dim() const { return fc2.out_features(); }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return fc2(relu(fc1(x))); }

  void collect(ParameterMap<Scalar>& out, const std::string& prefix) const {
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
  }

  Index parameter_count() const { return fc1.parameter_count() + fc2.parameter_count(); }

  template <typename To>
  Projector<To> cast() const {
    Projector<To> p;
    p.fc1 = cast_linear<To>(fc1);
    p.fc2 = cast_linear<To>(fc2);
    return p;
  }
};

/// One projector per configured rate and modality (G audio + T video).
/// A modality the task does not use gets no projectors.
template <typename Scalar>
class ProjectorBank {
 public:
  struct Dims {
    Index audio_token_dim = 32;
    Index video_token_dim = 32;
    Index hidden = 256;
    Index output = 128;
  };

  ProjectorBank() = default;

  ProjectorBank(const ScaleGrid& grid, Task task, const Dims& dims, Rng& rng) : grid_(grid) {
    if (uses_audio(task)) {
      for (int r : grid.audio_rates) {
        audio_.emplace_back(input_dim(dims.audio_token_dim, r), dims.hidden, dims.output, rng);
      }
    }
    if (uses_video(task)) {
      for (int r : grid.video_rates) {
        video_.emplace_back(input_dim(dims.video_token_dim, r), dims.hidden, dims.output, rng);
      }
    }
  }

  /// Input width after compressing `token_dim`-wide tokens at `rate`.
  Index input_dim(Index token_dim, int rate) const {
    return grid_.method == CompressionMethod::Stack ? token_dim * rate : token_dim;
  }

  bool has(Modality m) const { return !(m == Modality::Audio ? audio_ : video_).empty(); }

  const Projector<Scalar>& get(Modality m, int rate_index) const {
    const auto& bank = m == Modality::Audio ? audio_ : video_;
    if (rate_index < 0 || rate_index >= int(bank.size())) {
      throw std::out_of_range(to_string(m) + " projector index " + std::to_string(rate_index) +
                              " outside bank of " + std::to_string(bank.size()));
    }
    return bank[std::size_t(rate_index)];
  }

  Projector<Scalar>& get(Modality m, int rate_index) {
    return const_cast<Projector<Scalar>&>(std::as_const(*this).get(m, rate_index));
  }

  Tensor<Scalar> project(const Tensor<Scalar>& x, Modality m, int rate_index) const {
    const auto& p = get(m, rate_index);
    if (x.cols() != p.in_dim()) {
      throw DimensionError(to_string(m) + " projector " + std::to_string(rate_index) +
                           " expects dim " + std::to_string(p.in_dim()) + ", got " +
                           std::to_string(x.cols()));
    }
    return p(x);
  }

  static std::string name(Modality m, int rate) {
    return "proj." + to_string(m) + "." + std::to_string(rate);
  }

  void collect(ParameterMap<Scalar>& out) const {
    for (std::size_t k = 0; k < audio_.size(); ++k) {
      audio_[k].collect(out, name(Modality::Audio, grid_.audio_rates[k]));
    }
    for (std::size_t k = 0; k < video_.size(); ++k) {
      video_[k].collect(out, name(Modality::Video, grid_.video_rates[k]));
    }
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& p : audio_) n += p.parameter_count();
    for (const auto& p : video_) n += p.parameter_count();
    return n;
  }

  const ScaleGrid& grid() const { return grid_; }

  template <typename To>
  ProjectorBank<To> cast() const {
    ProjectorBank<To> out;
    out.grid_ = grid_;
    for (const auto& p : audio_) out.audio_.push_back(p.template cast<To>());
    for (const auto& p : video_) out.video_.push_back(p.template cast<To>());
    return out;
  }

 private:
  template <typename>
  friend class ProjectorBank;

  ScaleGrid grid_;
  std::vector<Projector<Scalar>> audio_;
  std::vector<Projector<Scalar>> video_;
};

}  // namespace mtsk
