#pragma once

#include "mtsk/ops.hpp"
#include "mtsk/types.hpp"

#include <map>
#include <stdexcept>
#include <utility>

namespace mtsk {

class CompressionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void check_compressible(Index length, int rate) {
  if (rate < 1) throw CompressionError("compression rate must be >= 1, got " + std::to_string(rate));
  if (length < rate || length < 1) {
    throw CompressionError("sequence shorter than compression rate (" + std::to_string(length) +
                           " < " + std::to_string(rate) + ")");
  }
}

/// Output length ⌊n / rate⌋.
inline Index compressed_length(Index n, int rate) { return n / rate; }

/// Differentiable compression of the rows of `x`.
template <typename Scalar>
Tensor<Scalar> compress(const Tensor<Scalar>& x, int rate, CompressionMethod method) {
  check_compressible(x.rows(), rate);
  if (rate == 1) return x;
  return method == CompressionMethod::AvgPool ? avg_pool_rows(x, rate) : stack_rows(x, rate);
}

template <typename Scalar>
TokenSequence<Scalar> compress(const TokenSequence<Scalar>& x, int rate,
                               CompressionMethod method) {
  return {x.modality, compress(Tensor<Scalar>(x.tokens), rate, method).value()};
}

template <typename Scalar>
using CompressedPair = std::pair<TokenSequence<Scalar>, TokenSequence<Scalar>>;

/// Every (a_i, v_j) pair of the grid, keyed by scale index.
template <typename Scalar>
std::map<ScaleIndex, CompressedPair<Scalar>> compress_all(const TokenSequence<Scalar>& audio,
                                                          const TokenSequence<Scalar>& video,
                                                          const ScaleGrid& grid) {
  grid.validate();
  std::vector<TokenSequence<Scalar>> audio_scales;
  std::vector<TokenSequence<Scalar>> video_scales;
  for (int r : grid.audio_rates) audio_scales.push_back(compress(audio, r, grid.method));
  for (int r : grid.video_rates) video_scales.push_back(compress(video, r, grid.method));
  std::map<ScaleIndex, CompressedPair<Scalar>> out;
  for (const auto idx : grid.indices()) {
    out.emplace(idx, CompressedPair<Scalar>{audio_scales[idx.audio], video_scales[idx.video]});
  }
  return out;
}

}  // namespace mtsk
