#pragma once

#include "mtsk/tensor.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mtsk {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Modality { Audio, Video };
enum class Task { Asr, Vsr, Avsr };
enum class CompressionMethod { AvgPool, Stack };
enum class LoraStrategy { MS, SS, MSS };

std::string to_string(Modality m);
std::string to_string(Task t);
std::string to_string(CompressionMethod m);
std::string to_string(LoraStrategy s);

Task parse_task(std::string_view s);
CompressionMethod parse_method(std::string_view s);
LoraStrategy parse_strategy(std::string_view s);

inline bool uses_audio(Task t) { return t != Task::Vsr; }
inline bool uses_video(Task t) { return t != Task::Asr; }

/// Feature tokens of one modality, one row per token.
template <typename Scalar>
struct TokenSequence {
  Modality modality = Modality::Audio;
  Matrix<Scalar> tokens;

  Index length() const { return tokens.rows(); }
  Index dim() const { return tokens.cols(); }
};

/// Zero-based position in the rate grid: audio rate a_{audio+1}, video rate
/// v_{video+1}.
struct ScaleIndex {
  int audio = 0;
  int video = 0;

  friend bool operator==(const ScaleIndex&, const ScaleIndex&) = default;
  friend auto operator<=>(const ScaleIndex&, const ScaleIndex&) = default;
};

/// The configured audio and video compression rates.
struct ScaleGrid {
  std::vector<int> audio_rates{4, 16};
  std::vector<int> video_rates{2, 5};
  CompressionMethod method = CompressionMethod::AvgPool;

  int audio_scales() const { return int(audio_rates.size()); }
  int video_scales() const { return int(video_rates.size()); }
  int size() const { return audio_scales() * video_scales(); }

  bool contains(ScaleIndex idx) const {
    return idx.audio >= 0 && idx.audio < audio_scales() && idx.video >= 0 &&
           idx.video < video_scales();
  }

  /// Throws std::out_of_range naming the index and the grid shape.
  void check(ScaleIndex idx) const;

  int audio_rate(ScaleIndex idx) const { return audio_rates.at(idx.audio); }
  int video_rate(ScaleIndex idx) const { return video_rates.at(idx.video); }

  /// Row-major over (audio, video).
  std::vector<ScaleIndex> indices() const;

  /// Finds the grid position of a rate pair, throwing ConfigError if absent.
  ScaleIndex index_of(int audio_rate, int video_rate) const;

  /// Rates strictly increasing and positive on both axes.
  void validate() const;

  /// Collapses the unused axis to the single placeholder rate 1.
  ScaleGrid for_task(Task task) const;

  friend bool operator==(const ScaleGrid&, const ScaleGrid&) = default;
};

std::string scale_key(int audio_rate, int video_rate);

}  // namespace mtsk
