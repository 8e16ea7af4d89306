#include "mtsk/types.hpp"

#include <stdexcept>

namespace mtsk {

std::string to_string(Modality m) { return m == Modality::Audio ? "audio" : "video"; }

std::string to_string(Task t) {
  switch (t) {
    case Task::Asr: return "asr";
    case Task::Vsr: return "vsr";
    case Task::Avsr: return "avsr";
  }
  return "?";
}

std::string to_string(CompressionMethod m) {
  return m == CompressionMethod::AvgPool ? "avgpool" : "stack";
}

std::string to_string(LoraStrategy s) {
  switch (s) {
    case LoraStrategy::MS: return "ms";
    case LoraStrategy::SS: return "ss";
    case LoraStrategy::MSS: return "mss";
  }
  return "?";
}

Task parse_task(std::string_view s) {
  if (s == "asr") return Task::Asr;
  if (s == "vsr") return Task::Vsr;
  if (s == "avsr") return Task::Avsr;
  throw ConfigError("unknown task '" + std::string(s) + "' (expected asr|vsr|avsr)");
}

CompressionMethod parse_method(std::string_view s) {
  if (s == "avgpool") return CompressionMethod::AvgPool;
  if (s == "stack") return CompressionMethod::Stack;
  throw ConfigError("unknown compression method '" + std::string(s) +
                    "' (expected avgpool|stack)");
}

LoraStrategy parse_strategy(std::string_view s) {
  if (s == "ms") return LoraStrategy::MS;
  if (s == "ss") return LoraStrategy::SS;
  if (s == "mss") return LoraStrategy::MSS;
  throw ConfigError("unknown LoRA strategy '" + std::string(s) + "' (expected ms|ss|mss)");
}

void ScaleGrid::check(ScaleIndex idx) const {
  if (!contains(idx)) {
    throw std::out_of_range("scale index (" + std::to_string(idx.audio) + "," +
                            std::to_string(idx.video) + ") outside " +
                            std::to_string(audio_scales()) + "x" +
                            std::to_string(video_scales()) + " grid");
  }
}

std::vector<ScaleIndex> ScaleGrid::indices() const {
  std::vector<ScaleIndex> out;
  out.reserve(std::size_t(size()));
  for (int i = 0; i < audio_scales(); ++i) {
    for (int j = 0; j < video_scales(); ++j) out.push_back({i, j});
  }
  return out;
}

ScaleIndex ScaleGrid::index_of(int audio_rate, int video_rate) const {
  for (int i = 0; i < audio_scales(); ++i) {
    for (int j = 0; j < video_scales(); ++j) {
      if (audio_rates[i] == audio_rate && video_rates[j] == video_rate) return {i, j};
    }
  }
  throw ConfigError("scale " + scale_key(audio_rate, video_rate) + " is not in the grid");
}

void ScaleGrid::validate() const {
  auto check_axis = [](const std::vector<int>& rates, const char* axis) {
    if (rates.empty()) throw ConfigError(std::string(axis) + " rates are empty");
    for (std::size_t k = 0; k < rates.size(); ++k) {
      if (rates[k] < 1) {
        throw ConfigError(std::string(axis) + " rate " + std::to_string(rates[k]) +
                          " is not positive");
      }
      if (k > 0 && rates[k] <= rates[k - 1]) {
        throw ConfigError(std::string(axis) + " rates must be strictly increasing");
      }
    }
  };
  check_axis(audio_rates, "audio");
  check_axis(video_rates, "video");
}

ScaleGrid ScaleGrid::for_task(Task task) const {
  ScaleGrid g = *this;
  if (!uses_audio(task)) g.audio_rates = {1};
  if (!uses_video(task)) g.video_rates = {1};
  return g;
}

std::string scale_key(int audio_rate, int video_rate) {
  return std::to_string(audio_rate) + "," + std::to_string(video_rate);
}

}  // namespace mtsk
