#pragma once

#include "mtsk/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtsk {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kNumSpecials = 3;

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CorpusSpec {
  int num_train = 2000;
  int num_test = 200;
  int vocab_size = 32;  // symbols, excluding the three reserved ids
  int min_length = 4;
  int max_length = 12;
  int frames_per_symbol = 4;  // video frames; audio gets twice as many
  int audio_dim = 16;
  int video_dim = 16;
  double audio_corruption = 0.15;
  double video_corruption = 0.15;
  double noise_stddev = 0.3;
  std::uint64_t seed = 1234;

  int total_vocab() const { return vocab_size + kNumSpecials; }
  void validate() const;

  friend bool operator==(const CorpusSpec&, const CorpusSpec&) = default;
};

void to_json(nlohmann::json& j, const CorpusSpec& s);
/// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, CorpusSpec& s);

struct Sample {
  std::string id;
  TokenSequence<float> audio{Modality::Audio, {}};
  TokenSequence<float> video{Modality::Video, {}};
  std::vector<int> transcript;  // symbol ids followed by kEosId
};

struct Corpus {
  CorpusSpec spec;
  Matrix<float> audio_embeddings;  // total_vocab × audio_dim; row y renders symbol y
  Matrix<float> video_embeddings;
  std::vector<Sample> train;
  std::vector<Sample> test;

  const std::vector<Sample>& split(const std::string& name) const;
  const Sample& find(const std::string& sample_id) const;
};

Corpus generate_corpus(const CorpusSpec& spec);

/// Writes manifest.json, embeddings.bin, train.bin and test.bin into `dir`.
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace mtsk
