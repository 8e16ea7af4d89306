#include "mtsk/corpus.hpp"

#include "mtsk/blob.hpp"
#include "mtsk/hashing.hpp"
#include "mtsk/json_util.hpp"
#include "mtsk/rng.hpp"

#include <filesystem>
#include <fstream>

namespace mtsk {

using nlohmann::json;
namespace fs = std::filesystem;

void CorpusSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("corpus: " + msg); };
  if (num_train < 0 || num_test < 0) fail("sample counts must be non-negative");
  if (vocab_size < 1) fail("vocab_size must be >= 1");
  if (min_length < 1 || max_length < min_length) fail("need 1 <= min_length <= max_length");
  if (frames_per_symbol < 1) fail("frames_per_symbol must be >= 1");
  if (audio_dim < 1 || video_dim < 1) fail("frame dims must be >= 1");
  if (audio_corruption < 0 || audio_corruption > 1) fail("audio_corruption outside [0,1]");
  if (video_corruption < 0 || video_corruption > 1) fail("video_corruption outside [0,1]");
  if (noise_stddev < 0) fail("noise_stddev must be >= 0");
}

void to_json(json& j, const CorpusSpec& s) {
  j = json{{"num_train", s.num_train},
           {"num_test", s.num_test},
           {"vocab_size", s.vocab_size},
           {"min_length", s.min_length},
           {"max_length", s.max_length},
           {"frames_per_symbol", s.frames_per_symbol},
           {"audio_dim", s.audio_dim},
           {"video_dim", s.video_dim},
           {"audio_corruption", s.audio_corruption},
           {"video_corruption", s.video_corruption},
           {"noise_stddev", s.noise_stddev},
           {"seed", s.seed}};
}

void from_json(const json& j, CorpusSpec& s) {
  constexpr std::string_view sec = "corpus";
  require_known_keys(j, sec,
                     {"num_train", "num_test", "vocab_size", "min_length", "max_length",
                      "frames_per_symbol", "audio_dim", "video_dim", "audio_corruption",
                      "video_corruption", "noise_stddev", "seed"});
  read_optional(j, sec, "num_train", s.num_train);
  read_optional(j, sec, "num_test", s.num_test);
  read_optional(j, sec, "vocab_size", s.vocab_size);
  read_optional(j, sec, "min_length", s.min_length);
  read_optional(j, sec, "max_length", s.max_length);
  read_optional(j, sec, "frames_per_symbol", s.frames_per_symbol);
  read_optional(j, sec, "audio_dim", s.audio_dim);
  read_optional(j, sec, "video_dim", s.video_dim);
  read_optional(j, sec, "audio_corruption", s.audio_corruption);
  read_optional(j, sec, "video_corruption", s.video_corruption);
  read_optional(j, sec, "noise_stddev", s.noise_stddev);
  read_optional(j, sec, "seed", s.seed);
}

const std::vector<Sample>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "test") return test;
  throw CorpusError("unknown split '" + name + "'");
}

const Sample& Corpus::find(const std::string& sample_id) const {
  for (const auto* s : {&train, &test}) {
    for (const auto& sample : *s) {
      if (sample.id == sample_id) return sample;
    }
  }
  throw CorpusError("no sample with id '" + sample_id + "'");
}

namespace {

Matrix<float> gaussian_table(Rng& rng, Index rows, Index cols) {
  Matrix<float> m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index k = 0; k < cols; ++k) m(i, k) = float(rng.normal());
  }
  return m;
}

// Frame rows [first, first + count) become either the symbol embedding plus
// noise or, when corrupted, unit-variance noise carrying no symbol.
void render(Matrix<float>& frames, Index first, Index count, const Matrix<float>& table, int symbol,
            bool corrupted, double sigma, Rng& rng) {
  for (Index t = first; t < first + count; ++t) {
    for (Index k = 0; k < frames.cols(); ++k) {
      frames(t, k) = corrupted ? float(rng.normal())
                               : float(double(table(symbol, k)) + sigma * rng.normal());
    }
  }
}

std::vector<Sample> generate_split(const CorpusSpec& spec, const Corpus& c, const std::string& name,
                                   int count, std::uint64_t stream) {
  Rng rng = Rng::derive(spec.seed, stream);
  std::vector<Sample> out;
  out.reserve(std::size_t(count));
  const int video_per_symbol = spec.frames_per_symbol;
  const int audio_per_symbol = 2 * spec.frames_per_symbol;
  for (int n = 0; n < count; ++n) {
    const int length =
        spec.min_length + int(rng.below(std::uint64_t(spec.max_length - spec.min_length + 1)));
    Sample s;
    char id[32];
    std::snprintf(id, sizeof(id), "%s-%06d", name.c_str(), n);
    s.id = id;
    s.audio.tokens.resize(length * audio_per_symbol, spec.audio_dim);
    s.video.tokens.resize(length * video_per_symbol, spec.video_dim);
    for (int l = 0; l < length; ++l) {
      const int symbol = kNumSpecials + int(rng.below(std::uint64_t(spec.vocab_size)));
      s.transcript.push_back(symbol);
      const bool audio_bad = rng.bernoulli(spec.audio_corruption);
      const bool video_bad = rng.bernoulli(spec.video_corruption);
      render(s.audio.tokens, l * audio_per_symbol, audio_per_symbol, c.audio_embeddings, symbol,
             audio_bad, spec.noise_stddev, rng);
      render(s.video.tokens, l * video_per_symbol, video_per_symbol, c.video_embeddings, symbol,
             video_bad, spec.noise_stddev, rng);
    }
    s.transcript.push_back(kEosId);
    out.push_back(std::move(s));
  }
  return out;
}

json shape_json(const Matrix<float>& m) { return json::array({m.rows(), m.cols()}); }

}  // namespace

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  Corpus c;
  c.spec = spec;
  Rng tables = Rng::derive(spec.seed, 0);
  c.audio_embeddings = gaussian_table(tables, spec.total_vocab(), spec.audio_dim);
  c.video_embeddings = gaussian_table(tables, spec.total_vocab(), spec.video_dim);
  c.train = generate_split(spec, c, "train", spec.num_train, 1);
  c.test = generate_split(spec, c, "test", spec.num_test, 2);
  return c;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "mtsk-corpus";
  manifest["version"] = 1;
  manifest["dtype"] = "float32";
  manifest["byte_order"] = "little";
  manifest["spec"] = corpus.spec;
  json symbols = json::array();
  for (int y = 0; y < corpus.spec.vocab_size; ++y) symbols.push_back("s" + std::to_string(y));
  manifest["vocab"] = {{"size", corpus.spec.total_vocab()},
                       {"specials", {{"pad", kPadId}, {"bos", kBosId}, {"eos", kEosId}}},
                       {"symbols", symbols}};

  BlobWriter emb;
  const auto audio_off = emb.append(corpus.audio_embeddings);
  const auto video_off = emb.append(corpus.video_embeddings);
  write_file_bytes((fs::path(dir) / "embeddings.bin").string(), emb.bytes());
  manifest["embeddings"] = {
      {"blob", "embeddings.bin"},
      {"sha256", sha256_hex(emb.bytes())},
      {"audio", {{"shape", shape_json(corpus.audio_embeddings)}, {"offset", audio_off}}},
      {"video", {{"shape", shape_json(corpus.video_embeddings)}, {"offset", video_off}}}};

  for (const std::string name : {"train", "test"}) {
    BlobWriter blob;
    json samples = json::array();
    for (const auto& s : corpus.split(name)) {
      const auto a = blob.append(s.audio.tokens);
      const auto v = blob.append(s.video.tokens);
      samples.push_back({{"id", s.id},
                         {"audio", {{"shape", shape_json(s.audio.tokens)}, {"offset", a}}},
                         {"video", {{"shape", shape_json(s.video.tokens)}, {"offset", v}}},
                         {"transcript", s.transcript}});
    }
    const std::string blob_name = name + ".bin";
    write_file_bytes((fs::path(dir) / blob_name).string(), blob.bytes());
    manifest["splits"][name] = {{"blob", blob_name},
                                {"bytes", blob.bytes().size()},
                                {"sha256", sha256_hex(blob.bytes())},
                                {"samples", samples}};
  }
  write_file_bytes((fs::path(dir) / "manifest.json").string(), manifest.dump(1) + "\n");
}

namespace {

BlobReader open_blob(const fs::path& dir, const json& record, const std::string& what) {
  const auto name = record.at("blob").get<std::string>();
  const auto path = dir / name;
  if (!fs::exists(path)) throw CorpusError(what + ": missing blob " + path.string());
  std::string bytes = read_file_bytes(path.string());
  if (sha256_hex(bytes) != record.at("sha256").get<std::string>()) {
    throw CorpusError(what + ": checksum mismatch for " + name);
  }
  return BlobReader(std::move(bytes));
}

Matrix<float> read_entry(const BlobReader& blob, const json& entry, const std::string& what) {
  const auto shape = entry.at("shape").get<std::vector<Index>>();
  if (shape.size() != 2) throw CorpusError(what + ": shape must have two dims");
  try {
    return blob.read<float>(entry.at("offset").get<std::uint64_t>(), shape[0], shape[1], what);
  } catch (const std::runtime_error& e) {
    throw CorpusError(e.what());
  }
}

}  // namespace

Corpus load_corpus(const std::string& dir_str) {
  const fs::path dir(dir_str);
  const auto manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw CorpusError("missing " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(read_file_bytes(manifest_path.string()));
  } catch (const json::parse_error& e) {
    throw CorpusError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  Corpus c;
  std::string record = "manifest";
  try {
    if (manifest.at("format") != "mtsk-corpus") throw CorpusError("manifest: unexpected format");
    if (manifest.at("dtype") != "float32") throw CorpusError("manifest: unsupported dtype");
    c.spec = manifest.at("spec").get<CorpusSpec>();
    record = "embeddings";
    const auto& emb = manifest.at("embeddings");
    const BlobReader emb_blob = open_blob(dir, emb, record);
    c.audio_embeddings = read_entry(emb_blob, emb.at("audio"), "embeddings.audio");
    c.video_embeddings = read_entry(emb_blob, emb.at("video"), "embeddings.video");
    for (const std::string name : {"train", "test"}) {
      record = "split " + name;
      const auto& split = manifest.at("splits").at(name);
      const BlobReader blob = open_blob(dir, split, record);
      auto& out = name == "train" ? c.train : c.test;
      for (const auto& entry : split.at("samples")) {
        Sample s;
        s.id = entry.at("id").get<std::string>();
        record = "sample " + s.id;
        s.audio.tokens = read_entry(blob, entry.at("audio"), record + " audio");
        s.video.tokens = read_entry(blob, entry.at("video"), record + " video");
        s.transcript = entry.at("transcript").get<std::vector<int>>();
        if (s.transcript.empty() || s.transcript.back() != kEosId) {
          throw CorpusError(record + ": transcript must end with EOS");
        }
        if (s.audio.length() != 2 * s.video.length()) {
          throw CorpusError(record + ": audio length must be twice video length");
        }
        out.push_back(std::move(s));
      }
    }
  } catch (const json::exception& e) {
    throw CorpusError("malformed manifest at " + record + ": " + e.what());
  } catch (const ConfigError& e) {
    throw CorpusError("malformed manifest at " + record + ": " + e.what());
  }
  return c;
}

}  // namespace mtsk
