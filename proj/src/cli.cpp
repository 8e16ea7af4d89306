#include "mtsk/cli.hpp"

#include "mtsk/checkpoint.hpp"
#include "mtsk/config.hpp"
#include "mtsk/evaluate.hpp"
#include "mtsk/hashing.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mtsk {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string scale;
  std::string strategy;
  std::string method;
  std::string task;
  std::string out = ".";
  std::string corpus;
  std::string base;
  std::string checkpoint;
  std::string sample;
  std::string split = "test";
  std::string rates;
  std::string wer;
  std::string mode;
  int limit = 0;
  bool pruned = false;
};

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::logic_error&) {
      throw UsageError(std::string(what) + ": '" + text + "' is not a comma-separated integer list");
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + ": empty list");
  return out;
}

std::pair<int, int> parse_scale(const std::string& text) {
  const auto v = parse_int_list(text, "--scale");
  if (v.size() != 2) throw UsageError("--scale expects a,v (got '" + text + "')");
  return {v[0], v[1]};
}

/// Every regular file under `path` (or `path` itself), hashed as git would.
void hash_inputs(const std::string& path, json& inputs) {
  if (path.empty()) return;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(path)) {
    files.push_back(path);
  }
  for (const auto& f : files) {
    const std::string bytes = read_file_bytes(f.string());
    inputs.push_back(
        json{{"path", f.string()},
             {"git_hash", git_blob_hash(std::as_bytes(std::span(bytes.data(), bytes.size())))}});
  }
}

class Runner {
 public:
  Runner(std::string command, const Options& opt, std::vector<std::string> argv, std::ostream& out)
      : command_(std::move(command)), opt_(opt), argv_(std::move(argv)), out_(out) {}

  void run() {
    fs::create_directories(opt_.out);
    try {
      rc_ = opt_.config.empty() ? RunConfig{} : load_run_config(opt_.config);
      hash_inputs(opt_.config, inputs_);
      if (command_ == "gen-data") gen_data();
      else if (command_ == "pretrain-base") pretrain_base();
      else if (command_ == "train") train_matryoshka();
      else if (command_ == "eval") eval();
      else if (command_ == "decode") decode_one();
      else if (command_ == "cost-report") cost();
      else if (command_ == "compare-baseline") compare();
    } catch (const std::exception& e) {
      summary_ = nlohmann::json{{"error", e.what()}};
      write_run_json();
      throw;
    }
    write_run_json();
  }

 private:
  std::string path(const std::string& name) const { return (fs::path(opt_.out) / name).string(); }

  void output(const std::string& name, std::string_view bytes) {
    write_file_bytes(path(name), bytes);
    outputs_.push_back(path(name));
  }

  void apply_model_overrides(ModelConfig& m) const {
    if (!opt_.task.empty()) m.task = parse_task(opt_.task);
    if (!opt_.method.empty()) m.grid.method = parse_method(opt_.method);
    if (!opt_.strategy.empty()) m.lora.strategy = parse_strategy(opt_.strategy);
    if (opt_.seed) m.seed = *opt_.seed;
    m.validate();
  }

  /// Flags given on eval-like commands must agree with the checkpoint.
  void check_flags_match(const ModelConfig& m) const {
    auto mismatch = [](const std::string& what, const std::string& flag, const std::string& ckpt) {
      throw CheckpointError("grid/checkpoint mismatch: --" + what + " " + flag +
                            " but checkpoint has " + ckpt);
    };
    if (!opt_.task.empty() && parse_task(opt_.task) != m.task) {
      mismatch("task", opt_.task, to_string(m.task));
    }
    if (!opt_.method.empty() && parse_method(opt_.method) != m.grid.method) {
      mismatch("method", opt_.method, to_string(m.grid.method));
    }
    if (!opt_.strategy.empty() && parse_strategy(opt_.strategy) != m.lora.strategy) {
      mismatch("strategy", opt_.strategy, to_string(m.lora.strategy));
    }
  }

  const Corpus& corpus() {
    if (opt_.corpus.empty()) throw UsageError(command_ + ": --corpus is required");
    if (!corpus_) {
      corpus_ = load_corpus(opt_.corpus);
      hash_inputs(opt_.corpus, inputs_);
    }
    return *corpus_;
  }

  Checkpoint checkpoint(const std::string& dir, const char* flag) {
    if (dir.empty()) throw UsageError(command_ + ": --" + flag + " is required");
    hash_inputs(dir, inputs_);
    return load_checkpoint(dir);
  }

  void check_corpus_fits(const ModelConfig& m, const Corpus& c) const {
    if (m.audio_frame_dim != c.spec.audio_dim || m.video_frame_dim != c.spec.video_dim ||
        m.text_vocab != c.spec.total_vocab()) {
      throw ConfigError("corpus in " + opt_.corpus + " (dims " + std::to_string(c.spec.audio_dim) +
                        "," + std::to_string(c.spec.video_dim) + ", vocab " +
                        std::to_string(c.spec.total_vocab()) + ") does not fit the model");
    }
  }

  std::vector<Sample> eval_samples() {
    auto samples = corpus().split(opt_.split);
    if (opt_.limit > 0 && std::size_t(opt_.limit) < samples.size()) samples.resize(std::size_t(opt_.limit));
    if (samples.empty()) throw CorpusError("split '" + opt_.split + "' has no samples");
    return samples;
  }

  DecodeConfig decode_config() const {
    DecodeConfig d = rc_.decode;
    if (!opt_.mode.empty()) d.mode = parse_decode_mode(opt_.mode);
    d.validate();
    return d;
  }

  void gen_data() {
    CorpusSpec spec = rc_.corpus;
    if (opt_.seed) spec.seed = *opt_.seed;
    spec.validate();
    const Corpus c = generate_corpus(spec);
    save_corpus(c, opt_.out);
    for (const char* f : {"manifest.json", "embeddings.bin", "train.bin", "test.bin"}) {
      outputs_.push_back(path(f));
    }
    resolved_["corpus"] = spec;
    out_ << "corpus: " << c.train.size() << " train, " << c.test.size() << " test samples -> "
         << opt_.out << "\n";
  }

  void write_metrics(const TrainResult& r) {
    std::string lines;
    for (const auto& rec : r.log) lines += json(rec).dump() + "\n";
    output("metrics.jsonl", lines);
  }

  TrainConfig train_config(TrainConfig t) const {
    if (opt_.seed) t.seed = *opt_.seed;
    t.validate();
    return t;
  }

  void pretrain_base() {
    const Corpus& c = corpus();
    ModelConfig m = rc_.model;
    m.encoder_seed = c.spec.seed;
    apply_model_overrides(m);
    m.grid.audio_rates = {1};
    m.grid.video_rates = {1};
    check_corpus_fits(m, c);
    const TrainConfig tc = train_config(rc_.pretrain);
    MtskModel<float> model(m);
    model.set_phase(Phase::Pretrain);
    const auto train_set = model.encode_all(c.train);
    const auto eval_set = model.encode_all(c.test);
    const auto result = train(model, train_set, eval_set, tc, [&](const EpochRecord& e) {
      out_ << "epoch " << e.epoch << " train_loss " << e.train_loss << "\n";
    });
    model.set_phase(Phase::Inference);
    Checkpoint ckpt = make_checkpoint(model);
    ckpt.corpus = c.spec;
    ckpt.extra = json{{"role", "base"}, {"initial_train_loss", result.initial_train_loss}};
    save_checkpoint(ckpt, opt_.out);
    outputs_.push_back(path("manifest.json"));
    outputs_.push_back(path("tensors.bin"));
    write_metrics(result);
    resolved_["model"] = m;
    resolved_["train"] = tc;
    summary_ = json{{"initial_train_loss", result.initial_train_loss}, {"steps", result.steps}};
  }

  void train_matryoshka() {
    const Corpus& c = corpus();
    const Checkpoint base_ckpt = checkpoint(opt_.base, "base");
    if (base_ckpt.extra.value("role", "") != "base") {
      throw CheckpointError("--base " + opt_.base + " is not a pretrain-base checkpoint");
    }
    const MtskModel<float> base = model_from_checkpoint(base_ckpt);
    ModelConfig m = rc_.model;
    m.encoder_seed = base_ckpt.model.encoder_seed;
    apply_model_overrides(m);
    if (m.task != base_ckpt.model.task) {
      throw CheckpointError("grid/checkpoint mismatch: task " + to_string(m.task) +
                            " but base was trained for " + to_string(base_ckpt.model.task));
    }
    if (!(m.decoder == base_ckpt.model.decoder)) {
      throw CheckpointError("grid/checkpoint mismatch: decoder config differs from the base");
    }
    check_corpus_fits(m, c);
    const TrainConfig tc = train_config(rc_.train);
    MtskModel<float> model(m);
    model.load_base_from(base);
    model.set_phase(Phase::Adapt);
    const std::vector<std::string> frozen{"encoder.", "decoder."};
    const auto before = parameter_checksum(model.parameters(), frozen);
    const auto train_set = model.encode_all(c.train);
    const auto eval_set = model.encode_all(c.test);
    const auto result = train(model, train_set, eval_set, tc, [&](const EpochRecord& e) {
      out_ << "epoch " << e.epoch << " train_loss " << e.train_loss << "\n";
    });
    const auto after = parameter_checksum(model.parameters(), frozen);
    if (before != after) throw TrainingError("frozen parameters changed during training");
    model.set_phase(Phase::Inference);
    Checkpoint ckpt = make_checkpoint(model);
    ckpt.corpus = c.spec;
    ckpt.extra = json{{"role", "matryoshka"}, {"initial_train_loss", result.initial_train_loss}};
    save_checkpoint(ckpt, opt_.out);
    outputs_.push_back(path("manifest.json"));
    outputs_.push_back(path("tensors.bin"));
    write_metrics(result);
    resolved_["model"] = m;
    resolved_["train"] = tc;
    summary_ = json{{"initial_train_loss", result.initial_train_loss},
                    {"steps", result.steps},
                    {"frozen_checksum", after},
                    {"trainable_parameters", projector_parameter_count(m) + lora_parameter_count(m)}};
  }

  /// Views to evaluate: the pruned scale, the --scale flag, or the whole grid.
  std::vector<InferenceView<float>> views(const Checkpoint& ckpt) {
    const ScaleGrid grid = ckpt.model.grid.for_task(ckpt.model.task);
    std::vector<ScaleIndex> indices;
    if (!opt_.scale.empty()) {
      const auto [a, v] = parse_scale(opt_.scale);
      indices.push_back(grid.index_of(a, v));
    } else if (ckpt.pruned_to) {
      indices.push_back(*ckpt.pruned_to);
    } else {
      indices = grid.indices();
    }
    std::vector<InferenceView<float>> out;
    for (auto idx : indices) {
      if (ckpt.pruned_to && !(idx == *ckpt.pruned_to)) {
        throw CheckpointError("grid/checkpoint mismatch: checkpoint is pruned to scale " +
                              scale_key(grid.audio_rate(*ckpt.pruned_to), grid.video_rate(*ckpt.pruned_to)));
      }
      out.emplace_back(ckpt.model, idx, ckpt.tensors);
    }
    return out;
  }

  void eval() {
    Checkpoint ckpt = checkpoint(opt_.checkpoint, "checkpoint");
    check_flags_match(ckpt.model);
    if (opt_.pruned) {
      if (opt_.scale.empty()) throw UsageError("eval --pruned needs --scale");
      const auto [a, v] = parse_scale(opt_.scale);
      ckpt = prune_checkpoint(ckpt, ckpt.model.grid.for_task(ckpt.model.task).index_of(a, v));
    }
    const auto samples = eval_samples();
    const DecodeConfig dc = decode_config();
    json table = json::array();
    std::string csv = "audio_rate,video_rate,wer,edits,reference_tokens\n";
    std::string records;
    out_ << "audio_rate video_rate wer\n";
    for (const auto& view : views(ckpt)) {
      std::vector<EncodedSample<float>> encoded;
      for (const auto& s : samples) encoded.push_back(view.encode(s));
      const ScaleEval e = evaluate_view(view, encoded, dc);
      table.push_back(json{{"audio_rate", e.audio_rate},
                           {"video_rate", e.video_rate},
                           {"wer", e.error.rate()},
                           {"edits", e.error.edits},
                           {"reference_tokens", e.error.reference_tokens}});
      std::ostringstream row;
      row << e.audio_rate << ',' << e.video_rate << ',' << std::setprecision(17) << e.error.rate()
          << ',' << e.error.edits << ',' << e.error.reference_tokens << "\n";
      csv += row.str();
      for (const auto& r : e.records) records += json(r).dump() + "\n";
      out_ << e.audio_rate << ' ' << e.video_rate << ' ' << e.error.rate() << "\n";
    }
    output("eval.json", json{{"split", opt_.split}, {"samples", samples.size()}, {"decode", dc},
                             {"scales", table}}.dump(2) + "\n");
    output("eval.csv", csv);
    output("decodes.jsonl", records);
    resolved_["model"] = ckpt.model;
    resolved_["decode"] = dc;
  }

  void decode_one() {
    if (opt_.sample.empty()) throw UsageError("decode: --sample is required");
    if (opt_.scale.empty()) throw UsageError("decode: --scale is required");
    const Checkpoint ckpt = checkpoint(opt_.checkpoint, "checkpoint");
    check_flags_match(ckpt.model);
    const Sample& s = corpus().find(opt_.sample);
    const DecodeConfig dc = decode_config();
    const auto vs = views(ckpt);
    const auto& view = vs.front();
    const auto x = view.encode(s);
    const Hypothesis h = view.transcribe(x, dc);
    const DecodeRecord r{s.id, view.audio_rate(), view.video_rate(), strip_eos(h.tokens, dc.eos_id),
                         strip_eos(s.transcript, dc.eos_id), h.logprob};
    const std::string line = json(r).dump();
    out_ << line << "\n";
    output("decode.jsonl", line + "\n");
    resolved_["model"] = ckpt.model;
    resolved_["decode"] = dc;
  }

  void cost() {
    CostReport report = cost_report(rc_.cost);
    if (!opt_.wer.empty()) {
      hash_inputs(opt_.wer, inputs_);
      json e;
      try {
        e = json::parse(read_file_bytes(opt_.wer));
      } catch (const json::parse_error& ex) {
        throw ConfigError(opt_.wer + ": malformed JSON: " + ex.what());
      }
      std::map<std::string, double> wer;
      for (const auto& row : e.at("scales")) {
        wer[scale_key(row.at("audio_rate").get<int>(), row.at("video_rate").get<int>())] =
            row.at("wer").get<double>();
      }
      attach_wer(report, wer);
    }
    const std::string csv = to_csv(report);
    output("cost.csv", csv);
    output("cost_plot.json", to_plot_json(report).dump(2) + "\n");
    out_ << csv;
    resolved_["cost"] = rc_.cost;
  }

  void compare() {
    const Checkpoint mtsk_ckpt = checkpoint(opt_.checkpoint, "checkpoint");
    const Checkpoint base_ckpt = checkpoint(opt_.base, "base");
    check_flags_match(mtsk_ckpt.model);
    if (mtsk_ckpt.model.task != base_ckpt.model.task) {
      throw CheckpointError("grid/checkpoint mismatch: matryoshka and base checkpoints differ in task");
    }
    const Task task = mtsk_ckpt.model.task;
    const ScaleGrid grid = mtsk_ckpt.model.grid.for_task(task);
    // Single-modality tasks compare along their one axis; AVSR defaults to every grid point.
    std::vector<std::pair<int, int>> points;
    if (!opt_.rates.empty()) {
      for (int r : parse_int_list(opt_.rates, "--rates")) {
        points.emplace_back(uses_audio(task) ? r : 1, uses_video(task) ? r : 1);
      }
    } else {
      for (auto idx : grid.indices()) points.emplace_back(grid.audio_rate(idx), grid.video_rate(idx));
    }
    const auto samples = eval_samples();
    const DecodeConfig dc = decode_config();
    const InferenceView<float> base_view(base_ckpt.model, {0, 0}, base_ckpt.tensors);
    std::vector<EncodedSample<float>> base_encoded;
    for (const auto& s : samples) base_encoded.push_back(base_view.encode(s));
    json rows = json::array();
    std::string csv = "audio_rate,video_rate,matryoshka_wer,baseline_wer\n";
    out_ << "audio_rate video_rate matryoshka_wer baseline_wer\n";
    for (const auto& [a, v] : points) {
      const InferenceView<float> view(mtsk_ckpt.model, grid.index_of(a, v), mtsk_ckpt.tensors);
      std::vector<EncodedSample<float>> encoded;
      for (const auto& s : samples) encoded.push_back(view.encode(s));
      const double m = evaluate_view(view, encoded, dc).error.rate();
      const double b =
          evaluate_route(base_view, baseline_pool_route(base_view, a, v), base_encoded, dc).error.rate();
      rows.push_back(json{{"audio_rate", a}, {"video_rate", v},
                          {"matryoshka_wer", m}, {"baseline_wer", b}});
      std::ostringstream line;
      line << a << ',' << v << ',' << std::setprecision(17) << m << ',' << b << "\n";
      csv += line.str();
      out_ << a << ' ' << v << ' ' << m << ' ' << b << "\n";
    }
    output("compare.json", json{{"task", to_string(task)}, {"rows", rows}}.dump(2) + "\n");
    output("compare.csv", csv);
    resolved_["model"] = mtsk_ckpt.model;
    resolved_["decode"] = dc;
  }

  void write_run_json() {
    json flags{{"config", opt_.config}, {"scale", opt_.scale},     {"strategy", opt_.strategy},
               {"method", opt_.method}, {"task", opt_.task},       {"out", opt_.out},
               {"corpus", opt_.corpus}, {"base", opt_.base},       {"checkpoint", opt_.checkpoint},
               {"sample", opt_.sample}, {"split", opt_.split},     {"rates", opt_.rates},
               {"mode", opt_.mode},     {"limit", opt_.limit},     {"pruned", opt_.pruned}};
    if (opt_.seed) flags["seed"] = *opt_.seed;
    json run{{"command", command_},
             {"argv", argv_},
             {"flags", flags},
             {"config", rc_},
             {"resolved", resolved_},
             {"inputs", inputs_},
             {"outputs", outputs_},
             {"summary", summary_}};
    write_file_bytes(path("run.json"), run.dump(2) + "\n");
  }

  std::string command_;
  Options opt_;
  std::vector<std::string> argv_;
  std::ostream& out_;
  RunConfig rc_;
  std::optional<Corpus> corpus_;
  json inputs_ = json::array();
  json outputs_ = json::array();
  json resolved_ = json::object();
  json summary_ = json::object();
};

void report(std::ostream& err, const char* kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-scale token compression with LoRA adaptation"};
  app.require_subcommand(1);
  Options opt;
  const std::vector<std::pair<const char*, const char*>> commands{
      {"gen-data", "Generate the synthetic corpus"},
      {"pretrain-base", "Train the base decoder at rate 1, then freeze it"},
      {"train", "Train projectors and LoRA over the whole scale grid"},
      {"eval", "Per-scale error rate from one checkpoint"},
      {"decode", "Transcribe one sample at one scale"},
      {"cost-report", "Token and FLOPs table over a rate grid"},
      {"compare-baseline", "Matryoshka model vs on-the-fly pooling of a rate-1 model"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "Run configuration (JSON)");
    sub->add_option("--seed", opt.seed, "Seed override");
    sub->add_option("--scale", opt.scale, "Audio,video rate pair, e.g. 16,5");
    sub->add_option("--strategy", opt.strategy, "ms|ss|mss");
    sub->add_option("--method", opt.method, "avgpool|stack");
    sub->add_option("--task", opt.task, "asr|vsr|avsr");
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_option("--corpus", opt.corpus, "Corpus directory");
    sub->add_option("--base", opt.base, "Base (rate-1) checkpoint directory");
    sub->add_option("--checkpoint", opt.checkpoint, "Checkpoint directory");
    sub->add_option("--sample", opt.sample, "Sample id");
    sub->add_option("--split", opt.split, "train|test");
    sub->add_option("--rates", opt.rates, "Comma-separated rates for compare-baseline");
    sub->add_option("--wer", opt.wer, "eval.json to join into the cost report");
    sub->add_option("--mode", opt.mode, "greedy|beam");
    sub->add_option("--limit", opt.limit, "Evaluate only the first N samples");
    sub->add_flag("--pruned", opt.pruned, "Evaluate through a checkpoint pruned to --scale");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    report(err, "usage", msg);
    return 2;
  }
  std::vector<std::string> args(argv + 1, argv + argc);
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    Runner(command, opt, args, out).run();
    return 0;
  } catch (const UsageError& e) {
    report(err, "usage", e.what());
    return 2;
  } catch (const ConfigError& e) {
    report(err, "config", e.what());
    return 2;
  } catch (const CheckpointError& e) {
    report(err, "checkpoint", e.what());
    return 3;
  } catch (const CorpusError& e) {
    report(err, "corpus", e.what());
    return 3;
  } catch (const TrainingError& e) {
    report(err, "training", e.what());
    return 4;
  } catch (const std::out_of_range& e) {
    report(err, "scale", e.what());
    return 2;
  } catch (const std::exception& e) {
    report(err, "runtime", e.what());
    return 5;
  }
}

}  // namespace mtsk
