// Acceptance run: one PASS/FAIL line per criterion on stdout, progress and
// measurements on stderr. Exit status is nonzero when any criterion fails.
// Usage: acceptance [criterion numbers...]

#include "compression_laws.hpp"
#include "mtsk/checkpoint.hpp"
#include "mtsk/cli.hpp"
#include "mtsk/config.hpp"
#include "mtsk/cost.hpp"
#include "mtsk/evaluate.hpp"
#include "mtsk/hashing.hpp"
#include "mtsk/inference.hpp"
#include "mtsk/train.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include <unistd.h>

using namespace mtsk;
using mtsk::testing::tiny_corpus_spec;
using mtsk::testing::tiny_model_config;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

const std::vector<LoraStrategy> kStrategies{LoraStrategy::MS, LoraStrategy::SS, LoraStrategy::MSS};

Matrix<double> grad_or_zero(const TensorD& t) {
  return t.has_grad() ? Matrix<double>(t.grad()) : Matrix<double>::Zero(t.rows(), t.cols());
}

// 1 --------------------------------------------------------------------------

Verdict cost_reproduction() {
  Verdict v;
  const Stopwatch clock;
  const CostSpec spec;
  const std::vector<std::tuple<int, int, long>> expected{
      {1, 1, 757}, {4, 2, 257}, {4, 5, 182}, {16, 2, 163}, {16, 5, 88}};
  for (const auto& [a, r, n] : expected) {
    const long got = token_count(spec, a, r);
    v.require(got == n, scale_key(a, r) + " gave " + std::to_string(got));
  }
  const double ratio = reduction_ratio(spec, 16, 5);
  v.require(ratio >= 8.55 && ratio <= 8.65, "ratio " + fmt("%.4f", ratio));
  const double t = clock.seconds();
  v.require(t < 1.0, "took " + fmt("%.3f s", t));
  std::cerr << "  ratio(16,5) = " << fmt("%.4f", ratio) << ", " << fmt("%.4f s", t) << "\n";
  return v;
}

// 2 --------------------------------------------------------------------------

Verdict gradient_fidelity() {
  Verdict v;
  const Stopwatch clock;
  const Corpus corpus = generate_corpus(tiny_corpus_spec(2, 1));
  // Adapt phase covers projectors and LoRA under each strategy; one pretrain
  // phase run covers the decoder weights with every adapter in the path.
  std::vector<std::pair<LoraStrategy, Phase>> runs;
  for (auto s : kStrategies) runs.emplace_back(s, Phase::Adapt);
  runs.emplace_back(LoraStrategy::MSS, Phase::Pretrain);
  for (const auto& [s, phase] : runs) {
    MtskModel<double> model(tiny_model_config(s));
    mtsk::testing::randomize_lora(model, 51);
    model.set_phase(phase);
    const auto x = model.encode(corpus.train[0]);
    auto params = model.trainable_parameters();
    std::string worst_name;
    const double worst = mtsk::testing::gradient_check(
        [&] { return matryoshka_loss(model, x); }, params, &worst_name);
    std::cerr << "  " << to_string(s) << "/" << to_string(phase) << ": " << params.size()
              << " tensors, worst rel err " << fmt("%.2e", worst) << " (" << worst_name << ")\n";
    v.require(worst < 1e-4, to_string(s) + "/" + to_string(phase) + " " + worst_name + " " +
                                fmt("%.2e", worst));
  }
  const double t = clock.seconds();
  v.require(t < 120, "took " + fmt("%.1f s", t));
  std::cerr << "  " << fmt("%.1f s", t) << "\n";
  return v;
}

// 3 --------------------------------------------------------------------------

Verdict routing_equivalence() {
  Verdict v;
  const Stopwatch clock;
  const Corpus corpus = generate_corpus(tiny_corpus_spec(20, 1));
  for (auto s : {LoraStrategy::SS, LoraStrategy::MSS}) {
    MtskModel<double> model(tiny_model_config(s));
    mtsk::testing::randomize_lora(model, 52);
    Rng rng(53);
    for (const auto idx : model.grid().indices()) {
      const auto view = select_scale(model, idx);
      double worst = 0;
      int inputs = 0;
      for (const auto& sample : corpus.train) {
        std::vector<int> prefix{kBosId};
        const int len = 1 + int(rng.below(5));
        for (int k = 0; k < len; ++k) prefix.push_back(kNumSpecials + int(rng.below(32)));
        const auto full = model.logits_at_scale(model.encode(sample), idx, prefix).value();
        const auto pruned = view.logits(view.encode(sample), prefix).value();
        worst = std::max(worst, (full - pruned).cwiseAbs().maxCoeff());
        ++inputs;
      }
      const auto key = to_string(s) + " (" +
                       scale_key(model.grid().audio_rate(idx), model.grid().video_rate(idx)) + ")";
      std::cerr << "  " << key << ": " << inputs << " inputs, max |diff| " << fmt("%.2e", worst)
                << "\n";
      v.require(inputs >= 20 && worst < 1e-6, key + " " + fmt("%.2e", worst));
    }
  }
  v.require(clock.seconds() < 60, "took " + fmt("%.1f s", clock.seconds()));
  return v;
}

// 4 --------------------------------------------------------------------------

Verdict objective_linearity() {
  Verdict v;
  const Corpus corpus = generate_corpus(tiny_corpus_spec(4, 1));
  double worst_value = 0, worst_grad = 0;
  for (auto s : kStrategies) {
    MtskModel<double> model(tiny_model_config(s));
    mtsk::testing::randomize_lora(model, 54);
    const auto scales = model.grid().indices();
    for (const auto& sample : corpus.train) {
      const auto x = model.encode(sample);
      double mean = 0;
      for (const auto idx : scales) mean += model.loss_at_scale(x, idx).item();
      mean /= double(scales.size());
      auto params = model.trainable_parameters();
      model.zero_grad();
      const auto total = matryoshka_loss(model, x);
      worst_value = std::max(worst_value, std::abs(total.item() - mean));
      total.backward();
      std::map<std::string, Matrix<double>> joint, separate;
      for (auto& [n, t] : params) {
        joint[n] = grad_or_zero(t);
        separate[n] = Matrix<double>::Zero(t.rows(), t.cols());
      }
      for (const auto idx : scales) {
        model.zero_grad();
        model.loss_at_scale(x, idx).backward();
        for (auto& [n, t] : params) separate[n] += grad_or_zero(t) / double(scales.size());
      }
      for (auto& [n, t] : params) {
        const double denom = joint[n].norm() + separate[n].norm();
        if (denom > 0) worst_grad = std::max(worst_grad, (joint[n] - separate[n]).norm() / denom);
      }
    }
  }
  std::cerr << "  max |objective - mean| " << fmt("%.2e", worst_value) << ", worst gradient rel err "
            << fmt("%.2e", worst_grad) << "\n";
  v.require(worst_value < 1e-6, "objective " + fmt("%.2e", worst_value));
  v.require(worst_grad < 1e-6, "gradient " + fmt("%.2e", worst_grad));
  return v;
}

// 5 --------------------------------------------------------------------------

bool all_zero(const TensorD& t) { return !t.has_grad() || t.grad().isZero(0.0); }

Verdict gradient_isolation() {
  Verdict v;
  const Corpus corpus = generate_corpus(tiny_corpus_spec(1, 1));
  MtskModel<double> model(tiny_model_config(LoraStrategy::SS));
  mtsk::testing::randomize_lora(model, 55);
  const auto x = model.encode(corpus.train[0]);
  const auto& grid = model.grid();
  auto params = model.trainable_parameters();
  int checks = 0;
  for (const auto scale : grid.indices()) {
    model.zero_grad();
    model.loss_at_scale(x, scale).backward();
    for (const auto owner : grid.indices()) {
      const auto prefix =
          "lora.ss." + std::to_string(owner.audio + 1) + "." + std::to_string(owner.video + 1) + ".";
      bool any = false;
      for (auto& [n, t] : params) {
        if (!n.starts_with(prefix)) continue;
        if (owner == scale) {
          any = any || !all_zero(t);
        } else {
          ++checks;
          v.require(all_zero(t), n + " has gradient from scale " +
                                     scale_key(grid.audio_rate(scale), grid.video_rate(scale)));
        }
      }
      if (owner == scale) v.require(any, prefix + " got no gradient from its own scale");
    }
    for (auto& [n, t] : params) {
      for (int i = 0; i < int(grid.audio_rates.size()); ++i) {
        const auto p = "proj.audio." + std::to_string(grid.audio_rates[std::size_t(i)]) + ".";
        if (n.starts_with(p) && i != scale.audio) {
          ++checks;
          v.require(all_zero(t), n + " has gradient from another audio index");
        }
      }
      for (int j = 0; j < int(grid.video_rates.size()); ++j) {
        const auto p = "proj.video." + std::to_string(grid.video_rates[std::size_t(j)]) + ".";
        if (n.starts_with(p) && j != scale.video) {
          ++checks;
          v.require(all_zero(t), n + " has gradient from another video index");
        }
      }
    }
  }
  std::cerr << "  " << checks << " zero-gradient checks\n";
  return v;
}

// 6 --------------------------------------------------------------------------

Verdict freeze_contract() {
  Verdict v;
  const Corpus corpus = generate_corpus(tiny_corpus_spec(24, 4));
  for (auto s : kStrategies) {
    const auto cfg = tiny_model_config(s);
    MtskModel<float> model(cfg);
    model.set_phase(Phase::Adapt);
    const std::vector<std::string> frozen{"encoder.", "decoder."};
    const auto before = parameter_checksum(model.parameters(), frozen);
    const auto adapted_before = parameter_checksum(model.parameters(), {"proj.", "lora."});
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.learning_rate = 3e-3;
    tc.eval_samples = 4;
    const auto result =
        train(model, model.encode_all(corpus.train), model.encode_all(corpus.test), tc);
    const auto after = parameter_checksum(model.parameters(), frozen);
    const long census = long(model.trainable_parameter_count());
    const long closed = long(projector_parameter_count(cfg) + lora_parameter_count(cfg));
    bool only_adapters = true;
    for (const auto& [n, t] : model.trainable_parameters()) {
      only_adapters = only_adapters && (n.starts_with("proj.") || n.starts_with("lora."));
    }
    std::cerr << "  " << to_string(s) << ": " << result.steps << " steps, frozen sha "
              << after.substr(0, 12) << (after == before ? " unchanged" : " CHANGED")
              << ", census " << census << " vs closed form " << closed << "\n";
    v.require(before == after, to_string(s) + " frozen weights changed");
    v.require(adapted_before != parameter_checksum(model.parameters(), {"proj.", "lora."}),
              to_string(s) + " adapters did not move");
    v.require(census == closed && only_adapters, to_string(s) + " census " + std::to_string(census) +
                                                     " vs " + std::to_string(closed));
  }
  return v;
}

// 7 --------------------------------------------------------------------------

Verdict compression_laws() {
  Verdict v;
  Rng rng(57);
  const auto failures = mtsk::testing::compression_law_failures(rng, 1000);
  for (const auto& [law, count] : failures) {
    std::cerr << "  " << law << ": " << count << " failures / 1000\n";
    v.require(count == 0, law + " failed " + std::to_string(count) + " times");
  }
  return v;
}

// 8 --------------------------------------------------------------------------

struct EndToEnd {
  RunConfig rc;
  Corpus corpus;
  DecodeConfig decode;
};

MtskModel<float> pretrain_base(const EndToEnd& e, Task task) {
  ModelConfig m = e.rc.model;
  m.task = task;
  m.grid.audio_rates = {1};
  m.grid.video_rates = {1};
  MtskModel<float> base(m);
  base.set_phase(Phase::Pretrain);
  const Stopwatch clock;
  const auto r = train(base, base.encode_all(e.corpus.train), base.encode_all(e.corpus.test),
                       e.rc.pretrain);
  std::cerr << "  pretrain " << to_string(task) << ": loss " << fmt("%.3f", r.initial_train_loss)
            << " -> " << fmt("%.3f", r.log.back().train_loss) << " (" << fmt("%.0f s", clock.seconds())
            << ")\n";
  base.set_phase(Phase::Inference);
  return base;
}

MtskModel<float> adapt(const EndToEnd& e, const MtskModel<float>& base, Task task,
                       std::vector<int> audio_rates, std::vector<int> video_rates) {
  ModelConfig m = e.rc.model;
  m.task = task;
  m.grid.audio_rates = std::move(audio_rates);
  m.grid.video_rates = std::move(video_rates);
  m.lora.strategy = LoraStrategy::MS;
  MtskModel<float> model(m);
  model.load_base_from(base);
  model.set_phase(Phase::Adapt);
  const Stopwatch clock;
  const auto r = train(model, model.encode_all(e.corpus.train), model.encode_all(e.corpus.test),
                       e.rc.train);
  std::cerr << "  adapt " << to_string(task) << " on " << model.grid().size() << " scale(s): loss "
            << fmt("%.3f", r.initial_train_loss) << " -> " << fmt("%.3f", r.log.back().train_loss)
            << " (" << fmt("%.0f s", clock.seconds()) << ")\n";
  model.set_phase(Phase::Inference);
  return model;
}

double error_at(const EndToEnd& e, const MtskModel<float>& model, int a, int v) {
  const auto view = select_scale(model, model.grid().index_of(a, v));
  std::vector<EncodedSample<float>> xs;
  for (const auto& s : e.corpus.test) xs.push_back(view.encode(s));
  return evaluate_view(view, xs, e.decode).error.rate();
}

double pooled_error_at(const EndToEnd& e, const MtskModel<float>& base, int a, int v) {
  const auto view = select_scale(base, {0, 0});
  std::vector<EncodedSample<float>> xs;
  for (const auto& s : e.corpus.test) xs.push_back(view.encode(s));
  return evaluate_route(view, baseline_pool_route(view, a, v), xs, e.decode).error.rate();
}

std::string pct(double x) { return fmt("%.1f%%", 100 * x); }

Verdict end_to_end() {
  Verdict v;
  const Stopwatch clock;
  EndToEnd e;
  e.rc = load_run_config(std::string(MTSK_CONFIG_DIR) + "/small.json");
  e.decode = e.rc.decode;
  e.corpus = generate_corpus(e.rc.corpus);
  std::cerr << "  corpus: " << e.corpus.train.size() << " train, " << e.corpus.test.size()
            << " test; decode " << to_string(e.decode.mode) << "\n";

  // (a) and (c): AVSR grid, one Matryoshka model against fixed-rate models.
  const std::vector<int> audio{4, 16}, video{2, 5};
  const auto avsr_base = pretrain_base(e, Task::Avsr);
  const auto mtsk = adapt(e, avsr_base, Task::Avsr, audio, video);
  std::map<std::pair<int, int>, double> err;
  for (int a : audio) {
    for (int r : video) {
      err[{a, r}] = error_at(e, mtsk, a, r);
      const auto fixed = adapt(e, avsr_base, Task::Avsr, {a}, {r});
      const double f = error_at(e, fixed, a, r);
      const double band = std::max(0.2 * f, 0.02);
      std::cerr << "  (" << scale_key(a, r) << ") matryoshka " << pct(err[{a, r}]) << ", fixed-rate "
                << pct(f) << ", allowed gap " << pct(band) << "\n";
      v.require(err[{a, r}] - f <= band, "(c) at (" + scale_key(a, r) + ") " + pct(err[{a, r}]) +
                                             " vs fixed " + pct(f));
    }
  }
  for (const auto& [p, x] : err) {
    for (const auto& [q, y] : err) {
      const bool coarser = q.first >= p.first && q.second >= p.second && q != p;
      if (coarser) {
        v.require(y >= x, "(a) (" + scale_key(q.first, q.second) + ") " + pct(y) + " < (" +
                              scale_key(p.first, p.second) + ") " + pct(x));
      }
    }
  }

  // (b): ASR rates against training-free pooling of a rate-1 ASR model.
  const std::vector<int> rates{2, 4, 8};
  const auto asr_base = pretrain_base(e, Task::Asr);
  const auto asr = adapt(e, asr_base, Task::Asr, rates, {1});
  for (int r : rates) {
    const double m = error_at(e, asr, r, 1);
    const double b = pooled_error_at(e, asr_base, r, 1);
    std::cerr << "  ASR r=" << r << ": matryoshka " << pct(m) << ", pooling " << pct(b) << "\n";
    v.require(m < b, "(b) r=" + std::to_string(r) + " " + pct(m) + " vs pooling " + pct(b));
  }
  const double t = clock.seconds();
  std::cerr << "  " << fmt("%.0f s", t) << "\n";
  v.require(t < 1800, "took " + fmt("%.0f s", t));
  return v;
}

// 9 --------------------------------------------------------------------------

Verdict decoding() {
  Verdict v;
  const Corpus corpus = generate_corpus(tiny_corpus_spec(0, 100));
  MtskModel<double> model(tiny_model_config(LoraStrategy::MSS));
  mtsk::testing::randomize_lora(model, 59, 0.5);
  const auto view = select_scale(model, {1, 1});
  int same = 0, beam_not_worse = 0, temperature_stable = 0;
  double worst_deficit = 0;
  for (const auto& sample : corpus.test) {
    const auto x = view.encode(sample);
    DecodeConfig cfg;
    cfg.max_length = 8;
    cfg.mode = DecodeMode::Greedy;
    const auto greedy = view.transcribe(x, cfg);
    cfg.mode = DecodeMode::Beam;
    cfg.beam_width = 1;
    const auto narrow = view.transcribe(x, cfg);
    same += narrow.tokens == greedy.tokens && std::abs(narrow.score - greedy.score) < 1e-12;
    cfg.beam_width = 5;
    const auto wide = view.transcribe(x, cfg);
    beam_not_worse += wide.score >= greedy.score - 1e-12;
    worst_deficit = std::max(worst_deficit, greedy.score - wide.score);
    DecodeConfig hot = cfg;
    hot.mode = DecodeMode::Greedy;
    hot.temperature = 2.5;
    temperature_stable += view.transcribe(x, hot).tokens == greedy.tokens;
  }
  std::cerr << "  width 1 == greedy on " << same << "/100; beam >= greedy on " << beam_not_worse
            << "/100 (worst deficit " << fmt("%.2e", worst_deficit) << "); greedy tokens unchanged "
            << "at T=2.5 on " << temperature_stable << "/100\n";
  v.require(same == 100, "beam(1) differs from greedy on " + std::to_string(100 - same));
  v.require(beam_not_worse == 100,
            "beam below greedy on " + std::to_string(100 - beam_not_worse) + " samples");
  v.require(temperature_stable == 100, "greedy depends on temperature");

  // Two-step toy over three symbols: the exhaustive best must be returned.
  const std::vector<double> first{std::log(0.5), std::log(0.4), std::log(0.1)};
  const std::vector<std::vector<double>> second{
      {std::log(1.0 / 3), std::log(1.0 / 3), std::log(1.0 / 3)},
      {std::log(0.05), std::log(0.05), std::log(0.9)},
      {std::log(0.2), std::log(0.2), std::log(0.6)}};
  const NextTokenScorer toy = [&](const std::vector<int>& prefix) {
    return prefix.size() == 1 ? first : second[std::size_t(prefix[1])];
  };
  std::vector<int> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const double s = (log_softmax(first, 1.0)[std::size_t(a)] +
                        log_softmax(second[std::size_t(a)], 1.0)[std::size_t(b)]) /
                       2;
      if (s > best_score) {
        best_score = s;
        best = {a, b};
      }
    }
  }
  DecodeConfig toy_cfg;
  toy_cfg.mode = DecodeMode::Beam;
  toy_cfg.max_length = 2;
  toy_cfg.eos_id = -1;
  toy_cfg.bos_id = 0;
  toy_cfg.temperature = 1.0;
  for (int width : {2, 3}) {
    toy_cfg.beam_width = width;
    const auto h = beam_decode(toy, toy_cfg);
    v.require(h.tokens == best && std::abs(h.score - best_score) < 1e-12,
              "toy beam width " + std::to_string(width) + " missed the enumerated best");
  }
  for (double t : {0.2, 0.6, 1.0, 4.0}) {
    toy_cfg.mode = DecodeMode::Greedy;
    toy_cfg.temperature = t;
    v.require(greedy_decode(toy, toy_cfg).tokens == std::vector<int>({0, 0}),
              "toy greedy changed at T=" + fmt("%.1f", t));
  }
  return v;
}

// 10 -------------------------------------------------------------------------

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mtsk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(int(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << "  " << args[1] << " failed: " << err.str();
  return code;
}

std::string bytes_of(const fs::path& dir, const std::vector<std::string>& files) {
  std::string all;
  for (const auto& f : files) all += read_file_bytes((dir / f).string());
  return all;
}

Verdict persistence() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / ("mtsk_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);

  // Checkpoint: every tensor and the configuration survive a round trip.
  MtskModel<float> model(tiny_model_config(LoraStrategy::MSS));
  mtsk::testing::randomize_lora(model, 60);
  save_checkpoint(make_checkpoint(model), (root / "ckpt").string());
  const auto back = load_checkpoint((root / "ckpt").string());
  bool tensors_equal = back.tensors.size() == model.parameters().size();
  for (const auto& [n, t] : model.parameters()) {
    tensors_equal = tensors_equal && back.tensors.count(n) && back.tensors.at(n).value() == t.value();
  }
  v.require(tensors_equal && back.model == model.config(), "checkpoint round trip differs");

  // Corpus: a saved and reloaded corpus saves to the same bytes.
  const std::vector<std::string> corpus_files{"manifest.json", "embeddings.bin", "train.bin",
                                              "test.bin"};
  const Corpus corpus = generate_corpus(tiny_corpus_spec(12, 4));
  save_corpus(corpus, (root / "corpus_a").string());
  save_corpus(load_corpus((root / "corpus_a").string()), (root / "corpus_b").string());
  v.require(bytes_of(root / "corpus_a", corpus_files) == bytes_of(root / "corpus_b", corpus_files),
            "corpus round trip differs");

  // Full pipeline twice under the same seed: identical checkpoints and eval outputs.
  RunConfig rc;
  rc.corpus = tiny_corpus_spec(16, 6);
  rc.model = tiny_model_config(LoraStrategy::MSS);
  rc.pretrain.epochs = 1;
  rc.train.epochs = 2;
  rc.train.batch_size = 8;
  rc.decode.max_length = 6;
  rc.decode.beam_width = 3;
  const auto config = (root / "config.json").string();
  write_file_bytes(config, nlohmann::json(rc).dump(2));
  std::vector<std::string> eval_outputs;
  std::vector<std::string> checkpoints;
  for (const char* run : {"run_a", "run_b"}) {
    const auto d = root / run;
    bool ok = cli({"gen-data", "--config", config, "--seed", "77", "--out", (d / "corpus").string()}) == 0;
    ok = ok && cli({"pretrain-base", "--config", config, "--seed", "3", "--corpus",
                    (d / "corpus").string(), "--out", (d / "base").string()}) == 0;
    ok = ok && cli({"train", "--config", config, "--seed", "3", "--corpus", (d / "corpus").string(),
                    "--base", (d / "base").string(), "--out", (d / "mtsk").string()}) == 0;
    ok = ok && cli({"eval", "--config", config, "--checkpoint", (d / "mtsk").string(), "--corpus",
                    (d / "corpus").string(), "--out", (d / "eval").string()}) == 0;
    v.require(ok, std::string(run) + " pipeline failed");
    if (!ok) return v;
    checkpoints.push_back(bytes_of(d / "mtsk", {"manifest.json", "tensors.bin"}));
    eval_outputs.push_back(bytes_of(d / "eval", {"eval.json", "eval.csv", "decodes.jsonl"}));
  }
  v.require(checkpoints[0] == checkpoints[1], "trained checkpoints differ between runs");
  v.require(eval_outputs[0] == eval_outputs[1], "eval outputs differ between runs");
  std::cerr << "  checkpoint " << (tensors_equal ? "identical" : "DIFFERS") << ", eval sha "
            << sha256_hex(eval_outputs[0]).substr(0, 12) << " / "
            << sha256_hex(eval_outputs[1]).substr(0, 12) << "\n";
  fs::remove_all(root);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, Verdict (*)()>> criteria{
      {"cost reproduction", cost_reproduction},
      {"gradient fidelity", gradient_fidelity},
      {"routing equivalence", routing_equivalence},
      {"objective linearity", objective_linearity},
      {"gradient isolation", gradient_isolation},
      {"freeze contract", freeze_contract},
      {"compression laws", compression_laws},
      {"end-to-end trend", end_to_end},
      {"decoding", decoding},
      {"persistence", persistence}};
  std::set<int> only;
  for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int number = int(k) + 1;
    if (!only.empty() && !only.count(number)) continue;
    const auto& [name, fn] = criteria[k];
    std::cerr << "[" << number << "] " << name << "\n";
    Verdict verdict;
    try {
      verdict = fn();
    } catch (const std::exception& e) {
      verdict.pass = false;
      verdict.detail = std::string("exception: ") + e.what();
    }
    failed += !verdict.pass;
    std::cout << "criterion " << number << " " << name << ": " << (verdict.pass ? "PASS" : "FAIL");
    if (!verdict.pass) std::cout << " (" << verdict.detail << ")";
    std::cout << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
