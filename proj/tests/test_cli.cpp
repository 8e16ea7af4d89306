#include "mtsk/cli.hpp"
#include "mtsk/config.hpp"
#include "mtsk/hashing.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <unistd.h>

using namespace mtsk;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "mtsk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) { return json::parse(read_file_bytes(p.string())); }

// One corpus, base and Matryoshka checkpoint shared by every test.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("mtsk_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    RunConfig rc;
    rc.corpus = mtsk::testing::tiny_corpus_spec(16, 6);
    rc.model = mtsk::testing::tiny_model_config(LoraStrategy::MSS);
    rc.pretrain.epochs = 1;
    rc.train.epochs = 1;
    rc.train.batch_size = 8;
    rc.train.eval_samples = 2;
    rc.decode.mode = DecodeMode::Greedy;
    rc.decode.max_length = 6;
    write_file_bytes(config(), json(rc).dump(2));
    for (const auto& args : std::vector<std::vector<std::string>>{
             {"gen-data", "--config", config(), "--out", dir("corpus")},
             {"pretrain-base", "--config", config(), "--corpus", dir("corpus"), "--out", dir("base")},
             {"train", "--config", config(), "--corpus", dir("corpus"), "--base", dir("base"), "--out",
              dir("mtsk")}}) {
      const auto r = run(args);
      ASSERT_EQ(r.code, 0) << args.front() << ": " << r.err;
    }
  }

  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string config() { return (root_ / "config.json").string(); }
  static std::string dir(const std::string& name) { return (root_ / name).string(); }

  static fs::path root_;
};

fs::path Cli::root_;

void expect_error_line(const Outcome& r, int code, const std::string& kind) {
  EXPECT_EQ(r.code, code) << r.err;
  ASSERT_FALSE(r.err.empty());
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
  EXPECT_EQ(r.err.back(), '\n');
  const auto j = json::parse(r.err);
  EXPECT_EQ(j.at("error"), kind) << r.err;
  EXPECT_TRUE(j.at("message").is_string());
}

}  // namespace

TEST_F(Cli, EveryRunWritesRunJson) {
  for (const char* d : {"corpus", "base", "mtsk"}) {
    const auto run_json = read_json(fs::path(dir(d)) / "run.json");
    EXPECT_TRUE(run_json.contains("command"));
    EXPECT_TRUE(run_json.contains("config"));
    EXPECT_TRUE(run_json.at("inputs").is_array());
    EXPECT_FALSE(run_json.at("outputs").empty());
  }
  const auto train_run = read_json(fs::path(dir("mtsk")) / "run.json");
  EXPECT_EQ(train_run.at("command"), "train");
  EXPECT_EQ(train_run.at("summary").at("frozen_checksum").get<std::string>().size(), 64u);
  EXPECT_TRUE(fs::exists(fs::path(dir("mtsk")) / "metrics.jsonl"));
}

TEST_F(Cli, EvalIsReproducible) {
  const std::vector<std::string> common{"eval", "--checkpoint", dir("mtsk"), "--corpus", dir("corpus")};
  auto a = common, b = common;
  a.insert(a.end(), {"--out", dir("eval_a")});
  b.insert(b.end(), {"--out", dir("eval_b")});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  for (const char* f : {"eval.json", "eval.csv", "decodes.jsonl"}) {
    EXPECT_EQ(read_file_bytes((fs::path(dir("eval_a")) / f).string()),
              read_file_bytes((fs::path(dir("eval_b")) / f).string()))
        << f;
  }
  EXPECT_EQ(read_json(fs::path(dir("eval_a")) / "eval.json").at("scales").size(), 4u);
}

TEST_F(Cli, PrunedEvalMatchesFullEval) {
  auto full = run({"eval", "--checkpoint", dir("mtsk"), "--corpus", dir("corpus"), "--scale", "4,2",
                   "--out", dir("eval_full")});
  ASSERT_EQ(full.code, 0) << full.err;
  auto pruned = run({"eval", "--checkpoint", dir("mtsk"), "--corpus", dir("corpus"), "--scale", "4,2",
                     "--pruned", "--out", dir("eval_pruned")});
  ASSERT_EQ(pruned.code, 0) << pruned.err;
  EXPECT_EQ(read_file_bytes((fs::path(dir("eval_full")) / "decodes.jsonl").string()),
            read_file_bytes((fs::path(dir("eval_pruned")) / "decodes.jsonl").string()));
  EXPECT_EQ(read_json(fs::path(dir("eval_full")) / "eval.json").at("scales"),
            read_json(fs::path(dir("eval_pruned")) / "eval.json").at("scales"));
}

TEST_F(Cli, DecodesOneSampleAtTwoScales) {
  for (const char* scale : {"2,1", "4,2"}) {
    const auto r = run({"decode", "--checkpoint", dir("mtsk"), "--corpus", dir("corpus"), "--sample",
                        "test-000001", "--scale", scale, "--out", dir("decode")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j.at("sample_id"), "test-000001");
    const auto rates = j.at("scale").get<std::vector<int>>();
    EXPECT_EQ(std::to_string(rates.at(0)) + "," + std::to_string(rates.at(1)), scale);
  }
}

TEST_F(Cli, CostReportHasReferenceRow) {
  const auto r = run({"cost-report", "--out", dir("cost")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_file_bytes((fs::path(dir("cost")) / "cost.csv").string());
  EXPECT_NE(rows.find("\n16,5,88,"), std::string::npos) << rows;
  EXPECT_NE(rows.find("\n1,1,757,"), std::string::npos) << rows;
  EXPECT_TRUE(fs::exists(fs::path(dir("cost")) / "cost_plot.json"));
}

TEST_F(Cli, CostReportJoinsEvalWer) {
  ASSERT_EQ(run({"eval", "--checkpoint", dir("mtsk"), "--corpus", dir("corpus"), "--out",
                 dir("eval_for_cost")})
                .code,
            0);
  RunConfig rc;
  rc.cost.audio_rates = {2, 4};
  rc.cost.video_rates = {1, 2};
  const auto cfg = (root_ / "cost_config.json").string();
  write_file_bytes(cfg, json{{"cost", rc.cost}}.dump());
  const auto r = run({"cost-report", "--config", cfg, "--wer",
                      (fs::path(dir("eval_for_cost")) / "eval.json").string(), "--out",
                      dir("cost_wer")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto plot = read_json(fs::path(dir("cost_wer")) / "cost_plot.json");
  for (const auto& p : plot.at("points")) EXPECT_TRUE(p.at("wer").is_number()) << p.dump();
}

TEST_F(Cli, CompareBaselineRuns) {
  const auto r = run({"compare-baseline", "--checkpoint", dir("mtsk"), "--base", dir("base"),
                      "--corpus", dir("corpus"), "--out", dir("compare")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json(fs::path(dir("compare")) / "compare.json");
  EXPECT_EQ(j.at("rows").size(), 4u);
}

TEST_F(Cli, UsageErrors) {
  expect_error_line(run({"no-such-command"}), 2, "usage");
  expect_error_line(run({"eval", "--bogus"}), 2, "usage");
  expect_error_line(run({"decode", "--checkpoint", dir("mtsk"), "--out", dir("err")}), 2, "usage");
  expect_error_line(run({"eval", "--checkpoint", dir("mtsk"), "--corpus", dir("corpus"), "--scale",
                         "x,y", "--out", dir("err")}),
                    2, "usage");
}

TEST_F(Cli, ConfigErrors) {
  const auto bad = (root_ / "bad.json").string();
  write_file_bytes(bad, R"({"train": {"epochz": 1}})");
  expect_error_line(run({"gen-data", "--config", bad, "--out", dir("err")}), 2, "config");
  expect_error_line(run({"eval", "--checkpoint", dir("mtsk"), "--corpus", dir("corpus"), "--scale",
                         "3,3", "--out", dir("err")}),
                    2, "config");
  expect_error_line(run({"gen-data", "--config", (root_ / "absent.json").string(), "--out", dir("err")}),
                    2, "config");
}

TEST_F(Cli, DataErrors) {
  expect_error_line(run({"eval", "--checkpoint", dir("nowhere"), "--corpus", dir("corpus"), "--out",
                         dir("err")}),
                    3, "checkpoint");
  expect_error_line(run({"eval", "--checkpoint", dir("mtsk"), "--corpus", dir("nowhere"), "--out",
                         dir("err")}),
                    3, "corpus");
  expect_error_line(run({"eval", "--checkpoint", dir("mtsk"), "--corpus", dir("corpus"), "--strategy",
                         "ss", "--out", dir("err")}),
                    3, "checkpoint");
  expect_error_line(run({"train", "--config", config(), "--corpus", dir("corpus"), "--base",
                         dir("mtsk"), "--out", dir("err")}),
                    3, "checkpoint");
  // The failed run still leaves a run.json describing the error.
  EXPECT_TRUE(read_json(fs::path(dir("err")) / "run.json").at("summary").contains("error"));
}

TEST_F(Cli, TrainingErrors) {
  RunConfig rc = RunConfig{};
  rc.corpus = mtsk::testing::tiny_corpus_spec(0, 2);
  rc.model = mtsk::testing::tiny_model_config();
  const auto cfg = (root_ / "empty.json").string();
  write_file_bytes(cfg, json(rc).dump());
  ASSERT_EQ(run({"gen-data", "--config", cfg, "--out", dir("empty_corpus")}).code, 0);
  expect_error_line(run({"pretrain-base", "--config", cfg, "--corpus", dir("empty_corpus"), "--out",
                         dir("err_train")}),
                    4, "training");
}
