#include "mtsk/cost.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

using namespace mtsk;

namespace {

long tokens_oracle(long na, long nv, long p, int a, int v) {
  long audio = 0, video = 0;
  while ((audio + 1) * a <= na) ++audio;
  while ((video + 1) * v <= nv) ++video;
  return audio + video + p;
}

}  // namespace

TEST(TokenCount, ReferencePoints) {
  const auto start = std::chrono::steady_clock::now();
  const CostSpec spec;
  EXPECT_EQ(token_count(spec, 1, 1), 757);
  EXPECT_EQ(token_count(spec, 4, 2), 257);
  EXPECT_EQ(token_count(spec, 4, 5), 182);
  EXPECT_EQ(token_count(spec, 16, 2), 163);
  EXPECT_EQ(token_count(spec, 16, 5), 88);
  const double r = reduction_ratio(spec, 16, 5);
  EXPECT_GE(r, 8.55);
  EXPECT_LE(r, 8.65);
  EXPECT_NEAR(r, 757.0 / 88.0, 1e-15);
  EXPECT_EQ(reduction_ratio(spec, 1, 1), 1.0);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 1.0);
}

TEST(TokenCount, MatchesCountingOracle) {
  CostSpec spec;
  for (long na : {1L, 37L, 500L, 1001L}) {
    for (long nv : {3L, 250L, 499L}) {
      spec.audio_tokens = na;
      spec.video_tokens = nv;
      for (int a = 1; a <= 20; ++a) {
        for (int v = 1; v <= 7; ++v) {
          EXPECT_EQ(token_count(spec, a, v), tokens_oracle(na, nv, 7, a, v));
        }
      }
    }
  }
  EXPECT_THROW(token_count(spec, 0, 1), ConfigError);
}

TEST(Flops, DefaultConstant) {
  const CostSpec spec;
  EXPECT_NEAR(flops(spec, 1, 1) / 1e12, 11.40, 0.005);
  EXPECT_DOUBLE_EQ(flops(spec, 1, 1), 757 * 1.506e10);
}

TEST(Flops, RatioIndependentOfConstant) {
  CostSpec a, b;
  b.flops_per_token = 3.7;
  for (int ar : a.audio_rates) {
    for (int vr : a.video_rates) {
      EXPECT_EQ(reduction_ratio(a, ar, vr), reduction_ratio(b, ar, vr));
      EXPECT_NEAR(flops(a, ar, vr) * reduction_ratio(a, ar, vr), flops(a, 1, 1),
                  1e-12 * flops(a, 1, 1));
    }
  }
}

TEST(CostReport, NineMonotoneRows) {
  const auto report = cost_report(CostSpec{});
  ASSERT_EQ(report.rows.size(), 9u);
  auto at = [&](std::size_t i, std::size_t j) { return report.rows[i * 3 + j]; };
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i + 1 < 3) EXPECT_GE(at(i, j).tokens, at(i + 1, j).tokens);
      if (j + 1 < 3) EXPECT_GE(at(i, j).tokens, at(i, j + 1).tokens);
      EXPECT_EQ(at(i, j).flops, double(at(i, j).tokens) * 1.506e10);
    }
  }
  EXPECT_EQ(at(0, 0).tokens, 757);
  EXPECT_EQ(at(2, 2).tokens, 88);
}

TEST(CostReport, CsvRoundTripsExactly) {
  auto report = cost_report(CostSpec{});
  EXPECT_EQ(parse_cost_csv(to_csv(report)), report.rows);
  attach_wer(report, {{"4,2", 0.123456789012345678}, {"16,5", 1.0 / 3}});
  const auto rows = parse_cost_csv(to_csv(report));
  EXPECT_EQ(rows, report.rows);
  int with_wer = 0;
  for (const auto& r : rows) with_wer += r.wer.has_value();
  EXPECT_EQ(with_wer, 2);
  EXPECT_EQ(to_csv(report).substr(0, 41), "audio_rate,video_rate,tokens,flops,ratio,");
}

TEST(CostReport, CsvErrors) {
  EXPECT_THROW(parse_cost_csv(""), ConfigError);
  EXPECT_THROW(parse_cost_csv("a,b\n"), ConfigError);
  EXPECT_THROW(parse_cost_csv("audio_rate,video_rate,tokens,flops,ratio\n1,1,x,1,1\n"),
               ConfigError);
  EXPECT_THROW(parse_cost_csv("audio_rate,video_rate,tokens,flops,ratio\n1,1\n"), ConfigError);
}

TEST(CostReport, PlotJson) {
  auto report = cost_report(CostSpec{});
  attach_wer(report, {{"16,5", 0.5}});
  const auto j = to_plot_json(report);
  ASSERT_EQ(j["points"].size(), 9u);
  const auto& last = j["points"][8];
  EXPECT_EQ(last["label"], "(16,5)");
  EXPECT_EQ(last["tokens"], 88);
  EXPECT_DOUBLE_EQ(last["tflops"].get<double>(), 88 * 1.506e10 / 1e12);
  EXPECT_EQ(last["wer"], 0.5);
  EXPECT_TRUE(j["points"][0]["wer"].is_null());
  EXPECT_EQ(j["spec"].get<CostSpec>(), report.spec);
}

TEST(CostSpec, Validation) {
  CostSpec s;
  s.prompt_tokens = 0;
  EXPECT_THROW(cost_report(s), ConfigError);
  s = CostSpec{};
  s.flops_per_token = 0;
  EXPECT_THROW(cost_report(s), ConfigError);
  s = CostSpec{};
  s.video_rates = {};
  EXPECT_THROW(cost_report(s), ConfigError);
  EXPECT_THROW(nlohmann::json({{"tokens", 1}}).get<CostSpec>(), ConfigError);
}

// For a wide decoder the attention term is small next to the dense layers,
// so compute per token barely moves between 88 and 757 positions.
TEST(DecoderMacs, NearlyLinearForWideModels) {
  DecoderConfig cfg;
  cfg.d_model = 4096;
  cfg.d_ff = 14336;
  cfg.layers = 32;
  const double short_run = decoder_macs(cfg, 88, 0, 0) / 88;
  const double long_run = decoder_macs(cfg, 757, 0, 0) / 757;
  EXPECT_LT(std::abs(long_run / short_run - 1), 0.15);
  EXPECT_DOUBLE_EQ(decoder_macs(cfg, 10, 4, 35) - decoder_macs(cfg, 10, 0, 35), 4.0 * 4096 * 35);
}
