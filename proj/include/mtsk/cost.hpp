#pragma once

#include "mtsk/decoder.hpp"
#include "mtsk/types.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mtsk {

/// Linear compute model: flops = flops_per_token · tokens.
struct CostSpec {
  long audio_tokens = 500;
  long video_tokens = 250;
  long prompt_tokens = 7;
  double flops_per_token = 1.506e10;  // 2 × ~7.5e9 effective parameters
  std::vector<int> audio_rates{1, 4, 16};
  std::vector<int> video_rates{1, 2, 5};

  void validate() const;
  friend bool operator==(const CostSpec&, const CostSpec&) = default;
};

void to_json(nlohmann::json& j, const CostSpec& s);
void from_json(const nlohmann::json& j, CostSpec& s);

long token_count(const CostSpec& spec, int audio_rate, int video_rate);
double flops(const CostSpec& spec, int audio_rate, int video_rate);
/// flops(1,1) / flops(a,v); independent of flops_per_token.
double reduction_ratio(const CostSpec& spec, int audio_rate, int video_rate);

struct CostRow {
  int audio_rate = 1;
  int video_rate = 1;
  long tokens = 0;
  double flops = 0;
  double ratio = 1;
  std::optional<double> wer;

  friend bool operator==(const CostRow&, const CostRow&) = default;
};

struct CostReport {
  CostSpec spec;
  std::vector<CostRow> rows;  // row-major over (audio_rates, video_rates)
};

CostReport cost_report(const CostSpec& spec);

/// Fills `wer` on rows whose "a,v" key appears in `wer_by_scale`.
void attach_wer(CostReport& report, const std::map<std::string, double>& wer_by_scale);

/// Header `audio_rate,video_rate,tokens,flops,ratio[,wer]`; reals written
/// with 17 significant digits so parsing restores them exactly.
std::string to_csv(const CostReport& report);
std::vector<CostRow> parse_cost_csv(const std::string& text);

/// Bubble-chart fields: one point per scale with tokens, TFLOPs, ratio and WER.
nlohmann::json to_plot_json(const CostReport& report);

/// Multiply-accumulates of one decoder forward over an assembled sequence
/// of `length` positions, `text` of which are scored by the output head.
double decoder_macs(const DecoderConfig& cfg, long length, long text, long vocab);

}  // namespace mtsk
