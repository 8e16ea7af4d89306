#include "mtsk/cost.hpp"

#include "mtsk/json_util.hpp"

#include <cstdio>
#include <sstream>

namespace mtsk {

using nlohmann::json;

void CostSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("cost: " + msg); };
  if (audio_tokens < 1 || video_tokens < 1 || prompt_tokens < 1) fail("token counts must be >= 1");
  if (!(flops_per_token > 0)) fail("flops_per_token must be > 0");
  if (audio_rates.empty() || video_rates.empty()) fail("rate grid is empty");
  for (int r : audio_rates) {
    if (r < 1) fail("audio rate " + std::to_string(r) + " is not positive");
  }
  for (int r : video_rates) {
    if (r < 1) fail("video rate " + std::to_string(r) + " is not positive");
  }
}

void to_json(json& j, const CostSpec& s) {
  j = json{{"audio_tokens", s.audio_tokens},   {"video_tokens", s.video_tokens},
           {"prompt_tokens", s.prompt_tokens}, {"flops_per_token", s.flops_per_token},
           {"audio_rates", s.audio_rates},     {"video_rates", s.video_rates}};
}

void from_json(const json& j, CostSpec& s) {
  constexpr std::string_view sec = "cost";
  require_known_keys(j, sec,
                     {"audio_tokens", "video_tokens", "prompt_tokens", "flops_per_token",
                      "audio_rates", "video_rates"});
  read_optional(j, sec, "audio_tokens", s.audio_tokens);
  read_optional(j, sec, "video_tokens", s.video_tokens);
  read_optional(j, sec, "prompt_tokens", s.prompt_tokens);
  read_optional(j, sec, "flops_per_token", s.flops_per_token);
  read_optional(j, sec, "audio_rates", s.audio_rates);
  read_optional(j, sec, "video_rates", s.video_rates);
}

long token_count(const CostSpec& spec, int audio_rate, int video_rate) {
  if (audio_rate < 1 || video_rate < 1) throw ConfigError("cost: rates must be >= 1");
  return spec.audio_tokens / audio_rate + spec.video_tokens / video_rate + spec.prompt_tokens;
}

double flops(const CostSpec& spec, int audio_rate, int video_rate) {
  return double(token_count(spec, audio_rate, video_rate)) * spec.flops_per_token;
}

double reduction_ratio(const CostSpec& spec, int audio_rate, int video_rate) {
  return double(token_count(spec, 1, 1)) / double(token_count(spec, audio_rate, video_rate));
}

CostReport cost_report(const CostSpec& spec) {
  spec.validate();
  CostReport report{spec, {}};
  for (int a : spec.audio_rates) {
    for (int v : spec.video_rates) {
      report.rows.push_back(
          {a, v, token_count(spec, a, v), flops(spec, a, v), reduction_ratio(spec, a, v), {}});
    }
  }
  return report;
}

void attach_wer(CostReport& report, const std::map<std::string, double>& wer_by_scale) {
  for (auto& row : report.rows) {
    auto it = wer_by_scale.find(scale_key(row.audio_rate, row.video_rate));
    if (it != wer_by_scale.end()) row.wer = it->second;
  }
}

namespace {

std::string real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string to_csv(const CostReport& report) {
  bool any_wer = false;
  for (const auto& r : report.rows) any_wer = any_wer || r.wer.has_value();
  std::ostringstream out;
  out << "audio_rate,video_rate,tokens,flops,ratio" << (any_wer ? ",wer" : "") << "\n";
  for (const auto& r : report.rows) {
    out << r.audio_rate << ',' << r.video_rate << ',' << r.tokens << ',' << real(r.flops) << ','
        << real(r.ratio);
    if (any_wer) out << ',' << (r.wer ? real(*r.wer) : "");
    out << "\n";
  }
  return out.str();
}

std::vector<CostRow> parse_cost_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("cost csv: empty input");
  const bool has_wer = line == "audio_rate,video_rate,tokens,flops,ratio,wer";
  if (!has_wer && line != "audio_rate,video_rate,tokens,flops,ratio") {
    throw ConfigError("cost csv: unexpected header '" + line + "'");
  }
  std::vector<CostRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    const std::size_t want = has_wer ? 6 : 5;
    if (cells.size() != want) {
      throw ConfigError("cost csv line " + std::to_string(lineno) + ": expected " +
                        std::to_string(want) + " fields");
    }
    try {
      CostRow r;
      r.audio_rate = std::stoi(cells[0]);
      r.video_rate = std::stoi(cells[1]);
      r.tokens = std::stol(cells[2]);
      r.flops = std::stod(cells[3]);
      r.ratio = std::stod(cells[4]);
      if (has_wer && !cells[5].empty()) r.wer = std::stod(cells[5]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ConfigError("cost csv line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

json to_plot_json(const CostReport& report) {
  json points = json::array();
  for (const auto& r : report.rows) {
    json p{{"label", "(" + scale_key(r.audio_rate, r.video_rate) + ")"},
           {"audio_rate", r.audio_rate},
           {"video_rate", r.video_rate},
           {"tokens", r.tokens},
           {"tflops", r.flops / 1e12},
           {"ratio", r.ratio},
           {"wer", r.wer ? json(*r.wer) : json(nullptr)}};
    points.push_back(std::move(p));
  }
  return json{{"x", "tflops"}, {"y", "wer"}, {"size", "tokens"}, {"spec", report.spec},
              {"points", points}};
}

double decoder_macs(const DecoderConfig& cfg, long length, long text, long vocab) {
  const double n = double(length);
  const double d = cfg.d_model;
  const double per_layer = 4 * n * d * d          // q, k, v, o projections
                           + n * (n + 1) * d       // scores and weighted sum (causal)
                           + 2 * n * d * cfg.d_ff;  // feed-forward
  return cfg.layers * per_layer + double(text) * d * double(vocab);
}

}  // namespace mtsk
