#pragma once

#include "mtsk/inference.hpp"
#include "mtsk/wer.hpp"

#include "json.hpp"

namespace mtsk {

struct DecodeRecord {
  std::string sample_id;
  int audio_rate = 1;
  int video_rate = 1;
  std::vector<int> hyp;  // EOS stripped
  std::vector<int> ref;
  double logprob = 0;
};

void to_json(nlohmann::json& j, const DecodeRecord& r);

struct ScaleEval {
  int audio_rate = 1;
  int video_rate = 1;
  ErrorRate error;
  std::vector<DecodeRecord> records;
};

/// Decodes every sample through `route` and scores it against the transcript.
template <typename Scalar>
ScaleEval evaluate_route(const InferenceView<Scalar>& view, const ScaleRoute<Scalar>& route,
                         const std::vector<EncodedSample<Scalar>>& samples,
                         const DecodeConfig& cfg) {
  ScaleEval out;
  out.audio_rate = route.audio ? route.audio_rate : 1;
  out.video_rate = route.video ? route.video_rate : 1;
  std::vector<std::vector<int>> hyps;
  std::vector<std::vector<int>> refs;
  for (const auto& x : samples) {
    const Hypothesis h = decode(view.scorer(x, route), cfg);
    DecodeRecord r{x.id, out.audio_rate, out.video_rate, strip_eos(h.tokens, cfg.eos_id),
                   strip_eos(x.transcript, cfg.eos_id), h.logprob};
    hyps.push_back(r.hyp);
    refs.push_back(r.ref);
    out.records.push_back(std::move(r));
  }
  out.error = evaluate_wer(hyps, refs);
  return out;
}

template <typename Scalar>
ScaleEval evaluate_view(const InferenceView<Scalar>& view,
                        const std::vector<EncodedSample<Scalar>>& samples, const DecodeConfig& cfg) {
  return evaluate_route(view, view.route(), samples, cfg);
}

}  // namespace mtsk
