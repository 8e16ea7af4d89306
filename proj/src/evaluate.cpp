#include "mtsk/evaluate.hpp"

namespace mtsk {

void to_json(nlohmann::json& j, const DecodeRecord& r) {
  j = nlohmann::json{{"sample_id", r.sample_id},
                     {"scale", {r.audio_rate, r.video_rate}},
                     {"hyp", r.hyp},
                     {"ref", r.ref},
                     {"logprob", r.logprob}};
}

}  // namespace mtsk
