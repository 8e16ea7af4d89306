#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mtsk {

/// Minimum substitutions + insertions + deletions turning `hyp` into `ref`.
std::size_t edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref);

struct ErrorRate {
  std::size_t edits = 0;
  std::size_t reference_tokens = 0;
  double rate() const { return reference_tokens == 0 ? 0.0 : double(edits) / double(reference_tokens); }
};

/// Corpus-level rate: total edits over total reference tokens. On the
/// synthetic corpus a "word" is one symbol, so this is the symbol error rate.
ErrorRate evaluate_wer(const std::vector<std::vector<int>>& hypotheses,
                       const std::vector<std::vector<int>>& references);

}  // namespace mtsk
