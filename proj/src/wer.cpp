#include "mtsk/wer.hpp"

#include <algorithm>
#include <string>

namespace mtsk {

std::size_t edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref) {
  std::vector<std::size_t> row(ref.size() + 1);
  for (std::size_t j = 0; j <= ref.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (hyp[i - 1] == ref[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[ref.size()];
}

ErrorRate evaluate_wer(const std::vector<std::vector<int>>& hypotheses,
                       const std::vector<std::vector<int>>& references) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("evaluate_wer: " + std::to_string(hypotheses.size()) +
                                " hypotheses for " + std::to_string(references.size()) +
                                " references");
  }
  if (references.empty()) throw std::invalid_argument("evaluate_wer: empty reference set");
  ErrorRate r;
  for (std::size_t k = 0; k < references.size(); ++k) {
    r.edits += edit_distance(hypotheses[k], references[k]);
    r.reference_tokens += references[k].size();
  }
  return r;
}

}  // namespace mtsk
