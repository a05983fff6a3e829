#pragma once

#include <vector>

#include "m2d/fusion.hpp"

namespace m2d {

// Pseudo labels for the K selected candidates of one scale, derived from
// normalized reconstruction losses. Constants: no gradient flows through.
struct PseudoLabelEntry {
  double l_norm = 0.0;  // nll_k / sum_k nll_k, in [0, 1]
  double y = 0.0;       // piecewise target in [0, 1]
};

struct PseudoLabelSet {
  std::vector<PseudoLabelEntry> entries;
  double l_min = 0.1;
  double l_max = 0.7;
};

// Loss summary for one training step.
struct LossReport {
  double l_rec = 0.0;
  double l_rg_bce = 0.0;
  double total = 0.0;
  double lambda = 1.0;
};

// The K highest-scoring valid candidates of one scale. Ties break toward the
// smaller start index, then the shorter duration. Fewer than K valid
// candidates means all of them.
std::vector<CandidateId> select_top_k(const ScoreMap& scores, std::int64_t k);

// l_norm_k = nll_k / sum(nll); y = 1 below l_min, 1 - l_norm in the middle
// band, 0 at or above l_max.
PseudoLabelSet pseudo_labels(const std::vector<double>& nlls, double l_min, double l_max);

// Reconstruction-guided BCE over the selected candidates, negated so that
// minimization is correct: -(1/n) sum [y ln p + (1-y) ln(1-p)].
// probs must lie strictly inside (0, 1).
Tensor rg_bce(const Tensor& probs, const std::vector<double>& labels);

// Flat cell index of a candidate inside its scale map.
inline std::int64_t candidate_cell(const CandidateId& id, std::int64_t side) {
  return id.start * side + id.end;
}

}  // namespace m2d
