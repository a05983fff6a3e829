#include "m2d/supervision.hpp"

#include <algorithm>

#include "m2d/ops.hpp"

namespace m2d {

std::vector<CandidateId> select_top_k(const ScoreMap& scores, std::int64_t k) {
  if (k < 1) throw UsageError("select_top_k: k must be >= 1");
  struct Entry {
    double score;
    CandidateId id;
  };
  std::vector<Entry> entries;
  entries.reserve(scores.candidates.size());
  const auto& values = scores.scores.data();
  for (const auto& id : scores.candidates) {
    entries.push_back({values[static_cast<std::size_t>(candidate_cell(id, scores.side))], id});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.id.start != b.id.start) return a.id.start < b.id.start;
    return (a.id.end - a.id.start) < (b.id.end - b.id.start);
  });
  const std::size_t take = std::min<std::size_t>(entries.size(), static_cast<std::size_t>(k));
  std::vector<CandidateId> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(entries[i].id);
  return out;
}

PseudoLabelSet pseudo_labels(const std::vector<double>& nlls, double l_min, double l_max) {
  if (nlls.empty()) throw UsageError("pseudo_labels: empty loss list");
  if (!(l_min >= 0.0 && l_min < l_max && l_max <= 1.0)) {
    throw ConfigError("pseudo_labels: need 0 <= l_min < l_max <= 1");
  }
  double total = 0.0;
  for (double v : nlls) {
    if (v < 0.0) throw UsageError("pseudo_labels: negative reconstruction loss");
    total += v;
  }
  if (total == 0.0) {
    throw DegenerateInputError("pseudo_labels: all reconstruction losses are zero");
  }
  PseudoLabelSet out;
  out.l_min = l_min;
  out.l_max = l_max;
  out.entries.reserve(nlls.size());
  for (double v : nlls) {
    PseudoLabelEntry e;
    e.l_norm = v / total;
    if (e.l_norm >= l_max) {
      e.y = 0.0;
    } else if (e.l_norm >= l_min) {
      e.y = 1.0 - e.l_norm;
    } else {
      e.y = 1.0;
    }
    out.entries.push_back(e);
  }
  return out;
}

Tensor rg_bce(const Tensor& probs, const std::vector<double>& labels) {
  if (probs.rank() != 1) {
    throw DimensionError("rg_bce: probs must be [n], got " + shape_to_string(probs.shape()));
  }
  if (static_cast<std::size_t>(probs.dim(0)) != labels.size()) {
    throw DimensionError("rg_bce: " + std::to_string(probs.dim(0)) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  }
  for (double p : probs.data()) {
    if (!(p > 0.0 && p < 1.0)) {
      throw NumericError("rg_bce: score outside (0, 1)");
    }
  }
  for (double y : labels) {
    if (!(y >= 0.0 && y <= 1.0)) throw UsageError("rg_bce: label outside [0, 1]");
  }
  Tensor y = Tensor::from_data({probs.dim(0)}, labels);
  Tensor one_minus_y = affine(y, -1.0, 1.0);
  Tensor terms = add(hadamard(y, log(probs)), hadamard(one_minus_y, log(affine(probs, -1.0, 1.0))));
  return scale(mean(terms), -1.0);
}

}  // namespace m2d
