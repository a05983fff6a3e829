#include "m2d/inference.hpp"

#include <algorithm>
#include <cmath>

namespace m2d {

const RecallEntry& EvalResult::at(int n, double m) const {
  for (const auto& e : entries) {
    if (e.top_n == n && e.min_tiou == m) return e;
  }
  throw UsageError("EvalResult: no entry for R@" + std::to_string(n));
}

double tiou(const Interval& a, const Interval& b) {
  if (!(a.first < a.second) || !(b.first < b.second)) {
    throw UsageError("tiou: degenerate interval");
  }
  const double inter = std::min(a.second, b.second) - std::max(a.first, b.first);
  if (inter <= 0.0) return 0.0;
  const double uni = (a.second - a.first) + (b.second - b.first) - inter;
  return inter / uni;
}

namespace {

bool prediction_before(const MomentPrediction& a, const MomentPrediction& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.interval.first != b.interval.first) return a.interval.first < b.interval.first;
  return (a.interval.second - a.interval.first) < (b.interval.second - b.interval.first);
}

}  // namespace

std::vector<MomentPrediction> nms(std::vector<MomentPrediction> predictions, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("nms: threshold must lie in (0, 1)");
  }
  std::sort(predictions.begin(), predictions.end(), prediction_before);
  std::vector<MomentPrediction> kept;
  std::vector<bool> removed(predictions.size(), false);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (removed[i]) continue;
    kept.push_back(predictions[i]);
    for (std::size_t j = i + 1; j < predictions.size(); ++j) {
      if (removed[j]) continue;
      if (tiou(predictions[i].interval, predictions[j].interval) >= threshold) {
        removed[j] = true;
      }
    }
  }
  return kept;
}

RecallEntry recall_at(const std::vector<std::vector<MomentPrediction>>& predictions_per_query,
                      const std::vector<Interval>& gt_per_query, int n, double m) {
  if (predictions_per_query.size() != gt_per_query.size()) {
    throw UsageError("recall_at: prediction and ground-truth counts differ");
  }
  if (n < 1) throw UsageError("recall_at: n must be >= 1");
  RecallEntry entry;
  entry.top_n = n;
  entry.min_tiou = m;
  entry.queries = static_cast<std::int64_t>(gt_per_query.size());
  for (std::size_t q = 0; q < gt_per_query.size(); ++q) {
    const auto& preds = predictions_per_query[q];
    const std::size_t limit = std::min<std::size_t>(preds.size(), static_cast<std::size_t>(n));
    bool hit = false;
    for (std::size_t i = 0; i < limit && !hit; ++i) {
      hit = tiou(preds[i].interval, gt_per_query[q]) >= m;
    }
    if (hit) ++entry.hits;
  }
  entry.recall = entry.queries == 0
                     ? 0.0
                     : static_cast<double>(entry.hits) / static_cast<double>(entry.queries);
  return entry;
}

EvalResult evaluate_grid(const std::vector<std::vector<MomentPrediction>>& predictions_per_query,
                         const std::vector<Interval>& gt_per_query) {
  EvalResult result;
  for (int n : {1, 5}) {
    for (double m : {0.3, 0.5, 0.7}) {
      result.entries.push_back(recall_at(predictions_per_query, gt_per_query, n, m));
    }
  }
  return result;
}

}  // namespace m2d
