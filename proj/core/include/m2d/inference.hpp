#pragma once

#include <utility>
#include <vector>

#include "m2d/temporal_map.hpp"

namespace m2d {

using Interval = std::pair<double, double>;  // (start_s, end_s), start < end

struct MomentPrediction {
  Interval interval{0.0, 0.0};
  double score = 0.0;
  CandidateId source;
};

struct RecallEntry {
  int top_n = 1;
  double min_tiou = 0.5;
  std::int64_t hits = 0;
  std::int64_t queries = 0;
  double recall = 0.0;
};

struct EvalResult {
  std::vector<RecallEntry> entries;
  const RecallEntry& at(int n, double m) const;
};

// Temporal intersection over union of two intervals on the real line.
double tiou(const Interval& a, const Interval& b);

// Greedy suppression over the pooled predictions of all scales: repeatedly
// keep the highest-scoring remaining prediction and drop everything with
// tIoU >= threshold against it. Equal scores break toward the earlier start,
// then the shorter duration. Output is sorted by score descending.
std::vector<MomentPrediction> nms(std::vector<MomentPrediction> predictions, double threshold);

// Fraction of queries whose top-n predictions contain one with tIoU >= m
// against the ground truth. Queries without predictions count as misses.
RecallEntry recall_at(const std::vector<std::vector<MomentPrediction>>& predictions_per_query,
                      const std::vector<Interval>& gt_per_query, int n, double m);

// The reporting grid: R@{1,5} x IoU in {0.3, 0.5, 0.7}.
EvalResult evaluate_grid(const std::vector<std::vector<MomentPrediction>>& predictions_per_query,
                         const std::vector<Interval>& gt_per_query);

}  // namespace m2d
