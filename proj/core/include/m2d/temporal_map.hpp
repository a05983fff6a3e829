#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "m2d/config.hpp"
#include "m2d/tensor.hpp"

namespace m2d {

// Sampling layout shared by map construction and time conversion.
struct ScaleConfig {
  std::vector<std::int64_t> scales;  // map side lengths N_j, strictly decreasing
  std::int64_t frames_per_clip = 4;
  double fps = 4.0;

  static ScaleConfig from(const Config& cfg) {
    return ScaleConfig{cfg.scales, cfg.frames_per_clip, cfg.fps};
  }
  void validate() const;
  std::int64_t num_scales() const { return static_cast<std::int64_t>(scales.size()); }
  double seconds_per_clip() const { return static_cast<double>(frames_per_clip) / fps; }
};

// Addresses one moment candidate: cell (start, end) of the scale-j map,
// clip indices inclusive.
struct CandidateId {
  std::int64_t scale = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;

  bool operator==(const CandidateId&) const = default;
};

// Clip features pooled to each scale. Rows at index >= valid_rows are zero
// padding for videos shorter than the scale.
struct ClipGrid {
  struct ScaleClips {
    Tensor features;  // [N_j x d_v]
    std::int64_t valid_rows = 0;
  };
  std::vector<ScaleClips> per_scale;
  std::int64_t n_base_clips = 0;
};

// One scale's 2D temporal feature map. features[x][y] is zero wherever
// valid[x*N+y] is false; candidates lists exactly the valid cells.
struct TemporalMap {
  std::int64_t scale_index = 0;
  std::int64_t side = 0;       // N_j
  Tensor features;             // [N_j x N_j x d_v]
  std::vector<std::uint8_t> valid;  // row-major over (start, end)
  std::vector<CandidateId> candidates;

  bool is_valid(std::int64_t x, std::int64_t y) const {
    return valid[static_cast<std::size_t>(x * side + y)] != 0;
  }
  // 0/1 mask over flattened cells, for masked tensor ops.
  std::vector<double> mask01() const;
};

// Inclusive base-clip bounds [lo, hi] of pooled clip i at a scale with
// n_scale rows over n_base base clips. Returns lo > hi for padding rows.
std::pair<std::int64_t, std::int64_t> group_bounds(std::int64_t n_base, std::int64_t n_scale,
                                                   std::int64_t i);

// Pools N base clip rows into each configured scale via per-channel max over
// even groups; videos shorter than a scale are zero-padded.
ClipGrid multi_scale_sample(const Tensor& features, const ScaleConfig& config,
                            std::int64_t expected_dim = -1);

// Candidate thinning. All pairs when N_j <= 16, otherwise stride grows with
// candidate duration (see sparse_candidate_kept).
bool sparse_candidate_kept(std::int64_t x, std::int64_t y);
std::vector<std::pair<std::int64_t, std::int64_t>> sparse_candidates(std::int64_t n_scale);

// Builds the scale-j map from the grid: cell (x, y) holds the per-channel max
// of pooled clips x..y; cells outside the candidate set are zero.
TemporalMap build_map(const ClipGrid& grid, std::int64_t scale_index);

// Candidate cell -> time interval in seconds over the base clip grid.
std::pair<double, double> to_seconds(const CandidateId& id, const ScaleConfig& config,
                                     std::int64_t n_base_clips);

}  // namespace m2d
