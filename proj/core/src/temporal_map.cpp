#include "m2d/temporal_map.hpp"

#include <algorithm>

#include "m2d/ops.hpp"

namespace m2d {

void ScaleConfig::validate() const {
  if (scales.empty()) throw ConfigError("ScaleConfig: scales must not be empty");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] < 1) throw ConfigError("ScaleConfig: every scale must be >= 1");
    if (i > 0 && scales[i] >= scales[i - 1]) {
      throw ConfigError("ScaleConfig: scales must be strictly decreasing");
    }
  }
  if (frames_per_clip < 1) throw ConfigError("ScaleConfig: frames_per_clip must be >= 1");
  if (fps <= 0.0) throw ConfigError("ScaleConfig: fps must be positive");
}

std::vector<double> TemporalMap::mask01() const {
  std::vector<double> m(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i) m[i] = valid[i] ? 1.0 : 0.0;
  return m;
}

std::pair<std::int64_t, std::int64_t> group_bounds(std::int64_t n_base, std::int64_t n_scale,
                                                   std::int64_t i) {
  if (i < 0 || i >= n_scale) {
    throw IndexError("group_bounds: index " + std::to_string(i) + " outside scale of " +
                     std::to_string(n_scale));
  }
  if (n_base >= n_scale) {
    const std::int64_t lo = i * n_base / n_scale;
    const std::int64_t hi = (i + 1) * n_base / n_scale - 1;
    return {lo, hi};
  }
  // Short video: identity copy for the clips that exist, padding beyond.
  if (i < n_base) return {i, i};
  return {1, 0};  // lo > hi marks padding
}

ClipGrid multi_scale_sample(const Tensor& features, const ScaleConfig& config,
                            std::int64_t expected_dim) {
  config.validate();
  if (features.rank() != 2) {
    throw DimensionError("multi_scale_sample: features must be [N x d], got " +
                         shape_to_string(features.shape()));
  }
  if (expected_dim >= 0 && features.dim(1) != expected_dim) {
    throw DimensionError("multi_scale_sample: feature dim " + std::to_string(features.dim(1)) +
                         " does not match configured " + std::to_string(expected_dim));
  }
  const std::int64_t n = features.dim(0);
  ClipGrid grid;
  grid.n_base_clips = n;
  grid.per_scale.reserve(config.scales.size());
  for (std::int64_t nj : config.scales) {
    std::vector<std::pair<std::int64_t, std::int64_t>> groups;
    groups.reserve(nj);
    for (std::int64_t i = 0; i < nj; ++i) groups.push_back(group_bounds(n, nj, i));
    ClipGrid::ScaleClips sc;
    sc.features = group_max_rows(features, groups);
    sc.valid_rows = std::min(n, nj);
    grid.per_scale.push_back(std::move(sc));
  }
  return grid;
}

bool sparse_candidate_kept(std::int64_t x, std::int64_t y) {
  const std::int64_t d = y - x + 1;
  if (d <= 8) return true;
  if (d <= 16) return x % 2 == 0;
  if (d <= 32) return x % 4 == 0;
  return x % 8 == 0;
}

std::vector<std::pair<std::int64_t, std::int64_t>> sparse_candidates(std::int64_t n_scale) {
  if (n_scale < 1) throw ConfigError("sparse_candidates: scale must be >= 1");
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  const bool keep_all = n_scale <= 16;
  for (std::int64_t x = 0; x < n_scale; ++x) {
    for (std::int64_t y = x; y < n_scale; ++y) {
      if (keep_all || sparse_candidate_kept(x, y)) out.emplace_back(x, y);
    }
  }
  return out;
}

TemporalMap build_map(const ClipGrid& grid, std::int64_t scale_index) {
  if (scale_index < 0 || scale_index >= static_cast<std::int64_t>(grid.per_scale.size())) {
    throw IndexError("build_map: scale index " + std::to_string(scale_index) + " out of range");
  }
  const auto& sc = grid.per_scale[static_cast<std::size_t>(scale_index)];
  const std::int64_t nj = sc.features.dim(0);
  const std::int64_t d = sc.features.dim(1);

  TemporalMap map;
  map.scale_index = scale_index;
  map.side = nj;
  map.valid.assign(static_cast<std::size_t>(nj * nj), 0);
  for (const auto& [x, y] : sparse_candidates(nj)) {
    if (y >= sc.valid_rows) continue;  // touches zero padding
    map.valid[static_cast<std::size_t>(x * nj + y)] = 1;
    map.candidates.push_back({scale_index, x, y});
  }

  // Max-pool every upper-triangle cell, then zero the cells outside the
  // candidate set so invalid cells are exactly zero.
  Tensor full = upper_tri_max_map(sc.features);
  Tensor rows = reshape(full, {nj * nj, d});
  Tensor masked = mask_rows(rows, map.mask01());
  map.features = reshape(masked, {nj, nj, d});
  return map;
}

std::pair<double, double> to_seconds(const CandidateId& id, const ScaleConfig& config,
                                     std::int64_t n_base_clips) {
  if (id.scale < 0 || id.scale >= config.num_scales()) {
    throw IndexError("to_seconds: scale index " + std::to_string(id.scale) + " out of range");
  }
  const std::int64_t nj = config.scales[static_cast<std::size_t>(id.scale)];
  if (id.start < 0 || id.start > id.end || id.end >= nj) {
    throw IndexError("to_seconds: candidate (" + std::to_string(id.start) + ", " +
                     std::to_string(id.end) + ") invalid for scale of " + std::to_string(nj));
  }
  const std::int64_t valid_rows = std::min(n_base_clips, nj);
  if (id.end >= valid_rows) {
    throw IndexError("to_seconds: candidate reaches padded clips of a short video");
  }
  const double spc = config.seconds_per_clip();
  const auto [lo_s, lo_e] = group_bounds(n_base_clips, nj, id.start);
  const auto [hi_s, hi_e] = group_bounds(n_base_clips, nj, id.end);
  (void)lo_e;
  (void)hi_s;
  return {static_cast<double>(lo_s) * spc, static_cast<double>(hi_e + 1) * spc};
}

}  // namespace m2d
