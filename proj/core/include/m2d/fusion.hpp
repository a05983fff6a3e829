#pragma once

#include <cstdint>
#include <vector>

#include "m2d/encoders.hpp"
#include "m2d/temporal_map.hpp"

namespace m2d {

// Projections into the shared space; the fusion equation carries no bias.
struct FusionParams {
  Tensor w_text;  // [d_v x d_t]
  Tensor w_map;   // [d_v x d_v]
};

enum class ConvActivation { Relu, Identity };

// One parameter set applied to every scale's map.
struct ConvStackParams {
  std::vector<std::pair<Tensor, Tensor>> layers;  // (kernels [C x C x k x k], bias [C])
  ConvActivation activation = ConvActivation::Relu;
};

struct ScoreParams {
  Tensor w;  // [1 x d_v]
  Tensor b;  // [1]
};

// Cross-modal map in flattened form: row x*N+y is the feature of cell (x, y).
// Invalid rows are exactly zero.
struct FusedMap {
  std::int64_t scale_index = 0;
  std::int64_t side = 0;
  Tensor rows;  // [N^2 x d_v]
  std::vector<std::uint8_t> valid;
  std::vector<CandidateId> candidates;

  std::vector<double> mask01() const;
};

// Per-cell alignment scores; invalid cells are exactly zero. The tensor stays
// on the graph so the training loss can differentiate through selected cells.
struct ScoreMap {
  std::int64_t scale_index = 0;
  std::int64_t side = 0;
  Tensor scores;  // [N^2]
  std::vector<std::uint8_t> valid;
  std::vector<CandidateId> candidates;

  double at(std::int64_t x, std::int64_t y) const {
    return scores.data()[static_cast<std::size_t>(x * side + y)];
  }
  bool is_valid(std::int64_t x, std::int64_t y) const {
    return valid[static_cast<std::size_t>(x * side + y)] != 0;
  }
};

// Hadamard fusion of the sentence feature with every valid cell, then
// per-cell L2 normalization; invalid cells stay zero.
FusedMap fuse(const TemporalMap& map, const TextEncoding& text, const FusionParams& params);

// conv2d -> re-mask -> activation, repeated per layer, shared across scales.
FusedMap conv_stack(const FusedMap& input, const ConvStackParams& params);

// sigmoid(w . cell + b) per valid cell, zero elsewhere.
ScoreMap score(const FusedMap& input, const ScoreParams& params);

}  // namespace m2d
