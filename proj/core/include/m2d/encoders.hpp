#pragma once

#include <cstdint>
#include <vector>

#include "m2d/ops.hpp"
#include "m2d/tensor.hpp"

namespace m2d {

// Tokenized text query; index 0 is the reserved begin-of-sequence token.
struct Query {
  std::vector<std::int64_t> tokens;
};

inline constexpr std::int64_t kBosToken = 0;

struct TextEncoding {
  Tensor word_features;     // [L x d_t]
  Tensor sentence_feature;  // [d_t]
};

// Three stacked bidirectional LSTM layers plus output projections. Hidden
// size per direction is d_t / 2 so the concatenated width equals d_t.
struct TextEncoderParams {
  struct Layer {
    LstmParams fw;
    LstmParams bw;
  };
  std::vector<Layer> layers;  // always 3
  Tensor word_proj_w;         // [d_t x d_t]
  Tensor word_proj_b;         // [d_t]
  Tensor sent_proj_w;         // [d_t x d_t]
  Tensor sent_proj_b;         // [d_t]
};

inline constexpr int kTextEncoderLayers = 3;

// Row lookup of token embeddings; gradients flow into the table.
Tensor embed(const Query& query, const Tensor& table);

TextEncoding encode_text(const Tensor& embeddings, const TextEncoderParams& params);

// Per-row affine projection of raw clip features to d_v channels.
Tensor project_video(const Tensor& clip_features, const Tensor& weight, const Tensor& bias);

}  // namespace m2d
