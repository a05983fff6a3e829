#include "m2d/fusion.hpp"

#include "m2d/ops.hpp"

namespace m2d {

std::vector<double> FusedMap::mask01() const {
  std::vector<double> m(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i) m[i] = valid[i] ? 1.0 : 0.0;
  return m;
}

FusedMap fuse(const TemporalMap& map, const TextEncoding& text, const FusionParams& params) {
  const std::int64_t nj = map.side;
  const std::int64_t d_v = params.w_map.dim(0);
  if (map.features.dim(2) != params.w_map.dim(1)) {
    throw DimensionError("fuse: map feature dim " + std::to_string(map.features.dim(2)) +
                         " does not match projection " + shape_to_string(params.w_map.shape()));
  }
  if (text.sentence_feature.dim(0) != params.w_text.dim(1)) {
    throw DimensionError("fuse: sentence feature dim " +
                         std::to_string(text.sentence_feature.dim(0)) +
                         " does not match projection " + shape_to_string(params.w_text.shape()));
  }
  Tensor text_proj = linear(text.sentence_feature, params.w_text);  // [d_v]
  Tensor cell_rows = reshape(map.features, {nj * nj, map.features.dim(2)});
  Tensor cell_proj = linear(cell_rows, params.w_map);  // [N^2 x d_v]
  Tensor fused = mul_rows(cell_proj, text_proj);
  Tensor normalized = l2_normalize(fused, 1);

  FusedMap out;
  out.scale_index = map.scale_index;
  out.side = nj;
  out.valid = map.valid;
  out.candidates = map.candidates;
  out.rows = mask_rows(normalized, out.mask01());
  (void)d_v;
  return out;
}

FusedMap conv_stack(const FusedMap& input, const ConvStackParams& params) {
  if (params.layers.empty()) throw ConfigError("conv_stack: at least one layer required");
  const std::int64_t nj = input.side;
  const std::int64_t d = input.rows.dim(1);
  const std::vector<double> mask = input.mask01();

  // [N^2 x C] rows -> [C x N x N] planes for convolution.
  Tensor chw = reshape(transpose2d(input.rows), {d, nj, nj});
  for (const auto& [kernels, bias] : params.layers) {
    chw = conv2d(chw, kernels, bias);
    chw = mask_chw(chw, mask);
    if (params.activation == ConvActivation::Relu) chw = relu(chw);
  }
  FusedMap out;
  out.scale_index = input.scale_index;
  out.side = nj;
  out.valid = input.valid;
  out.candidates = input.candidates;
  out.rows = transpose2d(reshape(chw, {chw.dim(0), nj * nj}));
  return out;
}

ScoreMap score(const FusedMap& input, const ScoreParams& params) {
  if (params.w.rank() != 2 || params.w.dim(0) != 1 || params.w.dim(1) != input.rows.dim(1)) {
    throw DimensionError("score: weight " + shape_to_string(params.w.shape()) +
                         " does not match cells " + shape_to_string(input.rows.shape()));
  }
  Tensor logits = linear(input.rows, params.w, params.b);  // [N^2 x 1]
  Tensor probs = sigmoid(logits);
  Tensor masked = mask_rows(probs, input.mask01());

  ScoreMap out;
  out.scale_index = input.scale_index;
  out.side = input.side;
  out.valid = input.valid;
  out.candidates = input.candidates;
  out.scores = reshape(masked, {input.side * input.side});
  return out;
}

}  // namespace m2d
