#include "m2d/encoders.hpp"

namespace m2d {

Tensor embed(const Query& query, const Tensor& table) {
  if (table.rank() != 2) {
    throw DimensionError("embed: table must be [V x d_e], got " + shape_to_string(table.shape()));
  }
  if (query.tokens.empty()) throw UsageError("embed: empty query");
  const std::int64_t vocab = table.dim(0);
  for (auto t : query.tokens) {
    if (t < 0 || t >= vocab) {
      throw VocabError("embed: token index " + std::to_string(t) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  return gather_rows(table, query.tokens);
}

namespace {

// Runs one bidirectional layer over the row sequence [L x d_in] and returns
// per-position [L x 2H] plus the summary states (forward at L-1, backward
// at position 0).
struct BiLayerOut {
  Tensor seq;       // [L x 2H]
  Tensor fw_last;   // [H]
  Tensor bw_first;  // [H]
};

BiLayerOut run_bi_layer(const Tensor& seq, const TextEncoderParams::Layer& layer) {
  const std::int64_t len = seq.dim(0);
  const std::int64_t hdim = layer.fw.w_hh.dim(1);
  std::vector<Tensor> fw_h(static_cast<std::size_t>(len));
  std::vector<Tensor> bw_h(static_cast<std::size_t>(len));

  LstmState st{Tensor::zeros({hdim}), Tensor::zeros({hdim})};
  for (std::int64_t t = 0; t < len; ++t) {
    Tensor x = reshape(gather_rows(seq, {t}), {seq.dim(1)});
    st = lstm_cell(x, st, layer.fw);
    fw_h[static_cast<std::size_t>(t)] = st.h;
  }
  Tensor fw_last = st.h;

  st = LstmState{Tensor::zeros({hdim}), Tensor::zeros({hdim})};
  for (std::int64_t t = len - 1; t >= 0; --t) {
    Tensor x = reshape(gather_rows(seq, {t}), {seq.dim(1)});
    st = lstm_cell(x, st, layer.bw);
    bw_h[static_cast<std::size_t>(t)] = st.h;
  }
  Tensor bw_first = bw_h[0];

  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(len));
  for (std::int64_t t = 0; t < len; ++t) {
    rows.push_back(concat1d(fw_h[static_cast<std::size_t>(t)], bw_h[static_cast<std::size_t>(t)]));
  }
  return {stack_rows(rows), fw_last, bw_first};
}

}  // namespace

TextEncoding encode_text(const Tensor& embeddings, const TextEncoderParams& params) {
  if (embeddings.rank() != 2 || embeddings.dim(0) < 1) {
    throw DimensionError("encode_text: embeddings must be [L x d_e] with L >= 1, got " +
                         shape_to_string(embeddings.shape()));
  }
  if (params.layers.size() != kTextEncoderLayers) {
    throw ConfigError("encode_text: expected " + std::to_string(kTextEncoderLayers) +
                      " bidirectional layers");
  }
  Tensor seq = embeddings;
  Tensor fw_last, bw_first;
  for (const auto& layer : params.layers) {
    BiLayerOut out = run_bi_layer(seq, layer);
    seq = out.seq;
    fw_last = out.fw_last;
    bw_first = out.bw_first;
  }
  TextEncoding enc;
  enc.word_features = linear(seq, params.word_proj_w, params.word_proj_b);
  enc.sentence_feature =
      linear(concat1d(fw_last, bw_first), params.sent_proj_w, params.sent_proj_b);
  return enc;
}

Tensor project_video(const Tensor& clip_features, const Tensor& weight, const Tensor& bias) {
  if (clip_features.rank() != 2) {
    throw DimensionError("project_video: features must be [N x d_raw], got " +
                         shape_to_string(clip_features.shape()));
  }
  if (clip_features.dim(1) != weight.dim(1)) {
    throw DimensionError("project_video: raw dim " + std::to_string(clip_features.dim(1)) +
                         " does not match projection " + shape_to_string(weight.shape()));
  }
  return linear(clip_features, weight, bias);
}

}  // namespace m2d
