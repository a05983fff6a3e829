#include "m2d/captioner.hpp"

namespace m2d {

BatchReconstruction caption_nll_batch(const Tensor& candidate_features, const Query& query,
                                      const Tensor& embedding_table,
                                      const CaptionParams& params) {
  if (query.tokens.empty()) throw UsageError("caption_nll: empty query");
  if (candidate_features.rank() != 2) {
    throw DimensionError("caption_nll_batch: features must be [n x d_v], got " +
                         shape_to_string(candidate_features.shape()));
  }
  const std::int64_t n = candidate_features.dim(0);
  const std::int64_t len = static_cast<std::int64_t>(query.tokens.size());
  const std::int64_t d_h = params.lstm2.w_hh.dim(1);
  const std::int64_t vocab = params.head_w.dim(0);
  for (auto t : query.tokens) {
    if (t < 0 || t >= vocab) {
      throw VocabError("caption_nll: token " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
  }

  // Teacher forcing: inputs are [BOS, w_0, ..., w_{L-2}].
  std::vector<std::int64_t> inputs(static_cast<std::size_t>(len));
  inputs[0] = kBosToken;
  for (std::int64_t l = 1; l < len; ++l) inputs[static_cast<std::size_t>(l)] = query.tokens[l - 1];
  Tensor in_emb = gather_rows(embedding_table, inputs);  // [L x d_e]

  LstmState s1{Tensor::zeros({params.lstm1.w_hh.dim(1)}),
               Tensor::zeros({params.lstm1.w_hh.dim(1)})};
  LstmState s2{Tensor::zeros({n, d_h}), Tensor::zeros({n, d_h})};

  std::vector<Tensor> step_log_probs;  // each [n]
  step_log_probs.reserve(static_cast<std::size_t>(len));
  for (std::int64_t l = 0; l < len; ++l) {
    Tensor x = reshape(gather_rows(in_emb, {l}), {in_emb.dim(1)});
    s1 = lstm_cell(x, s1, params.lstm1);
    Tensor h1_block = repeat_row(s1.h, n);                      // [n x d_h1]
    Tensor fused = concat_cols(h1_block, candidate_features);   // [n x (d_h1 + d_v)]
    Tensor x2 = linear(fused, params.fuse_w, params.fuse_b);    // [n x d_h]
    s2 = lstm_cell(x2, s2, params.lstm2);
    Tensor logits = linear(s2.h, params.head_w, params.head_b);  // [n x V]
    Tensor logp = log_softmax_rows(logits);
    step_log_probs.push_back(select_col(logp, query.tokens[l]));
  }

  Tensor total = step_log_probs[0];
  for (std::int64_t l = 1; l < len; ++l) {
    total = add(total, step_log_probs[static_cast<std::size_t>(l)]);
  }
  BatchReconstruction out;
  out.nll_vec = scale(total, -1.0 / static_cast<double>(len));
  out.word_log_probs.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    auto& per_word = out.word_log_probs[static_cast<std::size_t>(i)];
    per_word.resize(static_cast<std::size_t>(len));
    for (std::int64_t l = 0; l < len; ++l) {
      per_word[static_cast<std::size_t>(l)] =
          step_log_probs[static_cast<std::size_t>(l)].data()[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

ReconstructionResult caption_nll(const Tensor& candidate_feature, const Query& query,
                                 const Tensor& embedding_table, const CaptionParams& params) {
  if (candidate_feature.rank() != 1) {
    throw DimensionError("caption_nll: candidate feature must be [d_v], got " +
                         shape_to_string(candidate_feature.shape()));
  }
  Tensor block = reshape(candidate_feature, {1, candidate_feature.dim(0)});
  BatchReconstruction batch = caption_nll_batch(block, query, embedding_table, params);
  ReconstructionResult out;
  out.nll = reshape(batch.nll_vec, {});
  out.word_log_probs = std::move(batch.word_log_probs[0]);
  return out;
}

Tensor batch_reconstruction_loss(const std::vector<ReconstructionResult>& results) {
  if (results.empty()) throw UsageError("batch_reconstruction_loss: empty selection");
  std::vector<Tensor> nlls;
  nlls.reserve(results.size());
  for (const auto& r : results) nlls.push_back(r.nll);
  return mean(stack_scalars(nlls));
}

}  // namespace m2d
