#pragma once

#include <vector>

#include "m2d/encoders.hpp"
#include "m2d/ops.hpp"

namespace m2d {

// Two-layer LSTM decoder that reconstructs the query conditioned on a
// candidate's cross-modal feature.
struct CaptionParams {
  LstmParams lstm1;  // token embedding d_e -> hidden d_h
  Tensor fuse_w;     // [d_h x (d_h + d_v)]
  Tensor fuse_b;     // [d_h]
  LstmParams lstm2;  // d_h -> d_h
  Tensor head_w;     // [V x d_h]
  Tensor head_b;     // [V]
};

struct ReconstructionResult {
  Tensor nll;                          // scalar, >= 0
  std::vector<double> word_log_probs;  // length L, each <= 0
};

// Shared-query batch: n candidate features decode the same token sequence.
struct BatchReconstruction {
  Tensor nll_vec;                                   // [n]
  std::vector<std::vector<double>> word_log_probs;  // n x L
};

// Teacher-forced reconstruction: step l consumes the embedding of the
// previous token (begin-of-sequence at l = 0) and scores the true token
// under a log-softmax head. nll is the mean negative log-probability.
ReconstructionResult caption_nll(const Tensor& candidate_feature, const Query& query,
                                 const Tensor& embedding_table, const CaptionParams& params);

// Same computation for a block of candidates [n x d_v]; the first LSTM runs
// once since it only sees the tokens.
BatchReconstruction caption_nll_batch(const Tensor& candidate_features, const Query& query,
                                      const Tensor& embedding_table, const CaptionParams& params);

// Mean reconstruction loss over all selected candidates.
Tensor batch_reconstruction_loss(const std::vector<ReconstructionResult>& results);

}  // namespace m2d
