#pragma once

#include <functional>
#include <string>
#include <vector>

#include "m2d/adam.hpp"
#include "m2d/captioner.hpp"
#include "m2d/checkpoint.hpp"
#include "m2d/config.hpp"
#include "m2d/data_io.hpp"
#include "m2d/fusion.hpp"
#include "m2d/inference.hpp"
#include "m2d/supervision.hpp"

namespace m2d {

// The full network: every learnable tensor lives in the registry (which
// defines the checkpoint order); the typed views below alias the same
// tensors.
struct Model {
  Config cfg;
  std::int64_t vocab_size = 0;

  ParamRegistry params;
  Tensor embedding;  // [V x d_e]
  TextEncoderParams text;
  Tensor video_w;  // [d_v x feature_dim]
  Tensor video_b;  // [d_v]
  FusionParams fusion;
  ConvStackParams conv;
  ScoreParams score_head;
  CaptionParams caption;

  // Seeded fan-in initialization of all parameters (cfg.seed).
  static Model init(const Config& cfg, std::int64_t vocab_size);

  ScaleConfig scale_config() const { return ScaleConfig::from(cfg); }
};

// Forward products of one (video, query) pair.
struct ScaleForward {
  TemporalMap map;
  FusedMap fused;   // after fusion, before convolution
  FusedMap conved;  // after the convolution stack
  ScoreMap scores;
};

struct SampleForward {
  TextEncoding text;
  std::vector<ScaleForward> scales;
  std::int64_t n_base_clips = 0;
};

SampleForward forward_sample(const Model& model, const Tensor& raw_features, const Query& query);

// Pooled predictions of all scales after NMS, sorted by score descending.
std::vector<MomentPrediction> predict_moments(const Model& model, const Tensor& raw_features,
                                              const Query& query);

struct TrainSample {
  Tensor features;  // [N x feature_dim]
  Query query;
};

// One weakly-supervised step over the batch: forward, top-K selection,
// caption reconstruction, pseudo labels from detached losses, RG-BCE, and a
// single Adam update on the gradient averaged over samples. Per-sample
// passes run concurrently; the merge order is fixed, so results are
// bit-deterministic for any thread count.
LossReport train_step(Model& model, Optimizer& opt, const std::vector<TrainSample>& batch,
                      int threads);

struct TrainOptions {
  std::string out_dir;  // empty: no checkpoints are written
  std::function<void(std::int64_t step, const LossReport&)> on_step;
};

// Runs cfg.steps batches (reshuffling each epoch with seed+epoch), writing
// checkpoint_<step>.m2dt every cfg.checkpoint_every steps plus final.m2dt.
void run_training(Model& model, Optimizer& opt, const std::vector<TrainRecord>& records,
                  FeatureStore& store, const Vocabulary& vocab, const TrainOptions& options);

Query tokenize(const std::vector<std::string>& tokens, const Vocabulary& vocab);

// Predictions for every record (parallel over queries).
std::vector<std::vector<MomentPrediction>> predict_all(
    const Model& model, const std::vector<AnnotationRecord>& records, FeatureStore& store,
    const Vocabulary& vocab);

// R@{1,5} x IoU{0.3,0.5,0.7} over records, which must all carry ground truth.
EvalResult evaluate(const Model& model, const std::vector<AnnotationRecord>& records,
                    FeatureStore& store, const Vocabulary& vocab,
                    std::vector<std::vector<MomentPrediction>>* predictions_out = nullptr);

}  // namespace m2d
