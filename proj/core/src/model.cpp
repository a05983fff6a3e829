#include "m2d/model.hpp"

#include <atomic>
#include <filesystem>
#include <mutex>
#include <thread>

namespace m2d {

namespace fs = std::filesystem;

namespace {

int resolve_threads(std::int64_t configured, std::int64_t work_items) {
  std::int64_t t = configured;
  if (t <= 0) t = static_cast<std::int64_t>(std::thread::hardware_concurrency());
  if (t < 1) t = 1;
  return static_cast<int>(std::min(t, work_items));
}

// Runs fn(0..n-1) across worker threads; each index owns its output slot, so
// results do not depend on scheduling. The first exception is rethrown.
void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr error;
  auto worker = [&]() {
    for (;;) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

LstmParams make_lstm(ParamRegistry& reg, const std::string& prefix, std::int64_t d_in,
                     std::int64_t hidden, Rng& rng) {
  LstmParams p;
  p.w_ih = reg.add(prefix + ".w_ih", Tensor::fan_in_init({4 * hidden, d_in}, d_in, rng));
  p.w_hh = reg.add(prefix + ".w_hh", Tensor::fan_in_init({4 * hidden, hidden}, hidden, rng));
  p.b = reg.add(prefix + ".b", Tensor::fan_in_init({4 * hidden}, d_in, rng));
  return p;
}

}  // namespace

Model Model::init(const Config& cfg, std::int64_t vocab_size) {
  cfg.validate();
  if (vocab_size < 1) throw ConfigError("Model::init: vocabulary must not be empty");
  Model m;
  m.cfg = cfg;
  m.vocab_size = vocab_size;
  Rng rng(Rng::derive_seed(cfg.seed, 1));

  m.embedding = m.params.add("embedding.table",
                             Tensor::fan_in_init({vocab_size, cfg.d_e}, cfg.d_e, rng));

  const std::int64_t h_text = cfg.d_t / 2;
  for (int layer = 0; layer < kTextEncoderLayers; ++layer) {
    const std::int64_t d_in = layer == 0 ? cfg.d_e : 2 * h_text;
    const std::string base = "text.l" + std::to_string(layer);
    TextEncoderParams::Layer l;
    l.fw = make_lstm(m.params, base + ".fw", d_in, h_text, rng);
    l.bw = make_lstm(m.params, base + ".bw", d_in, h_text, rng);
    m.text.layers.push_back(std::move(l));
  }
  m.text.word_proj_w =
      m.params.add("text.word_proj.w", Tensor::fan_in_init({cfg.d_t, cfg.d_t}, cfg.d_t, rng));
  m.text.word_proj_b =
      m.params.add("text.word_proj.b", Tensor::fan_in_init({cfg.d_t}, cfg.d_t, rng));
  m.text.sent_proj_w =
      m.params.add("text.sent_proj.w", Tensor::fan_in_init({cfg.d_t, cfg.d_t}, cfg.d_t, rng));
  m.text.sent_proj_b =
      m.params.add("text.sent_proj.b", Tensor::fan_in_init({cfg.d_t}, cfg.d_t, rng));

  m.video_w = m.params.add(
      "video_proj.w", Tensor::fan_in_init({cfg.d_v, cfg.feature_dim}, cfg.feature_dim, rng));
  m.video_b =
      m.params.add("video_proj.b", Tensor::fan_in_init({cfg.d_v}, cfg.feature_dim, rng));

  m.fusion.w_text =
      m.params.add("fusion.w_text", Tensor::fan_in_init({cfg.d_v, cfg.d_t}, cfg.d_t, rng));
  m.fusion.w_map =
      m.params.add("fusion.w_map", Tensor::fan_in_init({cfg.d_v, cfg.d_v}, cfg.d_v, rng));

  const std::int64_t k = cfg.conv_kernel;
  const std::int64_t conv_fan = cfg.d_v * k * k;
  for (std::int64_t layer = 0; layer < cfg.conv_layers; ++layer) {
    const std::string base = "conv.l" + std::to_string(layer);
    Tensor kernels = m.params.add(base + ".kernels",
                                  Tensor::fan_in_init({cfg.d_v, cfg.d_v, k, k}, conv_fan, rng));
    Tensor bias = m.params.add(base + ".bias", Tensor::fan_in_init({cfg.d_v}, conv_fan, rng));
    m.conv.layers.emplace_back(std::move(kernels), std::move(bias));
  }
  m.conv.activation = ConvActivation::Relu;

  m.score_head.w = m.params.add("score.w", Tensor::fan_in_init({1, cfg.d_v}, cfg.d_v, rng));
  m.score_head.b = m.params.add("score.b", Tensor::fan_in_init({1}, cfg.d_v, rng));

  const std::int64_t d_h = cfg.caption_hidden;
  m.caption.lstm1 = make_lstm(m.params, "caption.lstm1", cfg.d_e, d_h, rng);
  m.caption.fuse_w = m.params.add("caption.fuse.w",
                                  Tensor::fan_in_init({d_h, d_h + cfg.d_v}, d_h + cfg.d_v, rng));
  m.caption.fuse_b =
      m.params.add("caption.fuse.b", Tensor::fan_in_init({d_h}, d_h + cfg.d_v, rng));
  m.caption.lstm2 = make_lstm(m.params, "caption.lstm2", d_h, d_h, rng);
  m.caption.head_w =
      m.params.add("caption.head.w", Tensor::fan_in_init({vocab_size, d_h}, d_h, rng));
  m.caption.head_b = m.params.add("caption.head.b", Tensor::fan_in_init({vocab_size}, d_h, rng));
  return m;
}

SampleForward forward_sample(const Model& model, const Tensor& raw_features, const Query& query) {
  Tensor projected = project_video(raw_features, model.video_w, model.video_b);
  const ScaleConfig sc = model.scale_config();
  ClipGrid grid = multi_scale_sample(projected, sc, model.cfg.d_v);

  SampleForward out;
  out.n_base_clips = raw_features.dim(0);
  out.text = encode_text(embed(query, model.embedding), model.text);
  out.scales.reserve(grid.per_scale.size());
  for (std::int64_t j = 0; j < sc.num_scales(); ++j) {
    ScaleForward sf;
    sf.map = build_map(grid, j);
    sf.fused = fuse(sf.map, out.text, model.fusion);
    sf.conved = conv_stack(sf.fused, model.conv);
    sf.scores = score(sf.conved, model.score_head);
    out.scales.push_back(std::move(sf));
  }
  return out;
}

std::vector<MomentPrediction> predict_moments(const Model& model, const Tensor& raw_features,
                                              const Query& query) {
  const SampleForward fwd = forward_sample(model, raw_features, query);
  const ScaleConfig sc = model.scale_config();
  std::vector<MomentPrediction> pooled;
  for (const auto& sf : fwd.scales) {
    const auto& values = sf.scores.scores.data();
    for (const auto& id : sf.scores.candidates) {
      MomentPrediction p;
      p.interval = to_seconds(id, sc, fwd.n_base_clips);
      p.score = values[static_cast<std::size_t>(candidate_cell(id, sf.scores.side))];
      p.source = id;
      pooled.push_back(p);
    }
  }
  return nms(std::move(pooled), model.cfg.nms_threshold);
}

// ---------------------------------------------------------------------------
// training

namespace {

struct SampleGrads {
  std::vector<std::vector<double>> per_param;  // empty vector = no contribution
  double l_rec = 0.0;
  double l_bce = 0.0;
  double total = 0.0;
};

SampleGrads process_sample(const Model& model, const TrainSample& sample) {
  const SampleForward fwd = forward_sample(model, sample.features, sample.query);

  Tensor nll_all, probs_all;
  std::vector<double> labels;
  for (const auto& sf : fwd.scales) {
    const auto selected = select_top_k(sf.scores, model.cfg.top_k);
    std::vector<std::int64_t> cells;
    cells.reserve(selected.size());
    for (const auto& id : selected) cells.push_back(candidate_cell(id, sf.scores.side));

    Tensor feats = gather_rows(sf.conved.rows, cells);
    BatchReconstruction rec =
        caption_nll_batch(feats, sample.query, model.embedding, model.caption);
    const PseudoLabelSet pl =
        pseudo_labels(rec.nll_vec.data(), model.cfg.l_min, model.cfg.l_max);
    for (const auto& e : pl.entries) labels.push_back(e.y);

    Tensor probs = gather1d(sf.scores.scores, cells);
    nll_all = nll_all.defined() ? concat1d(nll_all, rec.nll_vec) : rec.nll_vec;
    probs_all = probs_all.defined() ? concat1d(probs_all, probs) : probs;
  }

  Tensor l_rec = mean(nll_all);
  Tensor l_bce = rg_bce(probs_all, labels);
  Tensor total = add(l_bce, scale(l_rec, model.cfg.lambda));

  GradMap gm = compute_gradients(total);
  SampleGrads out;
  out.l_rec = l_rec.value();
  out.l_bce = l_bce.value();
  out.total = total.value();
  out.per_param.resize(model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto* buf = gm.find(model.params.entries()[i].second.node());
    if (buf) out.per_param[i] = *buf;
  }
  return out;
}

}  // namespace

LossReport train_step(Model& model, Optimizer& opt, const std::vector<TrainSample>& batch,
                      int threads) {
  if (batch.empty()) throw UsageError("train_step: empty batch");
  const std::int64_t n = static_cast<std::int64_t>(batch.size());
  std::vector<SampleGrads> results(batch.size());
  try {
    parallel_for(n, threads, [&](std::int64_t i) {
      results[static_cast<std::size_t>(i)] =
          process_sample(model, batch[static_cast<std::size_t>(i)]);
    });
  } catch (const NumericError& e) {
    throw NumericError(std::string("train_step aborted: ") + e.what());
  }

  // Serial merge in sample order keeps updates bit-deterministic.
  const double inv = 1.0 / static_cast<double>(n);
  LossReport report;
  report.lambda = model.cfg.lambda;
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    std::vector<double> acc;
    for (const auto& r : results) {
      if (r.per_param[p].empty()) continue;
      if (acc.empty()) acc.assign(r.per_param[p].size(), 0.0);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r.per_param[p][i] * inv;
    }
    if (!acc.empty()) model.params.entries()[p].second.accumulate_grad(acc);
  }
  for (const auto& r : results) {
    report.l_rec += r.l_rec * inv;
    report.l_rg_bce += r.l_bce * inv;
  }
  report.total = report.l_rg_bce + report.lambda * report.l_rec;
  opt.step(model.params);
  return report;
}

void run_training(Model& model, Optimizer& opt, const std::vector<TrainRecord>& records,
                  FeatureStore& store, const Vocabulary& vocab, const TrainOptions& options) {
  if (records.empty()) throw UsageError("run_training: no training records");
  const int threads = resolve_threads(model.cfg.threads, model.cfg.batch);
  if (!options.out_dir.empty()) fs::create_directories(options.out_dir);

  std::int64_t step = 0;
  std::int64_t epoch = 0;
  while (step < model.cfg.steps) {
    auto batches =
        make_batches(records, model.cfg.batch, Rng::derive_seed(model.cfg.seed, 1000 + epoch));
    for (auto& batch : batches) {
      if (step >= model.cfg.steps) break;
      std::vector<TrainSample> samples;
      samples.reserve(batch.size());
      for (const auto& rec : batch) {
        const Tensor& feats = store.get(rec.video_id);
        if (feats.dim(1) != model.cfg.feature_dim) {
          throw ConfigError("training: corpus feature dim " + std::to_string(feats.dim(1)) +
                            " does not match configured feature_dim " +
                            std::to_string(model.cfg.feature_dim));
        }
        samples.push_back(TrainSample{feats, tokenize(rec.query_tokens, vocab)});
      }
      const LossReport report = train_step(model, opt, samples, threads);
      ++step;
      if (options.on_step) options.on_step(step, report);
      if (!options.out_dir.empty() && step % model.cfg.checkpoint_every == 0) {
        save_checkpoint(model.params,
                        (fs::path(options.out_dir) / ("checkpoint_" + std::to_string(step) +
                                                      ".m2dt"))
                            .string());
      }
    }
    ++epoch;
  }
  if (!options.out_dir.empty()) {
    save_checkpoint(model.params, (fs::path(options.out_dir) / "final.m2dt").string());
  }
}

// ---------------------------------------------------------------------------
// evaluation

Query tokenize(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  Query q;
  q.tokens.reserve(tokens.size());
  for (const auto& t : tokens) q.tokens.push_back(vocab.lookup(t));
  return q;
}

std::vector<std::vector<MomentPrediction>> predict_all(
    const Model& model, const std::vector<AnnotationRecord>& records, FeatureStore& store,
    const Vocabulary& vocab) {
  // Touch the cache serially; prediction itself is read-only and parallel.
  std::vector<const Tensor*> features;
  features.reserve(records.size());
  for (const auto& r : records) features.push_back(&store.get(r.video_id));

  std::vector<std::vector<MomentPrediction>> out(records.size());
  const int threads =
      resolve_threads(model.cfg.threads, static_cast<std::int64_t>(records.size()));
  parallel_for(static_cast<std::int64_t>(records.size()), threads, [&](std::int64_t i) {
    const auto& rec = records[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] =
        predict_moments(model, *features[static_cast<std::size_t>(i)],
                        tokenize(rec.query_tokens, vocab));
  });
  return out;
}

EvalResult evaluate(const Model& model, const std::vector<AnnotationRecord>& records,
                    FeatureStore& store, const Vocabulary& vocab,
                    std::vector<std::vector<MomentPrediction>>* predictions_out) {
  std::vector<Interval> gts;
  gts.reserve(records.size());
  for (const auto& r : records) {
    if (!r.gt_interval) {
      throw ParseError("evaluate: record for '" + r.video_id + "' carries no ground truth");
    }
    gts.push_back(*r.gt_interval);
  }
  auto predictions = predict_all(model, records, store, vocab);
  EvalResult result = evaluate_grid(predictions, gts);
  if (predictions_out) *predictions_out = std::move(predictions);
  return result;
}

}  // namespace m2d
