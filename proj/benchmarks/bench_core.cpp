#include <benchmark/benchmark.h>

#include "m2d/model.hpp"

using namespace m2d;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(std::move(shape), std::move(v));
}

void BM_conv2d_forward(benchmark::State& state) {
  const std::int64_t c = state.range(0);
  const std::int64_t n = state.range(1);
  const std::int64_t k = state.range(2);
  Rng rng(1);
  Tensor input = random_tensor({c, n, n}, rng);
  Tensor kernels = random_tensor({c, c, k, k}, rng);
  Tensor bias = random_tensor({c}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(input, kernels, bias));
  }
  state.SetItemsProcessed(state.iterations() * c * c * n * n * k * k);
}
BENCHMARK(BM_conv2d_forward)->Args({64, 16, 3})->Args({64, 16, 5})->Args({512, 16, 5});

void BM_map_build(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  Rng rng(2);
  Tensor rows = random_tensor({n, 64}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(upper_tri_max_map(rows));
  }
}
BENCHMARK(BM_map_build)->Arg(16)->Arg(32)->Arg(64);

void BM_nms(benchmark::State& state) {
  Rng rng(3);
  std::vector<MomentPrediction> preds;
  for (int i = 0; i < 200; ++i) {
    const double s = rng.uniform(0.0, 50.0);
    preds.push_back({{s, s + rng.uniform(0.5, 20.0)}, rng.uniform(), {}});
  }
  for (auto _ : state) {
    auto copy = preds;
    benchmark::DoNotOptimize(nms(std::move(copy), 0.5));
  }
}
BENCHMARK(BM_nms);

void BM_train_step(benchmark::State& state) {
  Config cfg = Config::desk();
  cfg.threads = 1;
  SyntheticSpec spec;
  spec.n_videos = 16;
  SyntheticCorpus corpus = generate_synthetic(spec);
  Model model = Model::init(cfg, corpus.vocab.size());
  Optimizer opt = Optimizer::for_params(model.params, cfg.lr);

  std::vector<TrainSample> batch;
  const auto records = to_train_view(corpus.train);
  for (std::size_t i = 0; i < records.size() && batch.size() < 4; ++i) {
    const auto& f = corpus.features[i];
    std::vector<double> vals(f.data.begin(), f.data.end());
    batch.push_back(TrainSample{Tensor::from_data({f.n_clips, f.dim}, std::move(vals)),
                                tokenize(records[i].query_tokens, corpus.vocab)});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_step(model, opt, batch, 1));
  }
}
BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
