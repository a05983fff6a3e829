#include <doctest.h>

#include <cmath>

#include "m2d/captioner.hpp"
#include "support/fd_check.hpp"

using namespace m2d;
using m2d::testing::random_values;

namespace {

CaptionParams random_caption(std::int64_t d_e, std::int64_t d_v, std::int64_t d_h,
                             std::int64_t vocab, Rng& rng) {
  CaptionParams p;
  p.lstm1 = {Tensor::fan_in_init({4 * d_h, d_e}, d_e, rng),
             Tensor::fan_in_init({4 * d_h, d_h}, d_h, rng),
             Tensor::fan_in_init({4 * d_h}, d_e, rng)};
  p.fuse_w = Tensor::fan_in_init({d_h, d_h + d_v}, d_h + d_v, rng);
  p.fuse_b = Tensor::fan_in_init({d_h}, d_h + d_v, rng);
  p.lstm2 = {Tensor::fan_in_init({4 * d_h, d_h}, d_h, rng),
             Tensor::fan_in_init({4 * d_h, d_h}, d_h, rng),
             Tensor::fan_in_init({4 * d_h}, d_h, rng)};
  p.head_w = Tensor::fan_in_init({vocab, d_h}, d_h, rng);
  p.head_b = Tensor::fan_in_init({vocab}, d_h, rng);
  return p;
}

}  // namespace

TEST_CASE("single-token vocabulary reconstructs perfectly") {
  Rng rng(3);
  CaptionParams p = random_caption(4, 3, 5, /*vocab=*/1, rng);
  Tensor table = Tensor::fan_in_init({1, 4}, 4, rng);
  ReconstructionResult r =
      caption_nll(Tensor::from_data({3}, {0.1, 0.2, 0.3}), Query{{0, 0}}, table, p);
  CHECK(r.nll.value() == 0.0);  // softmax over one class
  for (double lp : r.word_log_probs) CHECK(lp == 0.0);
}

TEST_CASE("zero output head gives exactly ln V") {
  Rng rng(5);
  const std::int64_t vocab = 7;
  CaptionParams p = random_caption(4, 3, 5, vocab, rng);
  p.head_w = Tensor::zeros({vocab, 5});
  p.head_b = Tensor::zeros({vocab});
  Tensor table = Tensor::fan_in_init({vocab, 4}, 4, rng);
  ReconstructionResult r = caption_nll(Tensor::from_data({3}, {0.4, -0.2, 0.9}),
                                       Query{{1, 4, 2}}, table, p);
  CHECK(std::abs(r.nll.value() - std::log(static_cast<double>(vocab))) < 1e-12);
}

TEST_CASE("nll is nonnegative with nonpositive per-word log probs") {
  Rng rng(7);
  const std::int64_t vocab = 6;
  CaptionParams p = random_caption(4, 3, 5, vocab, rng);
  Tensor table = Tensor::fan_in_init({vocab, 4}, 4, rng);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor feat = Tensor::from_data({3}, random_values(3, rng));
    Query q{{1 + trial % 5, 1 + (trial * 2) % 5}};
    ReconstructionResult r = caption_nll(feat, q, table, p);
    CHECK(r.nll.value() >= 0.0);
    double acc = 0.0;
    for (double lp : r.word_log_probs) {
      CHECK(lp <= 0.0);
      acc -= lp;
    }
    // nll = -(1/L) sum of per-word log probs
    CHECK(r.nll.value() ==
          doctest::Approx(acc / static_cast<double>(q.tokens.size())).epsilon(1e-12));
  }
}

TEST_CASE("distinct candidate features give distinct losses") {
  Rng rng(11);
  const std::int64_t vocab = 6;
  CaptionParams p = random_caption(4, 3, 5, vocab, rng);
  Tensor table = Tensor::fan_in_init({vocab, 4}, 4, rng);
  Query q{{2, 3, 1}};
  ReconstructionResult a = caption_nll(Tensor::from_data({3}, {1.0, 0.0, 0.0}), q, table, p);
  ReconstructionResult b = caption_nll(Tensor::from_data({3}, {0.0, 1.0, -0.5}), q, table, p);
  CHECK(a.nll.value() != b.nll.value());
}

TEST_CASE("batch reconstruction equals the per-candidate loop") {
  Rng rng(13);
  const std::int64_t vocab = 8, d_v = 3, n = 5;
  CaptionParams p = random_caption(4, d_v, 6, vocab, rng);
  Tensor table = Tensor::fan_in_init({vocab, 4}, 4, rng);
  Query q{{3, 1, 7, 2}};
  const auto feats_vals = random_values(static_cast<std::size_t>(n * d_v), rng);
  Tensor feats = Tensor::from_data({n, d_v}, feats_vals);

  BatchReconstruction batch = caption_nll_batch(feats, q, table, p);
  CHECK(batch.nll_vec.dim(0) == n);
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<double> row(feats_vals.begin() + i * d_v, feats_vals.begin() + (i + 1) * d_v);
    ReconstructionResult single = caption_nll(Tensor::from_data({d_v}, row), q, table, p);
    CHECK(std::abs(batch.nll_vec.data()[static_cast<std::size_t>(i)] - single.nll.value()) <
          1e-12);
    for (std::size_t l = 0; l < single.word_log_probs.size(); ++l) {
      CHECK(std::abs(batch.word_log_probs[static_cast<std::size_t>(i)][l] -
                     single.word_log_probs[l]) < 1e-12);
    }
  }
}

TEST_CASE("log_softmax rows sum-exp to one") {
  Rng rng(17);
  Tensor logits = Tensor::from_data({4, 9}, random_values(36, rng, -5.0, 5.0));
  Tensor lp = log_softmax_rows(logits);
  for (std::int64_t i = 0; i < 4; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < 9; ++j) acc += std::exp(lp.at({i, j}));
    CHECK(std::abs(acc - 1.0) < 1e-9);
  }
}

TEST_CASE("gradient w.r.t. the candidate feature matches finite differences") {
  Rng rng(19);
  const std::int64_t vocab = 5, d_v = 3;
  CaptionParams p = random_caption(4, d_v, 4, vocab, rng);
  Tensor table = Tensor::fan_in_init({vocab, 4}, 4, rng);
  Query q{{1, 4, 2}};
  const double err = m2d::testing::fd_max_error(
      {{d_v}}, {random_values(static_cast<std::size_t>(d_v), rng)},
      [&](const std::vector<Tensor>& in) { return caption_nll(in[0], q, table, p).nll; });
  CHECK(err < 1e-4);
}

TEST_CASE("batch loss is the mean of candidate losses") {
  ReconstructionResult a{Tensor::scalar(2.0), {}};
  ReconstructionResult b{Tensor::scalar(4.0), {}};
  CHECK(batch_reconstruction_loss({a}).value() == 2.0);
  CHECK(batch_reconstruction_loss({a, b}).value() == doctest::Approx(3.0).epsilon(1e-15));

  // 3 scales x top-10: thirty terms averaged
  std::vector<ReconstructionResult> many;
  double total = 0.0;
  for (int i = 0; i < 30; ++i) {
    many.push_back({Tensor::scalar(0.1 * i), {}});
    total += 0.1 * i;
  }
  CHECK(batch_reconstruction_loss(many).value() ==
        doctest::Approx(total / 30.0).epsilon(1e-12));
  CHECK_THROWS_AS(batch_reconstruction_loss({}), UsageError);
}

TEST_CASE("empty queries are rejected") {
  Rng rng(23);
  CaptionParams p = random_caption(4, 3, 4, 5, rng);
  Tensor table = Tensor::fan_in_init({5, 4}, 4, rng);
  CHECK_THROWS_AS(caption_nll(Tensor::zeros({3}), Query{{}}, table, p), UsageError);
}
