#include <doctest.h>

#include <cmath>

#include "m2d/adam.hpp"
#include "m2d/ops.hpp"
#include "support/fd_check.hpp"

using namespace m2d;
using m2d::testing::fd_max_error;
using m2d::testing::random_values;
using m2d::testing::separated_values;

TEST_CASE("matmul identity") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor out = matmul(eye, b);
  CHECK(out.data() == b.data());
}

TEST_CASE("matmul row times column") {
  // 1*3 + 2*4 = 11
  Tensor a = Tensor::from_data({1, 2}, {1, 2});
  Tensor b = Tensor::from_data({2, 1}, {3, 4});
  Tensor out = matmul(a, b);
  CHECK(out.shape() == Shape{1, 1});
  CHECK(out.value() == doctest::Approx(11.0).epsilon(1e-15));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("gradient of sum(A*B) w.r.t. A equals ones x B^T") {
  Rng rng(7);
  Tensor a = Tensor::from_data({3, 4}, random_values(12, rng), true);
  Tensor b = Tensor::from_data({4, 2}, random_values(8, rng), true);
  sum(matmul(a, b)).backward();

  // ones(3x2) x B^T computed by hand
  const auto& bv = b.data();
  const auto& ga = a.grad();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 4; ++k) {
      double expect = 0.0;
      for (int j = 0; j < 2; ++j) expect += bv[k * 2 + j];
      CHECK(ga[i * 4 + k] == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  // and against central differences
  const double err = fd_max_error(
      {{3, 4}, {4, 2}}, {random_values(12, rng), random_values(8, rng)},
      [](const std::vector<Tensor>& in) { return sum(matmul(in[0], in[1])); });
  CHECK(err < 1e-4);
}

TEST_CASE("conv2d identity kernel") {
  Rng rng(3);
  Tensor input = Tensor::from_data({1, 4, 4}, random_values(16, rng));
  Tensor kernel = Tensor::from_data({1, 1, 1, 1}, {1.0});
  Tensor bias = Tensor::zeros({1});
  Tensor out = conv2d(input, kernel, bias);
  CHECK(out.data() == input.data());
}

TEST_CASE("conv2d all-ones 3x3 on all-ones 3x3 input") {
  Tensor input = Tensor::full({1, 3, 3}, 1.0);
  Tensor kernel = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor bias = Tensor::zeros({1});
  Tensor out = conv2d(input, kernel, bias);
  CHECK(out.at({0, 1, 1}) == doctest::Approx(9.0));  // center sees all nine
  CHECK(out.at({0, 0, 0}) == doctest::Approx(4.0));  // corner sees four
  CHECK(out.at({0, 0, 1}) == doctest::Approx(6.0));
}

TEST_CASE("conv2d rejects even kernels") {
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 3, 3}), Tensor::zeros({1, 1, 2, 2}),
                         Tensor::zeros({1})),
                  ConfigError);
}

TEST_CASE("conv2d gradient matches finite differences") {
  Rng rng(11);
  const double err = fd_max_error(
      {{2, 5, 5}, {3, 2, 3, 3}, {3}},
      {random_values(50, rng), random_values(54, rng), random_values(3, rng)},
      [](const std::vector<Tensor>& in) { return sum(conv2d(in[0], in[1], in[2])); });
  CHECK(err < 1e-4);
}

namespace {

LstmParams zero_lstm(std::int64_t d_in, std::int64_t h) {
  return {Tensor::zeros({4 * h, d_in}), Tensor::zeros({4 * h, h}), Tensor::zeros({4 * h})};
}

}  // namespace

TEST_CASE("lstm_cell zero fixed point") {
  LstmParams p = zero_lstm(3, 2);
  LstmState s{Tensor::zeros({2}), Tensor::zeros({2})};
  LstmState out = lstm_cell(Tensor::from_data({3}, {0.5, -1.0, 2.0}), s, p);
  for (double v : out.h.data()) CHECK(v == 0.0);
  for (double v : out.c.data()) CHECK(v == 0.0);
}

TEST_CASE("lstm_cell zero params with unit cell state") {
  // gates all sigmoid(0) = 0.5, candidate tanh(0) = 0:
  // c' = 0.5 * 1 = 0.5, h' = 0.5 * tanh(0.5)
  LstmParams p = zero_lstm(1, 1);
  LstmState s{Tensor::zeros({1}), Tensor::from_data({1}, {1.0})};
  LstmState out = lstm_cell(Tensor::from_data({1}, {0.3}), s, p);
  CHECK(out.c.data()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.h.data()[0] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-15));
}

TEST_CASE("lstm_cell shape mismatch") {
  LstmParams p = zero_lstm(3, 2);
  LstmState s{Tensor::zeros({2}), Tensor::zeros({2})};
  CHECK_THROWS_AS(lstm_cell(Tensor::zeros({4}), s, p), DimensionError);
}

TEST_CASE("lstm_cell gradient matches finite differences") {
  Rng rng(13);
  const std::int64_t d_in = 3, h = 2;
  const double err = fd_max_error(
      {{d_in}, {h}, {h}, {4 * h, d_in}, {4 * h, h}, {4 * h}},
      {random_values(3, rng), random_values(2, rng), random_values(2, rng),
       random_values(24, rng), random_values(16, rng), random_values(8, rng)},
      [](const std::vector<Tensor>& in) {
        LstmParams p{in[3], in[4], in[5]};
        LstmState s{in[1], in[2]};
        LstmState out = lstm_cell(in[0], s, p);
        return sum(add(out.h, out.c));
      });
  CHECK(err < 1e-4);
}

TEST_CASE("segment_max basic cases") {
  Tensor f = Tensor::from_data({4, 1}, {1, 3, 2, 5});
  CHECK(segment_max(f, 1, 3).data()[0] == 5.0);
  for (std::int64_t i = 0; i < 4; ++i) {
    CHECK(segment_max(f, i, i).data()[0] == f.data()[static_cast<std::size_t>(i)]);
  }
  CHECK_THROWS_AS(segment_max(f, 2, 1), IndexError);
  CHECK_THROWS_AS(segment_max(f, 0, 4), IndexError);
}

TEST_CASE("segment_max equals naive loop exhaustively") {
  Rng rng(17);
  for (std::int64_t n : {1, 2, 3, 5, 8, 13, 32}) {
    const std::int64_t d = 3;
    Tensor f = Tensor::from_data({n, d}, random_values(static_cast<std::size_t>(n * d), rng));
    for (std::int64_t x = 0; x < n; ++x) {
      for (std::int64_t y = x; y < n; ++y) {
        Tensor got = segment_max(f, x, y);
        for (std::int64_t c = 0; c < d; ++c) {
          double expect = f.at({x, c});
          for (std::int64_t r = x + 1; r <= y; ++r) expect = std::max(expect, f.at({r, c}));
          CHECK(got.data()[static_cast<std::size_t>(c)] == expect);
        }
      }
    }
  }
}

TEST_CASE("segment_max routes gradient to first maximal row") {
  Tensor f = Tensor::from_data({3, 1}, {2.0, 5.0, 5.0}, true);
  sum(segment_max(f, 0, 2)).backward();
  const auto& g = f.grad();
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);  // first of the tied maxima
  CHECK(g[2] == 0.0);
}

TEST_CASE("segment_max gradient matches finite differences") {
  Rng rng(19);
  const double err =
      fd_max_error({{6, 4}}, {separated_values(24, rng)}, [](const std::vector<Tensor>& in) {
        return sum(segment_max(in[0], 1, 4));
      });
  CHECK(err < 1e-4);
}

TEST_CASE("l2_normalize three-four-five") {
  Tensor v = Tensor::from_data({2}, {3, 4});
  Tensor out = l2_normalize(v, 0);
  CHECK(out.data()[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(out.data()[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("l2_normalize leaves exact zero unchanged and norms are 1 otherwise") {
  Tensor z = Tensor::zeros({3});
  CHECK(l2_normalize(z, 0).data() == z.data());

  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor v = Tensor::from_data({5}, random_values(5, rng));
    Tensor out = l2_normalize(v, 0);
    double sq = 0.0;
    for (double x : out.data()) sq += x * x;
    CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-12);
  }
}

TEST_CASE("l2_normalize rows gradient matches finite differences") {
  Rng rng(29);
  const double err =
      fd_max_error({{3, 4}}, {random_values(12, rng)}, [](const std::vector<Tensor>& in) {
        return sum(hadamard(l2_normalize(in[0], 1), in[0]));
      });
  CHECK(err < 1e-4);
}

TEST_CASE("sigmoid stays inside (0,1)") {
  Rng rng(31);
  Tensor v = Tensor::from_data({64}, random_values(64, rng, -30.0, 30.0));
  Tensor out = sigmoid(v);
  for (double y : out.data()) {
    CHECK(y > 0.0);
    CHECK(y < 1.0);
  }
}

TEST_CASE("hadamard requires equal shapes") {
  CHECK_THROWS_AS(hadamard(Tensor::zeros({2, 2}), Tensor::zeros({4})), DimensionError);
}

TEST_CASE("elementwise gradients match finite differences") {
  Rng rng(37);
  const double err_had = fd_max_error(
      {{3, 3}, {3, 3}}, {random_values(9, rng), random_values(9, rng)},
      [](const std::vector<Tensor>& in) { return sum(hadamard(in[0], in[1])); });
  CHECK(err_had < 1e-4);

  const double err_act =
      fd_max_error({{6}}, {random_values(6, rng)}, [](const std::vector<Tensor>& in) {
        return sum(add(sigmoid(in[0]), tanh(in[0])));
      });
  CHECK(err_act < 1e-4);
}

TEST_CASE("ops are deterministic") {
  Rng rng(41);
  const auto vals = random_values(30, rng);
  auto run = [&vals]() {
    Tensor a = Tensor::from_data({5, 6}, vals);
    Tensor out = l2_normalize(sigmoid(matmul(a, transpose2d(a))), 1);
    return out.data();
  };
  CHECK(run() == run());
}

TEST_CASE("finite-value guard") {
  CHECK_THROWS_AS(Tensor::from_data({1}, {std::nan("")}), NumericError);
  Tensor big = Tensor::full({1}, 1e308);
  CHECK_THROWS_AS(hadamard(big, big), NumericError);
  CHECK_THROWS_AS(log(Tensor::from_data({1}, {0.0})), NumericError);
}

// ---------------------------------------------------------------------------
// Adam

TEST_CASE("adam first step moves by about -lr") {
  Tensor p = Tensor::from_data({2}, {1.0, -2.0}, true);
  p.accumulate_grad({1.0, 1.0});
  AdamState st = AdamState::for_param(p, 1e-4);
  adam_step(p, st);
  CHECK(p.data()[0] == doctest::Approx(1.0 - 1e-4).epsilon(1e-7));
  CHECK(p.data()[1] == doctest::Approx(-2.0 - 1e-4).epsilon(1e-7));
  CHECK(st.step == 1);
  CHECK_FALSE(p.has_grad());  // cleared afterwards
}

TEST_CASE("adam zero gradient leaves parameter unchanged") {
  Tensor p = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  p.accumulate_grad({0.0, 0.0, 0.0});
  AdamState st = AdamState::for_param(p, 1e-2);
  adam_step(p, st);
  CHECK(p.data() == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("adam two steps match a hand-unrolled recurrence") {
  const double g = 0.7, lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Tensor p = Tensor::from_data({1}, {0.5}, true);
  AdamState st = AdamState::for_param(p, lr);

  // scalar oracle
  double m = 0.0, v = 0.0, x = 0.5;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    x -= lr * mh / (std::sqrt(vh) + eps);
  }

  p.accumulate_grad({g});
  adam_step(p, st);
  p.accumulate_grad({g});
  adam_step(p, st);
  CHECK(p.data()[0] == doctest::Approx(x).epsilon(1e-15));
}

TEST_CASE("adam requires a gradient") {
  Tensor p = Tensor::from_data({1}, {0.0}, true);
  AdamState st = AdamState::for_param(p, 1e-3);
  CHECK_THROWS_AS(adam_step(p, st), UsageError);
}

// ---------------------------------------------------------------------------
// autodiff engine behavior

TEST_CASE("backward accumulates into leaves only and supports reuse") {
  Tensor a = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor b = hadamard(a, a);  // interior
  Tensor loss = sum(b);
  loss.backward();
  CHECK(a.grad() == std::vector<double>{2.0, 4.0});
  loss.backward();  // accumulates
  CHECK(a.grad() == std::vector<double>{4.0, 8.0});
  CHECK_FALSE(b.has_grad());
}

TEST_CASE("backward requires scalar root") {
  Tensor a = Tensor::from_data({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(hadamard(a, a).backward(), UsageError);
}

TEST_CASE("same value reused twice gets both contributions") {
  Tensor a = Tensor::from_data({1}, {3.0}, true);
  sum(hadamard(a, a)).backward();  // d(a^2)/da = 2a
  CHECK(a.grad()[0] == doctest::Approx(6.0));
}
