#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "m2d/inference.hpp"
#include "m2d/ops.hpp"
#include "m2d/temporal_map.hpp"
#include "support/fd_check.hpp"

using namespace m2d;
using m2d::testing::random_values;

namespace {

ScaleConfig desk_scales() { return ScaleConfig{{16, 8, 4}, 4, 4.0}; }

Tensor column(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Tensor::from_data({n, 1}, std::move(v));
}

}  // namespace

TEST_CASE("multi_scale_sample pools even groups by max") {
  ScaleConfig sc{{4, 2}, 4, 4.0};
  ClipGrid grid = multi_scale_sample(column({1, 2, 3, 4}), sc);
  // identity at scale 4
  CHECK(grid.per_scale[0].features.data() == std::vector<double>{1, 2, 3, 4});
  CHECK(grid.per_scale[0].valid_rows == 4);
  // groups {0,1} and {2,3} at scale 2
  CHECK(grid.per_scale[1].features.data() == std::vector<double>{2, 4});
  CHECK(grid.per_scale[1].valid_rows == 2);
}

TEST_CASE("multi_scale_sample zero-pads short videos") {
  ScaleConfig sc{{4}, 4, 4.0};
  ClipGrid grid = multi_scale_sample(column({7, 8, 9}), sc);
  CHECK(grid.per_scale[0].features.data() == std::vector<double>{7, 8, 9, 0});
  CHECK(grid.per_scale[0].valid_rows == 3);
}

TEST_CASE("multi_scale_sample rejects mismatched feature dim") {
  ScaleConfig sc{{4}, 4, 4.0};
  CHECK_THROWS_AS(multi_scale_sample(column({1, 2, 3, 4}), sc, /*expected_dim=*/3),
                  DimensionError);
}

TEST_CASE("build_map matches the stated cells") {
  ScaleConfig sc{{4}, 4, 4.0};
  ClipGrid grid = multi_scale_sample(column({1, 3, 2, 5}), sc);
  TemporalMap map = build_map(grid, 0);
  CHECK(map.features.at({1, 3, 0}) == 5.0);  // max over rows 1..3
  CHECK(map.features.at({2, 1, 0}) == 0.0);  // below diagonal
  CHECK_FALSE(map.is_valid(2, 1));
  for (std::int64_t i = 0; i < 4; ++i) {
    CHECK(map.features.at({i, i, 0}) == grid.per_scale[0].features.at({i, 0}));
  }
}

TEST_CASE("build_map equals the naive construction") {
  Rng rng(5);
  for (std::int64_t n : {1, 2, 5, 9, 16}) {
    ScaleConfig sc{{n}, 4, 4.0};
    const std::int64_t d = 3;
    Tensor feats =
        Tensor::from_data({n, d}, random_values(static_cast<std::size_t>(n * d), rng));
    ClipGrid grid = multi_scale_sample(feats, sc);
    TemporalMap map = build_map(grid, 0);
    for (std::int64_t x = 0; x < n; ++x) {
      for (std::int64_t y = 0; y < n; ++y) {
        for (std::int64_t c = 0; c < d; ++c) {
          double expect = 0.0;
          if (x <= y) {
            expect = feats.at({x, c});
            for (std::int64_t r = x + 1; r <= y; ++r) {
              expect = std::max(expect, feats.at({r, c}));
            }
          }
          CHECK(map.features.at({x, y, c}) == expect);
        }
      }
    }
  }
}

TEST_CASE("map features are exactly zero wherever invalid") {
  Rng rng(6);
  ScaleConfig sc = desk_scales();
  Tensor feats = Tensor::from_data({16, 4}, random_values(64, rng));
  ClipGrid grid = multi_scale_sample(feats, sc);
  for (std::int64_t j = 0; j < sc.num_scales(); ++j) {
    TemporalMap map = build_map(grid, j);
    for (std::int64_t x = 0; x < map.side; ++x) {
      for (std::int64_t y = 0; y < map.side; ++y) {
        if (map.is_valid(x, y)) continue;
        for (std::int64_t c = 0; c < 4; ++c) CHECK(map.features.at({x, y, c}) == 0.0);
      }
    }
  }
}

TEST_CASE("gradients flow through sampling and map construction") {
  Rng rng(7);
  ScaleConfig sc{{4, 2}, 4, 4.0};
  const double err = m2d::testing::fd_max_error(
      {{5, 3}}, {m2d::testing::separated_values(15, rng)}, [&sc](const std::vector<Tensor>& in) {
        ClipGrid grid = multi_scale_sample(in[0], sc);
        Tensor acc;
        for (std::int64_t j = 0; j < sc.num_scales(); ++j) {
          Tensor s = sum(build_map(grid, j).features);
          acc = acc.defined() ? add(acc, s) : s;
        }
        return acc;
      });
  CHECK(err < 1e-4);
}

TEST_CASE("sparse_candidates counts") {
  CHECK(sparse_candidates(16).size() == 136);  // 16*17/2
  CHECK(sparse_candidates(4).size() == 10);    // 4*5/2
  CHECK(sparse_candidates(1).size() == 1);

  // brute-force enumeration of the thinning rule at N=64
  std::size_t expect = 0;
  for (std::int64_t x = 0; x < 64; ++x) {
    for (std::int64_t y = x; y < 64; ++y) {
      const std::int64_t d = y - x + 1;
      bool keep = false;
      if (d <= 8) keep = true;
      else if (d <= 16) keep = x % 2 == 0;
      else if (d <= 32) keep = x % 4 == 0;
      else keep = x % 8 == 0;
      if (keep) ++expect;
    }
  }
  CHECK(sparse_candidates(64).size() == expect);
}

TEST_CASE("sparse_candidates keeps diagonal and full span") {
  for (std::int64_t n : {1, 4, 16, 24, 64, 100}) {
    const auto cands = sparse_candidates(n);
    auto has = [&](std::int64_t x, std::int64_t y) {
      return std::find(cands.begin(), cands.end(), std::make_pair(x, y)) != cands.end();
    };
    for (std::int64_t i = 0; i < n; ++i) CHECK(has(i, i));
    CHECK(has(0, n - 1));
  }
}

TEST_CASE("to_seconds on the identity scale") {
  ScaleConfig sc{{8}, 4, 4.0};  // 1 clip = 1 second
  CHECK(to_seconds({0, 0, 0}, sc, 8) == Interval{0.0, 1.0});
  CHECK(to_seconds({0, 0, 7}, sc, 8) == Interval{0.0, 8.0});  // whole video
}

TEST_CASE("to_seconds uses group bounds of coarser scales") {
  ScaleConfig sc{{4, 2}, 4, 4.0};
  // scale 1 pools base clips {0,1} and {2,3}
  CHECK(to_seconds({1, 1, 1}, sc, 4) == Interval{2.0, 4.0});
  CHECK(to_seconds({1, 0, 0}, sc, 4) == Interval{0.0, 2.0});
}

TEST_CASE("to_seconds rejects bad candidates") {
  ScaleConfig sc{{4}, 4, 4.0};
  CHECK_THROWS_AS(to_seconds({0, 2, 1}, sc, 4), IndexError);
  CHECK_THROWS_AS(to_seconds({1, 0, 0}, sc, 4), IndexError);
  CHECK_THROWS_AS(to_seconds({0, 0, 3}, sc, 2), IndexError);  // padded rows
}

TEST_CASE("to_seconds is monotone and tiles the video on the diagonal") {
  ScaleConfig sc{{16, 8, 4}, 4, 2.0};
  const std::int64_t n = 16;
  for (std::int64_t j = 0; j < sc.num_scales(); ++j) {
    const std::int64_t nj = sc.scales[static_cast<std::size_t>(j)];
    for (std::int64_t x = 0; x < nj; ++x) {
      double prev_end = -1.0;
      for (std::int64_t y = x; y < nj; ++y) {
        const auto [s, e] = to_seconds({j, x, y}, sc, n);
        CHECK(s < e);
        CHECK(e >= prev_end);
        prev_end = e;
      }
    }
  }
  // identity scale: diagonal candidates tile [0, N * spc] exactly
  double cursor = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto [s, e] = to_seconds({0, i, i}, sc, n);
    CHECK(s == doctest::Approx(cursor).epsilon(1e-12));
    cursor = e;
  }
  CHECK(cursor == doctest::Approx(n * sc.seconds_per_clip()).epsilon(1e-12));
}

TEST_CASE("short videos mark padded candidates invalid") {
  ScaleConfig sc{{4}, 4, 4.0};
  ClipGrid grid = multi_scale_sample(column({1, 2, 3}), sc);
  TemporalMap map = build_map(grid, 0);
  CHECK_FALSE(map.is_valid(0, 3));
  CHECK_FALSE(map.is_valid(3, 3));
  CHECK(map.is_valid(0, 2));
  for (const auto& c : map.candidates) CHECK(c.end < 3);
}
