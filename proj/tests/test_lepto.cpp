#include <cmath>

#include "doctest.h"
#include "lowbit/error.hpp"
#include "lowbit/lepto_quant.hpp"
#include "oracles.hpp"

using namespace lowbit;
using namespace lowbit::lepto;

namespace {

Block random_block(std::uint64_t seed, std::size_t n, std::size_t h) {
  return {generate({seed, Laplace{0.0, 0.1}}, {h, n}), generate({seed + 1, Laplace{0.0, 0.1}}, {n, h})};
}

}  // namespace

TEST_CASE("default grid") {
  const auto g = Config::default_grid(11);
  REQUIRE(g.size() == 11);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == doctest::Approx(0.001));
  CHECK(Config::default_grid(1) == std::vector<double>{0.0});
  Config bad;
  bad.alpha_grid = {0.0, 0.002};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.alpha_grid = {0.0005};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("outlier_denominator") {
  std::vector<float> v(1000);
  for (int i = 0; i < 1000; ++i) v[i] = static_cast<float>(i + 1);
  const Tensor t({1000}, v);
  CHECK(outlier_denominator(t, 0.0) == 1000.0f);
  CHECK(outlier_denominator(t, 0.001) == 999.0f);
  CHECK(outlier_denominator(t, 0.001) == oracle::nearest_rank_abs(v, 999));
  CHECK_THROWS_AS(outlier_denominator(t, 0.01), ValidationError);
  CHECK_THROWS_AS(outlier_denominator(t, -0.0001), ValidationError);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor r = generate({s, Laplace{0.0, 1.0}}, {4096});
    CHECK(outlier_denominator(r, 0.0) >= outlier_denominator(r, 0.0005));
    CHECK(outlier_denominator(r, 0.0005) >= outlier_denominator(r, 0.001));
  }
}

TEST_CASE("qdq_isolated") {
  const Tensor t({3}, {1.0f, -2.0f, 500.0f});
  const Tensor q = qdq_isolated(t, 448.0f);
  CHECK(q[0] == 1.0f);
  CHECK(q[1] == -2.0f);
  CHECK(q[2] == 448.0f);
  CHECK_THROWS_AS(qdq_isolated(t, 0.0f), ValidationError);
}

TEST_CASE("silu") {
  CHECK(silu(0.0f) == 0.0f);
  CHECK(silu(1.0f) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  CHECK(silu(-20.0f) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("block_forward shapes and zero input") {
  const Block b = random_block(3, 16, 8);
  const Tensor x = generate({9, Gaussian{}}, {16});
  CHECK(block_forward(b, x, std::nullopt).shape() == Shape{16});
  const Tensor xb = generate({9, Gaussian{}}, {4, 16});
  CHECK(block_forward(b, xb, 0.0).shape() == (Shape{4, 16}));
  CHECK(block_forward(b, Tensor({16}), 0.0) == Tensor({16}));
  CHECK_THROWS_AS(block_forward(b, Tensor({15}), 0.0), ValidationError);
  CHECK_THROWS_AS(block_forward({b.w1, b.w1}, x, 0.0), ValidationError);

  // row-by-row full precision matches the batch form
  const Tensor yb = block_forward(b, xb, std::nullopt);
  for (std::size_t r = 0; r < 4; ++r) {
    const Tensor xr({16}, std::vector<float>(xb.row(r).begin(), xb.row(r).end()));
    const Tensor yr = block_forward(b, xr, std::nullopt);
    for (std::size_t c = 0; c < 16; ++c) CHECK(yr[c] == yb.at(r, c));
  }
}

TEST_CASE("block_forward full precision against a double oracle") {
  const Block b = random_block(5, 12, 7);
  const Tensor x = generate({6, Gaussian{}}, {12});
  std::vector<double> h(7, 0.0), y(12, 0.0);
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t c = 0; c < 12; ++c) h[r] += double{b.w1.at(r, c)} * x[c];
    h[r] = h[r] / (1.0 + std::exp(-h[r]));
  }
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t c = 0; c < 7; ++c) y[r] += double{b.w2.at(r, c)} * h[c];
  CHECK(oracle::norm_rel_err(block_forward(b, x, std::nullopt), y) <= 1e-5);
}

TEST_CASE("grid_search") {
  const Block b = random_block(11, 32, 16);
  std::vector<Tensor> calib;
  for (std::uint64_t s = 0; s < 4; ++s) calib.push_back(generate({100 + s, Gaussian{}}, {8, 32}));
  Config cfg;
  cfg.n_samples = 4;
  const Result r = grid_search(b, calib, cfg);
  REQUIRE(r.losses.size() == 11);
  CHECK(r.alpha_star >= 0.0);
  CHECK(r.alpha_star <= 0.001);
  double best = r.losses[0].loss;
  for (const auto& p : r.losses) best = std::min(best, p.loss);
  CHECK(best <= r.losses[0].loss);
  for (const auto& p : r.losses)
    if (p.alpha == r.alpha_star) CHECK(p.loss == best);
  CHECK(r.scale == doctest::Approx(r.denominator / 448.0f));

  // each loss is reproducible from block_forward directly
  double l0 = 0.0;
  for (const auto& x : calib) l0 += mse(block_forward(b, x, std::nullopt), block_forward(b, x, 0.0));
  CHECK(r.losses[0].loss == doctest::Approx(l0 / calib.size()));

  CHECK_THROWS_AS(grid_search(b, {}, cfg), ValidationError);
  cfg.alpha_grid = {0.0, 0.5};
  CHECK_THROWS_AS(grid_search(b, calib, cfg), ValidationError);
}

TEST_CASE("grid_search ties keep the smaller alpha") {
  // 16 entries per sample: any alpha <= 0.001 keeps the max as denominator,
  // so every grid point has the same loss.
  const Block b = random_block(2, 4, 4);
  const std::vector<Tensor> calib{generate({1, Gaussian{}}, {4})};
  const Result r = grid_search(b, calib);
  CHECK(r.alpha_star == 0.0);
  for (const auto& p : r.losses) CHECK(p.loss == r.losses[0].loss);
}
