#include <cmath>

#include "doctest.h"
#include "lowbit/error.hpp"
#include "lowbit/ternary.hpp"

using namespace lowbit;
using namespace lowbit::ternary;

namespace {

const Tensor kRow({1, 4}, {0.9f, -0.8f, 0.05f, 0.5f});

// Surrogate loss sum_{b,r} G[b,r] * Y[b,r] where Q is replaced by the identity
// (the STE view) and the deadzone mask is frozen. Evaluated in double.
double surrogate_loss(const std::vector<double>& w, const Tensor& x, const TernaryTensor& q, const Tensor& g) {
  double loss = 0.0;
  for (std::size_t b = 0; b < x.rows(); ++b)
    for (std::size_t r = 0; r < q.rows; ++r) {
      double y = 0.0;
      for (std::size_t c = 0; c < q.cols; ++c) {
        y += w[r * q.cols + c] * x.at(b, c);
        if (q.in_deadzone(r, c)) y += double{q.lambda} * w[r * q.cols + c];
      }
      loss += double{g.at(b, r)} * y;
    }
  return loss;
}

double fd_max_rel_err(std::uint64_t seed, std::size_t m, std::size_t n, std::size_t batch) {
  const Tensor w = generate({seed, Gaussian{0.0, 1.0}}, {m, n});
  const Tensor x = generate({seed + 100, Gaussian{0.0, 1.0}}, {batch, n});
  const Tensor g = generate({seed + 200, Gaussian{0.0, 1.0}}, {batch, m});
  const TernaryTensor q = ternarize(w, 0.1f);
  const Tensor grad = tequila_grad(x, q, w, g);

  std::vector<double> wd(w.data().begin(), w.data().end());
  const double h = 1e-3;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < wd.size(); ++i) {
    const double keep = wd[i];
    wd[i] = keep + h;
    const double up = surrogate_loss(wd, x, q, g);
    wd[i] = keep - h;
    const double down = surrogate_loss(wd, x, q, g);
    wd[i] = keep;
    const double fd = (up - down) / (2 * h);
    num = std::max(num, std::abs(fd - grad[i]));
    den = std::max(den, std::abs(fd));
  }
  return num / den;
}

}  // namespace

TEST_CASE("compute_threshold") {
  CHECK(compute_threshold(kRow.row(0)) == doctest::Approx(0.39375).epsilon(1e-6));
  const std::vector<float> zeros(5, 0.0f);
  CHECK(compute_threshold(zeros) == 0.0f);
  const std::vector<float> scaled{1.8f, -1.6f, 0.1f, 1.0f};
  CHECK(compute_threshold(scaled) == doctest::Approx(2 * 0.39375).epsilon(1e-6));
}

TEST_CASE("ternarize example row") {
  const TernaryTensor q = ternarize(kRow);
  CHECK(q.signs == std::vector<std::int8_t>{1, -1, 0, 1});
  CHECK(q.deadzone == std::vector<std::uint8_t>{0, 0, 1, 0});
  CHECK(q.alpha[0] == doctest::Approx(2.2 / 3).epsilon(1e-6));
  CHECK(deadzone_fraction(q) == 0.25);
}

TEST_CASE("ternarize degenerate and boundary rows") {
  const TernaryTensor z = ternarize(Tensor({1, 4}));
  CHECK(z.signs == std::vector<std::int8_t>(4, 0));
  CHECK(z.alpha[0] == 0.0f);
  CHECK(deadzone_fraction(z) == 1.0);

  // |w| == delta lands on +-1. Iterate v -> threshold([v, -v, 1, 0.3]) to a
  // float fixed point so that the row contains its own threshold exactly.
  float v = 0.35f;
  bool fixed = false;
  for (int i = 0; i < 100 && !fixed; ++i) {
    const std::vector<float> row{v, -v, 1.0f, 0.3f};
    const float d = compute_threshold(row);
    fixed = d == v;
    v = d;
  }
  REQUIRE(fixed);
  const TernaryTensor q = ternarize(Tensor({1, 4}, {v, -v, 1.0f, 0.3f}));
  CHECK(q.delta[0] == v);
  CHECK(q.signs == std::vector<std::int8_t>{1, -1, 1, 0});
}

TEST_CASE("ternarize properties on random tensors") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Tensor w = generate({s, Laplace{0.0, 0.5}}, {6, 17});
    const TernaryTensor q = ternarize(w);

    Tensor neg = w;
    for (auto& v : neg.data()) v = -v;
    const TernaryTensor qn = ternarize(neg);
    for (std::size_t i = 0; i < q.signs.size(); ++i) CHECK(qn.signs[i] == -q.signs[i]);
    CHECK(qn.alpha == q.alpha);
    CHECK(qn.delta == q.delta);

    Tensor scaled = w;
    for (auto& v : scaled.data()) v *= 4.0f;  // power of two keeps float ops exact
    CHECK(ternarize(scaled).signs == q.signs);

    // dequantized tensor is a fixed point
    CHECK(ternarize(q.dequantize()).signs == q.signs);

    for (std::size_t i = 0; i < q.signs.size(); ++i) CHECK((q.signs[i] == 0) == (q.deadzone[i] == 1));
  }
}

TEST_CASE("tequila_forward example") {
  const TernaryTensor q = ternarize(kRow, 0.1f);
  const Tensor y = tequila_forward(Tensor({1, 4}, {1, 1, 1, 1}), q, kRow);
  CHECK(y.at(0, 0) == doctest::Approx(0.73833333).epsilon(1e-6));

  const TernaryTensor q0 = ternarize(kRow, 0.0f);
  const Tensor x = generate({4, Gaussian{}}, {3, 4});
  CHECK(tequila_forward(x, q0, kRow) == ternary_forward(x, q0, {}));
  CHECK_THROWS_AS(tequila_forward(Tensor({1, 3}), q, kRow), ValidationError);
  CHECK_THROWS_AS(tequila_forward(x, q, Tensor({2, 4})), ValidationError);
}

TEST_CASE("fold_bias") {
  const TernaryTensor q = ternarize(kRow, 0.1f);
  const auto b = fold_bias(q, kRow);
  REQUIRE(b.size() == 1);
  CHECK(b[0] == doctest::Approx(0.005).epsilon(1e-6));

  const Tensor dense({1, 4}, {1.0f, -1.0f, 1.0f, -1.0f});
  CHECK(fold_bias(ternarize(dense), dense) == std::vector<float>{0.0f});

  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor w = generate({s, Gaussian{}}, {5, 8});
    const Tensor x = generate({s + 50, Gaussian{}}, {4, 8});
    const TernaryTensor qq = ternarize(w, 0.3f);
    CHECK(ternary_forward(x, qq, fold_bias(qq, w)) == tequila_forward(x, qq, w));
  }
}

TEST_CASE("tequila_grad special cases") {
  const Tensor w = generate({1, Gaussian{}}, {4, 3});
  const Tensor x = generate({2, Gaussian{}}, {5, 3});
  const TernaryTensor q = ternarize(w, 0.2f);
  const Tensor zero({5, 4});
  const Tensor g0 = tequila_grad(x, q, w, zero);
  for (float v : g0.data()) CHECK(v == 0.0f);

  const Tensor dy = generate({3, Gaussian{}}, {5, 4});
  const TernaryTensor qste = ternarize(w, 0.0f);
  const Tensor ste = tequila_grad(x, qste, w, dy);
  const Tensor teq = tequila_grad(x, q, w, dy);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      double gsum = 0;
      for (std::size_t b = 0; b < 5; ++b) gsum += dy.at(b, r);
      const double extra = q.in_deadzone(r, c) ? 0.2 * gsum : 0.0;
      CHECK(teq.at(r, c) == doctest::Approx(ste.at(r, c) + extra).epsilon(1e-5));
    }
  CHECK_THROWS_AS(tequila_grad(x, q, w, Tensor({5, 3})), ValidationError);
}

TEST_CASE("tequila_grad matches central finite differences") {
  // loss = sum(Y) on a 4x3 layer, then random upstream gradients.
  {
    const Tensor w = generate({11, Gaussian{}}, {4, 3});
    const Tensor x = generate({12, Gaussian{}}, {2, 3});
    const TernaryTensor q = ternarize(w, 0.1f);
    Tensor ones({2, 4});
    for (auto& v : ones.data()) v = 1.0f;
    const Tensor grad = tequila_grad(x, q, w, ones);
    std::vector<double> wd(w.data().begin(), w.data().end());
    for (std::size_t i = 0; i < wd.size(); ++i) {
      const double keep = wd[i];
      wd[i] = keep + 1e-3;
      const double up = surrogate_loss(wd, x, q, ones);
      wd[i] = keep - 1e-3;
      const double down = surrogate_loss(wd, x, q, ones);
      wd[i] = keep;
      CHECK(std::abs((up - down) / 2e-3 - grad[i]) <= 1e-4 * std::max(1.0, std::abs(double{grad[i]})));
    }
  }
  for (std::uint64_t s = 0; s < 10; ++s) CHECK(fd_max_rel_err(s, 4, 3, 3) <= 1e-4);
}

TEST_CASE("train_toy basics") {
  CHECK_THROWS_AS(train_toy({}, 0, 0.1f, 0.1f, TrainMode::Ste), ValidationError);
  CHECK_THROWS_AS(train_toy({}, 5, 0.0f, 0.1f, TrainMode::Ste), ValidationError);
  ToyTask task;
  task.out_dim = 4;
  task.in_dim = 8;
  task.batch = 16;
  const auto a = train_toy(task, 25, 0.05f, 0.1f, TrainMode::Tequila);
  const auto b = train_toy(task, 25, 0.05f, 0.1f, TrainMode::Tequila);
  CHECK(a.steps.size() == 25);
  CHECK(a.final_weights == b.final_weights);
  for (const auto& s : a.steps) {
    CHECK(s.deadzone_fraction >= 0.0);
    CHECK(s.deadzone_fraction <= 1.0);
  }
}
