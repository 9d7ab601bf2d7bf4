#include "lowbit/ternary.hpp"

#include <cmath>

#include "lowbit/error.hpp"

namespace lowbit::ternary {

float compute_threshold(std::span<const float> row) {
  if (row.empty()) return 0.0f;
  double sum = 0.0;
  for (float v : row) sum += std::abs(v);
  return static_cast<float>(0.7 * sum / static_cast<double>(row.size()));
}

TernaryTensor ternarize(const Tensor& w, float lambda) {
  if (w.ndim() != 1 && w.ndim() != 2) throw ValidationError("ternarize: expected a 1-D or 2-D tensor");
  if (!(lambda >= 0.0f)) throw ValidationError("lambda must be >= 0");
  TernaryTensor q;
  q.rows = w.rows();
  q.cols = w.cols();
  q.lambda = lambda;
  q.signs.assign(q.rows * q.cols, 0);
  q.deadzone.assign(q.rows * q.cols, 1);
  q.alpha.assign(q.rows, 0.0f);
  q.delta.assign(q.rows, 0.0f);

  for (std::size_t r = 0; r < q.rows; ++r) {
    auto row = w.row(r);
    const float delta = compute_threshold(row);
    q.delta[r] = delta;
    if (delta == 0.0f) continue;  // all-zero row: whole row in the deadzone
    double kept_sum = 0.0;
    std::size_t kept = 0;
    for (std::size_t c = 0; c < q.cols; ++c) {
      const float v = row[c];
      std::int8_t s = 0;
      if (v >= delta) s = 1;
      else if (v <= -delta) s = -1;
      q.signs[r * q.cols + c] = s;
      q.deadzone[r * q.cols + c] = s == 0 ? 1 : 0;
      if (s != 0) {
        kept_sum += std::abs(v);
        ++kept;
      }
    }
    q.alpha[r] = kept ? static_cast<float>(kept_sum / static_cast<double>(kept)) : 0.0f;
  }
  return q;
}

Tensor TernaryTensor::dequantize() const {
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = alpha[r] * static_cast<float>(sign(r, c));
  return out;
}

double deadzone_fraction(const TernaryTensor& q) {
  if (q.deadzone.empty()) return 0.0;
  std::size_t n = 0;
  for (auto d : q.deadzone) n += d;
  return static_cast<double>(n) / static_cast<double>(q.deadzone.size());
}

namespace {

void check_layer(const Tensor& x, const TernaryTensor& q) {
  if (x.ndim() > 2 || x.cols() != q.cols) throw ValidationError("ternary forward: input shape mismatch");
}

void check_latent(const TernaryTensor& q, const Tensor& w) {
  if (w.rows() != q.rows || w.cols() != q.cols || q.deadzone.size() != q.rows * q.cols)
    throw ValidationError("ternary: latent weights and mask disagree in shape");
}

Tensor output_like(const Tensor& x, std::size_t m) {
  return x.ndim() == 1 ? Tensor({m}) : Tensor({x.rows(), m});
}

}  // namespace

std::vector<float> fold_bias(const TernaryTensor& q, const Tensor& w) {
  check_latent(q, w);
  std::vector<float> bias(q.rows, 0.0f);
  for (std::size_t r = 0; r < q.rows; ++r) {
    float acc = 0.0f;
    for (std::size_t c = 0; c < q.cols; ++c)
      if (q.in_deadzone(r, c)) acc += w.at(r, c);
    bias[r] = q.lambda * acc;
  }
  return bias;
}

Tensor ternary_forward(const Tensor& x, const TernaryTensor& q, std::span<const float> bias) {
  check_layer(x, q);
  if (!bias.empty() && bias.size() != q.rows) throw ValidationError("ternary forward: bias length mismatch");
  Tensor y = output_like(x, q.rows);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    auto xr = x.row(b);
    for (std::size_t r = 0; r < q.rows; ++r) {
      float acc = 0.0f;
      for (std::size_t c = 0; c < q.cols; ++c) acc += static_cast<float>(q.sign(r, c)) * xr[c];
      float out = q.alpha[r] * acc;
      if (!bias.empty()) out += bias[r];
      y.at(b, r) = out;
    }
  }
  return y;
}

Tensor tequila_forward(const Tensor& x, const TernaryTensor& q, const Tensor& w) {
  check_layer(x, q);
  check_latent(q, w);
  const auto bias = fold_bias(q, w);
  return ternary_forward(x, q, bias);
}

Tensor tequila_grad(const Tensor& x, const TernaryTensor& q, const Tensor& w, const Tensor& dl_dy) {
  check_layer(x, q);
  check_latent(q, w);
  if (dl_dy.rows() != x.rows() || dl_dy.cols() != q.rows) throw ValidationError("tequila_grad: dL/dY shape mismatch");
  Tensor grad({q.rows, q.cols});
  for (std::size_t r = 0; r < q.rows; ++r) {
    double gsum = 0.0;
    for (std::size_t b = 0; b < x.rows(); ++b) gsum += dl_dy.at(b, r);
    for (std::size_t c = 0; c < q.cols; ++c) {
      double g = 0.0;
      for (std::size_t b = 0; b < x.rows(); ++b) g += double{x.at(b, c)} * dl_dy.at(b, r);
      if (q.in_deadzone(r, c)) g += double{q.lambda} * gsum;
      grad.at(r, c) = static_cast<float>(g);
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------

TrainTrace train_toy(const ToyTask& task, std::size_t steps, float lr, float lambda, TrainMode mode) {
  if (steps < 1) throw ValidationError("train_toy: steps must be >= 1");
  if (!(lr > 0.0f)) throw ValidationError("train_toy: lr must be > 0");
  if (task.out_dim == 0 || task.in_dim == 0 || task.batch == 0) throw ValidationError("train_toy: empty task");

  const std::size_t m = task.out_dim, n = task.in_dim, b = task.batch;
  // Teacher: ternary pattern with few zeros and per-entry jitter, so most
  // student weights should end up outside the deadzone.
  const Tensor pattern = generate({task.seed, Gaussian{0.0, 1.0}}, {m, n});
  const Tensor jitter = generate({task.seed + 1, Gaussian{0.0, 0.1}}, {m, n});
  Tensor teacher({m, n});
  for (std::size_t i = 0; i < m * n; ++i) {
    const float p = pattern[i];
    const float s = std::abs(p) < 0.15f ? 0.0f : (p > 0 ? 1.0f : -1.0f);
    teacher[i] = s * (1.0f + jitter[i]);
  }
  const Tensor teacher_bias = generate({task.seed + 4, Gaussian{0.0, task.teacher_bias_stdev}}, {m});
  const Tensor inputs = generate({task.seed + 2, Gaussian{task.input_mean, 1.0}}, {b, n});
  Tensor targets({b, m});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t r = 0; r < m; ++r) {
      float acc = teacher_bias[r];
      for (std::size_t c = 0; c < n; ++c) acc += teacher.at(r, c) * inputs.at(i, c);
      targets.at(i, r) = acc;
    }

  Tensor w = generate({task.seed + 3, Gaussian{0.0, 0.3}}, {m, n});
  const float layer_lambda = mode == TrainMode::Tequila ? lambda : 0.0f;

  TrainTrace trace;
  trace.steps.reserve(steps);
  Tensor dy({b, m});
  for (std::size_t step = 0; step < steps; ++step) {
    const TernaryTensor q = ternarize(w, layer_lambda);
    const Tensor y = tequila_forward(inputs, q, w);
    double loss = 0.0;
    const double norm = 1.0 / static_cast<double>(b * m);
    for (std::size_t i = 0; i < b * m; ++i) {
      const double d = double{y[i]} - targets[i];
      loss += d * d * norm;
      dy[i] = static_cast<float>(2.0 * d * norm);
    }
    trace.steps.push_back({loss, deadzone_fraction(q)});

    const Tensor g = tequila_grad(inputs, q, w, dy);
    for (std::size_t i = 0; i < m * n; ++i) w[i] -= lr * g[i];
  }
  trace.final_weights = std::move(w);
  return trace;
}

}  // namespace lowbit::ternary
