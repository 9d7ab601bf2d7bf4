#include "lowbit/lepto_quant.hpp"

#include <cmath>

#include "lowbit/error.hpp"

namespace lowbit::lepto {

std::vector<double> Config::default_grid(std::size_t points) {
  if (points < 1) throw ValidationError("alpha grid needs at least one point");
  std::vector<double> g(points, 0.0);
  for (std::size_t i = 1; i < points; ++i)
    g[i] = 0.001 * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

void Config::validate() const {
  if (alpha_grid.empty() || alpha_grid.front() != 0.0) throw ValidationError("alpha grid must start at 0");
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    if (alpha_grid[i] < 0.0 || alpha_grid[i] > 0.001) throw ValidationError("alpha grid values must lie in [0, 0.001]");
    if (i > 0 && !(alpha_grid[i] > alpha_grid[i - 1])) throw ValidationError("alpha grid must be strictly increasing");
  }
  if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
  if (!(fp8_max > 0)) throw ValidationError("fp8_max must be positive");
}

void Block::validate() const {
  if (w1.ndim() != 2 || w2.ndim() != 2) throw ValidationError("block weights must be 2-D");
  if (w2.rows() != w1.cols() || w2.cols() != w1.rows()) throw ValidationError("block: w1 is h x n, w2 must be n x h");
}

float outlier_denominator(const Tensor& t, double alpha) {
  if (t.empty()) throw ValidationError("outlier_denominator: empty tensor");
  if (!(alpha >= 0.0 && alpha <= 0.001)) throw ValidationError("alpha must lie in [0, 0.001]");
  if (alpha == 0.0) return max_abs(t.data());
  return quantile_abs(t, 1.0 - alpha);
}

Tensor qdq_isolated(const Tensor& t, float denominator, float fp8_max) {
  if (!(denominator > 0.0f)) throw ValidationError("qdq_isolated: denominator must be positive");
  return fp8::qdq_tensor(t, denominator / fp8_max);
}

float silu(float v) { return static_cast<float>(v / (1.0 + std::exp(-static_cast<double>(v)))); }

namespace {

// Batch matmul: out[b, r] = sum_c w[r, c] * x[b, c].
Tensor batch_matvec(const Tensor& w, const Tensor& x) {
  const std::size_t batch = x.rows();
  Tensor out = x.ndim() == 1 ? Tensor({w.rows()}) : Tensor({batch, w.rows()});
  for (std::size_t b = 0; b < batch; ++b) {
    auto xr = x.row(b);
    for (std::size_t r = 0; r < w.rows(); ++r) {
      auto wr = w.row(r);
      float acc = 0.0f;
      for (std::size_t c = 0; c < wr.size(); ++c) acc += wr[c] * xr[c];
      out.at(b, r) = acc;
    }
  }
  return out;
}

// An all-zero activation has no usable denominator; it passes through exactly.
Tensor quantize_activation(const Tensor& a, double alpha, float fp8_max) {
  const float d = outlier_denominator(a, alpha);
  if (d == 0.0f) return a;
  return qdq_isolated(a, d, fp8_max);
}

}  // namespace

Tensor block_forward(const Block& block, const Tensor& x, std::optional<double> alpha, float fp8_max) {
  block.validate();
  if (x.cols() != block.in_dim() || x.ndim() > 2) throw ValidationError("block_forward: input shape mismatch");

  if (!alpha) {
    Tensor h = batch_matvec(block.w1, x);
    for (auto& v : h.data()) v = silu(v);
    return batch_matvec(block.w2, h);
  }

  const Tensor w1q = fp8::qdq_absmax(block.w1);
  const Tensor w2q = fp8::qdq_absmax(block.w2);
  Tensor h = batch_matvec(w1q, quantize_activation(x, *alpha, fp8_max));
  for (auto& v : h.data()) v = silu(v);
  return batch_matvec(w2q, quantize_activation(h, *alpha, fp8_max));
}

Result grid_search(const Block& block, const std::vector<Tensor>& calib, const Config& cfg) {
  cfg.validate();
  block.validate();
  if (calib.empty()) throw ValidationError("grid_search: empty calibration set");

  std::vector<Tensor> reference;
  reference.reserve(calib.size());
  for (const auto& x : calib) reference.push_back(block_forward(block, x, std::nullopt, cfg.fp8_max));

  const auto points = static_cast<std::ptrdiff_t>(cfg.alpha_grid.size());
  std::vector<double> losses(cfg.alpha_grid.size(), 0.0);
  // Each grid point is independent; per-point sums run in sample order.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < points; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    double total = 0.0;
    for (std::size_t s = 0; s < calib.size(); ++s)
      total += mse(reference[s], block_forward(block, calib[s], cfg.alpha_grid[idx], cfg.fp8_max));
    losses[idx] = total / static_cast<double>(calib.size());
  }

  Result res;
  std::size_t best = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    res.losses.push_back({cfg.alpha_grid[i], losses[i]});
    if (losses[i] < losses[best]) best = i;
  }
  res.alpha_star = cfg.alpha_grid[best];

  std::size_t total = 0;
  for (const auto& x : calib) total += x.size();
  std::vector<float> pooled;
  pooled.reserve(total);
  for (const auto& x : calib) pooled.insert(pooled.end(), x.data().begin(), x.data().end());
  const Shape pooled_shape{pooled.size()};
  res.denominator = outlier_denominator(Tensor(pooled_shape, std::move(pooled)), res.alpha_star);
  res.scale = res.denominator / cfg.fp8_max;
  return res;
}

}  // namespace lowbit::lepto
