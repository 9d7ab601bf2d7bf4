#pragma once

#include <optional>
#include <vector>

#include "lowbit/fp8_e4m3.hpp"
#include "lowbit/tensor.hpp"

namespace lowbit::lepto {

struct Config {
  std::vector<double> alpha_grid = default_grid(11);
  std::size_t n_samples = 16;
  float fp8_max = fp8::kMaxFinite;

  /// `points` evenly spaced fractions from 0 to 0.001 inclusive.
  static std::vector<double> default_grid(std::size_t points);
  void validate() const;
};

/// Two-matmul FFN block: x[n] -> silu(w1 x)[h] -> w2 (.)[n].
struct Block {
  Tensor w1;  // h x n
  Tensor w2;  // n x h
  void validate() const;
  std::size_t in_dim() const { return w1.cols(); }
  std::size_t hidden_dim() const { return w1.rows(); }
};

struct LossPoint {
  double alpha = 0.0;
  double loss = 0.0;
};

struct Result {
  double alpha_star = 0.0;
  // Outlier denominator at alpha_star over the pooled calibration inputs.
  float denominator = 0.0f;
  float scale = 0.0f;  // denominator / fp8_max
  std::vector<LossPoint> losses;
};

/// (1 - alpha) nearest-rank quantile of |t|; alpha = 0 gives max|t|.
float outlier_denominator(const Tensor& t, double alpha);

/// FP8 QDQ with scale D / fp8_max; values beyond D saturate to about +-D.
Tensor qdq_isolated(const Tensor& t, float denominator, float fp8_max = fp8::kMaxFinite);

float silu(float v);

/// Forward pass of the block. `x` is either one vector [n] or a batch of
/// token rows [b x n]; the output has the same shape. With an alpha, each
/// activation tensor entering a matmul is QDQ'd with its own outlier
/// denominator at that fraction and weights use per-tensor abs-max FP8.
/// Without one the forward runs in plain single precision.
Tensor block_forward(const Block& block, const Tensor& x, std::optional<double> alpha,
                     float fp8_max = fp8::kMaxFinite);

/// Exhaustive search over cfg.alpha_grid minimising the mean calibration MSE
/// against the full-precision block output. Ties go to the smaller alpha.
Result grid_search(const Block& block, const std::vector<Tensor>& calib, const Config& cfg = {});

}  // namespace lowbit::lepto
