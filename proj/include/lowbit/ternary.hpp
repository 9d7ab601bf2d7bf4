#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lowbit/tensor.hpp"

namespace lowbit::ternary {

inline constexpr float kDefaultLambda = 0.1f;

/// Ternary weights with per-row scale and threshold. The deadzone mask is the
/// set of entries with |w| < delta at quantization time (equivalently, the
/// zero signs).
struct TernaryTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> signs;  // rows x cols, values in {-1, 0, +1}
  std::vector<float> alpha;        // per row
  std::vector<float> delta;        // per row
  std::vector<std::uint8_t> deadzone;  // rows x cols, 1 inside the deadzone
  float lambda = kDefaultLambda;

  std::int8_t sign(std::size_t r, std::size_t c) const { return signs[r * cols + c]; }
  bool in_deadzone(std::size_t r, std::size_t c) const { return deadzone[r * cols + c] != 0; }

  /// alpha[r] * signs[r, c] as a dense tensor.
  Tensor dequantize() const;

  friend bool operator==(const TernaryTensor&, const TernaryTensor&) = default;
};

/// 0.7 * mean|row|.
float compute_threshold(std::span<const float> row);

/// Per-row ternarization: w >= delta -> +1, w <= -delta -> -1, else 0.
/// alpha = mean|w| over the retained entries; all-zero rows get all-zero
/// signs and alpha = 0.
TernaryTensor ternarize(const Tensor& w, float lambda = kDefaultLambda);

/// |deadzone| / (rows * cols).
double deadzone_fraction(const TernaryTensor& q);

/// Y[b, r] = alpha_r * sum_c signs[r, c] x[b, c] + lambda * sum_{c in D_r} w[r, c].
/// x is [n] or [b x n]; the result is [m] or [b x m].
Tensor tequila_forward(const Tensor& x, const TernaryTensor& q, const Tensor& w);

/// Gradient of the loss with respect to the latent weights given dL/dY.
/// STE term sum_b x[b, c] dY[b, r] everywhere, plus lambda * sum_b dY[b, r]
/// on deadzone entries.
Tensor tequila_grad(const Tensor& x, const TernaryTensor& q, const Tensor& w, const Tensor& dl_dy);

/// b[r] = lambda * sum_{c in D_r} w[r, c].
std::vector<float> fold_bias(const TernaryTensor& q, const Tensor& w);

/// Inference with a folded bias: alpha_r * sum_c signs x + bias[r].
Tensor ternary_forward(const Tensor& x, const TernaryTensor& q, std::span<const float> bias);

// ---------------------------------------------------------------------------
// Toy QAT run used to compare plain STE against the deadzone bias surrogate.

enum class TrainMode { Ste, Tequila };

struct ToyTask {
  std::uint64_t seed = 1;
  std::size_t out_dim = 16;
  std::size_t in_dim = 32;
  std::size_t batch = 64;
  double input_mean = 1.0;
  double teacher_bias_stdev = 1.0;
};

struct TraceStep {
  double loss = 0.0;
  double deadzone_fraction = 0.0;
};

struct TrainTrace {
  std::vector<TraceStep> steps;
  Tensor final_weights;
};

/// Plain gradient descent on latent weights of a student layer regressing a
/// hidden full-precision teacher. The deadzone is recomputed every step.
/// In Ste mode lambda is ignored and the forward has no bias term.
TrainTrace train_toy(const ToyTask& task, std::size_t steps, float lr, float lambda, TrainMode mode);

}  // namespace lowbit::ternary
