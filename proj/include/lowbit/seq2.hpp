#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "lowbit/tensor.hpp"

namespace lowbit::seq2 {

// Two-bit codes: 0 -> -1.5, 1 -> -0.5, 2 -> +0.5, 3 -> +1.5 (times the row
// scale). There is no zero level.
inline constexpr std::array<float, 4> kLevels{-1.5f, -0.5f, 0.5f, 1.5f};
inline constexpr unsigned kCodeBits = 2;

/// Nearest level for w at scale s: boundaries at 0 and +-s, exact +-s goes
/// outward and 0 goes to +0.5.
std::uint8_t quantize_value(float w, float scale);

struct SeqTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> packed;  // 4 codes per byte, LSB-first, row-major
  std::vector<float> scale;          // per row

  std::uint8_t code(std::size_t r, std::size_t c) const;
  std::uint64_t payload_bits() const { return std::uint64_t{rows} * cols * kCodeBits; }
  Tensor dequantize() const;

  friend bool operator==(const SeqTensor&, const SeqTensor&) = default;
};

/// Per row: s0 = max|w| / 1.5 (s0 = 1 for an all-zero row), then optionally
/// micro-tuned.
SeqTensor seq_quantize(const Tensor& w, bool micro_tune = false);

/// Quantize with explicit per-row scales.
SeqTensor seq_quantize_with_scales(const Tensor& w, std::span<const float> scales);

float initial_scale(std::span<const float> row);

/// Mean squared error between the row and its dequantization at `scale`.
double row_mse(std::span<const float> row, float scale);

/// The 15 candidate multipliers 0.50, 0.55, ..., 1.20.
const std::array<float, 15>& micro_tune_grid();

/// Picks s0 * k over micro_tune_grid() minimising row_mse; ties go to the
/// larger k.
float micro_tune_scale(std::span<const float> row, float s0);

/// s_r * (1.5 * (sum x over +1.5 codes - sum x over -1.5 codes)
///        + 0.5 * (sum x over +0.5 codes - sum x over -0.5 codes)).
Tensor seq_matvec(const SeqTensor& q, const Tensor& x);

namespace serial {
Tensor seq_matvec(const SeqTensor& q, const Tensor& x);
}  // namespace serial

std::array<std::uint8_t, 4> unpack_byte(std::uint8_t byte);
std::uint8_t pack_byte(const std::array<std::uint8_t, 4>& codes);

}  // namespace lowbit::seq2
