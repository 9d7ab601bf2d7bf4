#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "lowbit/tensor.hpp"
#include "lowbit/ternary.hpp"

namespace lowbit::sherry {

using Block = std::array<std::int8_t, 4>;
using Tl2Block = std::array<std::int8_t, 3>;

inline constexpr unsigned kCodeBits = 5;
inline constexpr std::size_t kNumCodes = 32;
inline constexpr float kDefaultLambda0 = 0.5f;

// 3:4 sparse ternary: every block of four weights has exactly one zero.
// Code layout: zero_position * 8 + sign bits of the three nonzeros in index
// order, first nonzero in the most significant bit, +1 -> 1 and -1 -> 0.

/// Zero the smallest |w| (lowest index on ties); the rest become sign(w)
/// with sign(0) = +1.
Block project_3of4(std::span<const float, 4> w);

std::uint8_t encode_block(const Block& b);
Block decode_block(std::uint8_t code);

/// The 32-entry decode table.
const std::array<Block, kNumCodes>& code_table();

struct SherryTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;  // multiple of 4
  std::vector<std::uint8_t> codestream;  // rows * cols/4 five-bit codes, LSB-first
  std::vector<float> alpha;              // per row

  std::size_t blocks_per_row() const { return cols / 4; }
  std::uint8_t code(std::size_t r, std::size_t block) const;
  std::uint64_t payload_bits() const { return std::uint64_t{rows} * blocks_per_row() * kCodeBits; }

  /// Decoded sign matrix, rows x cols, values in {-1, 0, +1}.
  Tensor decode_signs() const;
  Tensor dequantize() const;

  friend bool operator==(const SherryTensor&, const SherryTensor&) = default;
};

/// Per-row: project every 4-block, alpha = mean|w| over retained positions.
SherryTensor sherry_quantize(const Tensor& w);

/// Per-row decode-and-accumulate reference kernel. Each block contributes
/// (t0 x0 + t1 x1 + t2 x2 + t3 x3) to a running single-precision sum; the
/// row sum is then scaled by alpha. Rows run in parallel.
Tensor naive_matvec(const SherryTensor& q, const Tensor& x);

/// Per input vector, build a table holding, for each group of four
/// activations, the block sum for all 32 codes; each row then adds one
/// table entry per block. Rows run in parallel after a serial table build.
Tensor lut_matvec(const SherryTensor& q, const Tensor& x);

/// The lookup table used by lut_matvec: (n/4) x 32, row g holds the sums
/// for activation group g.
std::vector<float> build_lut(const Tensor& x);

namespace serial {
Tensor naive_matvec(const SherryTensor& q, const Tensor& x);
Tensor lut_matvec(const SherryTensor& q, const Tensor& x);
}  // namespace serial

// ---------------------------------------------------------------------------
// 1.67-bit comparator: three ternary weights per 5-bit base-3 code.

std::uint8_t encode_tl2_block(const Tl2Block& b);
Tl2Block decode_tl2_block(std::uint8_t code);

/// Ternary weights packed three per 5-bit code over the row-major flattened
/// tensor; a trailing partial group is padded with zeros.
struct Tl2Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> codestream;
  std::vector<float> alpha;
  std::vector<float> delta;

  std::size_t group_count() const { return (rows * cols + 2) / 3; }
  std::uint64_t payload_bits() const { return std::uint64_t{group_count()} * kCodeBits; }
  std::vector<std::int8_t> decode_signs() const;
  Tensor dequantize() const;

  friend bool operator==(const Tl2Tensor&, const Tl2Tensor&) = default;
};

Tl2Tensor tl2_pack(const ternary::TernaryTensor& q);
Tl2Tensor tl2_quantize(const Tensor& w);
Tensor tl2_matvec(const Tl2Tensor& q, const Tensor& x);

// ---------------------------------------------------------------------------
// Annealed residual training surrogate: Y = X Q(W) + lambda_t X W.

struct ArenasSchedule {
  float lambda0 = kDefaultLambda0;
  std::size_t total_steps = 1;
  void validate() const;
};

/// lambda0 * (1 - t / T); exactly 0 at t = T.
float anneal_lambda(std::size_t t, const ArenasSchedule& sched);

Tensor arenas_forward(const Tensor& x, const SherryTensor& q, const Tensor& w, std::size_t t,
                      const ArenasSchedule& sched);

/// STE through Q(W) plus the exact gradient of the residual term:
/// (1 + lambda_t) * dY[r] * x[c].
Tensor arenas_grad(const Tensor& x, const Tensor& dl_dy, std::size_t t, const ArenasSchedule& sched);

}  // namespace lowbit::sherry
