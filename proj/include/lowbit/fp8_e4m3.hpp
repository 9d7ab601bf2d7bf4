#pragma once

#include <array>
#include <cstdint>

#include "lowbit/tensor.hpp"

namespace lowbit::fp8 {

// Finite-only E4M3: sign | 4-bit exponent (bias 7) | 3-bit mantissa.
// 0x7F and 0xFF are NaN, there are no infinities, and overflow saturates.
struct Code {
  std::uint8_t bits = 0;
  friend bool operator==(Code, Code) = default;
};

inline constexpr float kMaxFinite = 448.0f;
inline constexpr Code kMaxCode{0x7E};
inline constexpr Code kNaNCode{0x7F};

float decode(Code c);

/// Round to nearest, ties to even mantissa. |x| > 448 (including inf)
/// saturates to +-448; NaN maps to 0x7F; the sign of zero is kept.
Code encode(double x);

/// decode(encode(x)), returned as float.
float round_trip(double x);

/// All 256 decoded values, indexed by code.
const std::array<float, 256>& decode_table();

/// Elementwise decode(encode(t / scale)) * scale.
Tensor qdq_tensor(const Tensor& t, float scale);

/// qdq_tensor with the per-tensor abs-max scale max|t| / 448. An all-zero
/// tensor is returned unchanged.
Tensor qdq_absmax(const Tensor& t);

}  // namespace lowbit::fp8
