#include "lowbit/fp8_e4m3.hpp"

#include <cmath>
#include <limits>

#include "lowbit/error.hpp"

namespace lowbit::fp8 {

namespace {

constexpr int kBias = 7;
constexpr double kMinNormal = 0x1.0p-6;
constexpr double kSubnormalStep = 0x1.0p-9;

std::array<float, 256> build_table() {
  std::array<float, 256> t{};
  for (int c = 0; c < 256; ++c) {
    const int exp = (c >> 3) & 0xF;
    const int man = c & 0x7;
    float mag;
    if (exp == 0xF && man == 0x7) {
      mag = std::numeric_limits<float>::quiet_NaN();
    } else if (exp == 0) {
      mag = static_cast<float>(man * kSubnormalStep);
    } else {
      mag = static_cast<float>(std::ldexp(1.0 + man / 8.0, exp - kBias));
    }
    t[c] = (c & 0x80) ? -mag : mag;
  }
  return t;
}

}  // namespace

const std::array<float, 256>& decode_table() {
  static const std::array<float, 256> table = build_table();
  return table;
}

float decode(Code c) { return decode_table()[c.bits]; }

Code encode(double x) {
  if (std::isnan(x)) return kNaNCode;
  const std::uint8_t sign = std::signbit(x) ? 0x80 : 0x00;
  const double mag = std::abs(x);
  if (mag >= kMaxFinite) return Code{static_cast<std::uint8_t>(sign | kMaxCode.bits)};

  // Quantum of the binade containing mag; subnormals share the 2^-9 step.
  int e2 = 0;
  std::frexp(mag, &e2);  // mag = f * 2^e2, f in [0.5, 1)
  const int unbiased = e2 - 1;
  const double quantum = mag < kMinNormal ? kSubnormalStep : std::ldexp(1.0, unbiased - 3);
  // Scaling by a power of two is exact, so nearbyint sees the true ratio and
  // applies the default ties-to-even rule on the mantissa LSB.
  const double units = std::nearbyint(mag / quantum);
  const double rounded = units * quantum;

  if (rounded == 0.0) return Code{sign};
  if (rounded >= kMaxFinite) return Code{static_cast<std::uint8_t>(sign | kMaxCode.bits)};
  if (rounded < kMinNormal) return Code{static_cast<std::uint8_t>(sign | static_cast<int>(rounded / kSubnormalStep))};

  int re = 0;
  const double frac = std::frexp(rounded, &re);  // rounded = frac * 2^re
  const int exp = re - 1 + kBias;
  const int man = static_cast<int>((frac * 2.0 - 1.0) * 8.0);
  return Code{static_cast<std::uint8_t>(sign | (exp << 3) | man)};
}

float round_trip(double x) { return decode(encode(x)); }

Tensor qdq_tensor(const Tensor& t, float scale) {
  if (!(scale > 0.0f) || !std::isfinite(scale)) throw ValidationError("fp8 qdq: scale must be positive and finite");
  Tensor out = t;
  const double s = scale;
  for (auto& v : out.data()) v = static_cast<float>(static_cast<double>(round_trip(v / s)) * s);
  return out;
}

Tensor qdq_absmax(const Tensor& t) {
  const float m = max_abs(t.data());
  if (m == 0.0f) return t;
  return qdq_tensor(t, m / kMaxFinite);
}

}  // namespace lowbit::fp8
