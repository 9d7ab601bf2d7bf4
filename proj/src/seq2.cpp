#include "lowbit/seq2.hpp"

#include <cmath>

#include "lowbit/bitpack.hpp"
#include "lowbit/error.hpp"

namespace lowbit::seq2 {

std::uint8_t quantize_value(float w, float scale) {
  if (w >= scale) return 3;
  if (w >= 0.0f) return 2;
  if (w > -scale) return 1;
  return 0;
}

std::uint8_t SeqTensor::code(std::size_t r, std::size_t c) const {
  return read_code(packed, r * cols + c, kCodeBits);
}

Tensor SeqTensor::dequantize() const {
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = kLevels[code(r, c)] * scale[r];
  return out;
}

float initial_scale(std::span<const float> row) {
  const float m = max_abs(row);
  return m == 0.0f ? 1.0f : m / 1.5f;
}

double row_mse(std::span<const float> row, float scale) {
  if (row.empty()) return 0.0;
  double acc = 0.0;
  for (float w : row) {
    const double d = double{w} - double{kLevels[quantize_value(w, scale)] * scale};
    acc += d * d;
  }
  return acc / static_cast<double>(row.size());
}

const std::array<float, 15>& micro_tune_grid() {
  static const auto grid = [] {
    std::array<float, 15> g{};
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(50 + 5 * static_cast<int>(i)) / 100.0f;
    return g;
  }();
  return grid;
}

float micro_tune_scale(std::span<const float> row, float s0) {
  if (!(s0 > 0.0f)) throw ValidationError("micro_tune_scale: s0 must be > 0");
  // Largest k first; only a strict improvement moves to a smaller k.
  const auto& grid = micro_tune_grid();
  float best_scale = 0.0f;
  double best = 0.0;
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
    const float s = s0 * *it;
    const double e = row_mse(row, s);
    if (best_scale == 0.0f || e < best) {
      best = e;
      best_scale = s;
    }
  }
  return best_scale;
}

SeqTensor seq_quantize_with_scales(const Tensor& w, std::span<const float> scales) {
  if (w.ndim() != 1 && w.ndim() != 2) throw ValidationError("seq_quantize: expected a 1-D or 2-D tensor");
  if (scales.size() != w.rows()) throw ValidationError("seq_quantize: one scale per row required");
  SeqTensor q;
  q.rows = w.rows();
  q.cols = w.cols();
  q.scale.assign(scales.begin(), scales.end());
  std::vector<std::uint8_t> codes;
  codes.reserve(w.size());
  for (std::size_t r = 0; r < q.rows; ++r) {
    if (!(q.scale[r] > 0.0f)) throw ValidationError("seq_quantize: scales must be > 0");
    for (float v : w.row(r)) codes.push_back(quantize_value(v, q.scale[r]));
  }
  q.packed = pack_codes(codes, kCodeBits);
  return q;
}

SeqTensor seq_quantize(const Tensor& w, bool micro_tune) {
  std::vector<float> scales(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    auto row = w.row(r);
    scales[r] = initial_scale(row);
    if (micro_tune && max_abs(row) > 0.0f) scales[r] = micro_tune_scale(row, scales[r]);
  }
  return seq_quantize_with_scales(w, scales);
}

namespace {

float seq_row(const SeqTensor& q, std::size_t r, const float* x) {
  // sums[code] accumulates x over entries carrying that code.
  float sums[4] = {0.0f, 0.0f, 0.0f, 0.0f};
  for (std::size_t c = 0; c < q.cols; ++c) sums[q.code(r, c)] += x[c];
  return q.scale[r] * (1.5f * (sums[3] - sums[0]) + 0.5f * (sums[2] - sums[1]));
}

}  // namespace

namespace serial {

Tensor seq_matvec(const SeqTensor& q, const Tensor& x) {
  if (x.size() != q.cols) throw ValidationError("seq_matvec: shape mismatch");
  Tensor y({q.rows});
  for (std::size_t r = 0; r < q.rows; ++r) y[r] = seq_row(q, r, x.data().data());
  return y;
}

}  // namespace serial

Tensor seq_matvec(const SeqTensor& q, const Tensor& x) {
  if (x.size() != q.cols) throw ValidationError("seq_matvec: shape mismatch");
  Tensor y({q.rows});
  const auto m = static_cast<std::ptrdiff_t>(q.rows);
  const float* xs = x.data().data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < m; ++r) y[static_cast<std::size_t>(r)] = seq_row(q, static_cast<std::size_t>(r), xs);
  return y;
}

std::array<std::uint8_t, 4> unpack_byte(std::uint8_t byte) {
  return {static_cast<std::uint8_t>(byte & 3), static_cast<std::uint8_t>((byte >> 2) & 3),
          static_cast<std::uint8_t>((byte >> 4) & 3), static_cast<std::uint8_t>((byte >> 6) & 3)};
}

std::uint8_t pack_byte(const std::array<std::uint8_t, 4>& codes) {
  return static_cast<std::uint8_t>((codes[0] & 3) | ((codes[1] & 3) << 2) | ((codes[2] & 3) << 4) |
                                   ((codes[3] & 3) << 6));
}

}  // namespace lowbit::seq2
