#include "lowbit/sherry.hpp"

#include <cmath>

#include "lowbit/bitpack.hpp"
#include "lowbit/error.hpp"

namespace lowbit::sherry {

Block project_3of4(std::span<const float, 4> w) {
  std::size_t zero = 0;
  for (std::size_t j = 1; j < 4; ++j)
    if (std::abs(w[j]) < std::abs(w[zero])) zero = j;
  Block b{};
  for (std::size_t j = 0; j < 4; ++j) b[j] = j == zero ? 0 : (w[j] < 0.0f ? -1 : 1);
  return b;
}

std::uint8_t encode_block(const Block& b) {
  int zero = -1;
  unsigned bits = 0;
  for (int j = 0; j < 4; ++j) {
    const auto v = b[static_cast<std::size_t>(j)];
    if (v == 0) {
      if (zero >= 0) throw ValidationError("sherry block must contain exactly one zero");
      zero = j;
    } else if (v == 1 || v == -1) {
      bits = (bits << 1) | (v == 1 ? 1u : 0u);
    } else {
      throw ValidationError("sherry block values must be in {-1, 0, +1}");
    }
  }
  if (zero < 0) throw ValidationError("sherry block must contain exactly one zero");
  return static_cast<std::uint8_t>(zero * 8 + static_cast<int>(bits));
}

namespace {

std::array<Block, kNumCodes> build_code_table() {
  std::array<Block, kNumCodes> t{};
  for (unsigned code = 0; code < kNumCodes; ++code) {
    const unsigned zero = code >> 3;
    unsigned bit = 2;
    for (unsigned j = 0; j < 4; ++j) {
      if (j == zero) continue;
      t[code][j] = ((code >> bit) & 1u) ? 1 : -1;
      --bit;
    }
  }
  return t;
}

// Same expression in the naive kernel and the table build, so both kernels
// round identically.
inline float block_sum(const Block& t, const float* x) {
  return static_cast<float>(t[0]) * x[0] + static_cast<float>(t[1]) * x[1] + static_cast<float>(t[2]) * x[2] +
         static_cast<float>(t[3]) * x[3];
}

void check_matvec(const SherryTensor& q, const Tensor& x) {
  if (x.size() != q.cols) throw ValidationError("sherry matvec: shape mismatch");
}

float naive_row(const SherryTensor& q, std::size_t r, const float* x) {
  const auto& table = code_table();
  const std::size_t nb = q.blocks_per_row();
  float acc = 0.0f;
  for (std::size_t k = 0; k < nb; ++k) acc += block_sum(table[read_code(q.codestream, r * nb + k, kCodeBits)], x + 4 * k);
  return q.alpha[r] * acc;
}

float lut_row(const SherryTensor& q, std::size_t r, const float* lut) {
  const std::size_t nb = q.blocks_per_row();
  float acc = 0.0f;
  for (std::size_t k = 0; k < nb; ++k) acc += lut[k * kNumCodes + read_code(q.codestream, r * nb + k, kCodeBits)];
  return q.alpha[r] * acc;
}

}  // namespace

const std::array<Block, kNumCodes>& code_table() {
  static const auto table = build_code_table();
  return table;
}

Block decode_block(std::uint8_t code) {
  if (code >= kNumCodes) throw ValidationError("sherry code out of range");
  return code_table()[code];
}

std::uint8_t SherryTensor::code(std::size_t r, std::size_t block) const {
  return read_code(codestream, r * blocks_per_row() + block, kCodeBits);
}

Tensor SherryTensor::decode_signs() const {
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < blocks_per_row(); ++k) {
      const Block& b = code_table()[code(r, k)];
      for (std::size_t j = 0; j < 4; ++j) out.at(r, 4 * k + j) = static_cast<float>(b[j]);
    }
  return out;
}

Tensor SherryTensor::dequantize() const {
  Tensor out = decode_signs();
  for (std::size_t r = 0; r < rows; ++r)
    for (auto& v : out.row(r)) v *= alpha[r];
  return out;
}

SherryTensor sherry_quantize(const Tensor& w) {
  if (w.ndim() != 1 && w.ndim() != 2) throw ValidationError("sherry_quantize: expected a 1-D or 2-D tensor");
  if (w.cols() % 4 != 0) throw ValidationError("sherry_quantize: columns not divisible by 4, pad or reshape required");
  SherryTensor q;
  q.rows = w.rows();
  q.cols = w.cols();
  q.alpha.assign(q.rows, 0.0f);
  std::vector<std::uint8_t> codes;
  codes.reserve(q.rows * q.blocks_per_row());
  for (std::size_t r = 0; r < q.rows; ++r) {
    auto row = w.row(r);
    double kept = 0.0;
    for (std::size_t k = 0; k < q.blocks_per_row(); ++k) {
      std::span<const float, 4> blk(row.data() + 4 * k, 4);
      const Block b = project_3of4(blk);
      for (std::size_t j = 0; j < 4; ++j)
        if (b[j] != 0) kept += std::abs(blk[j]);
      codes.push_back(encode_block(b));
    }
    const std::size_t retained = 3 * q.blocks_per_row();
    q.alpha[r] = retained ? static_cast<float>(kept / static_cast<double>(retained)) : 0.0f;
  }
  q.codestream = pack_codes(codes, kCodeBits);
  return q;
}

std::vector<float> build_lut(const Tensor& x) {
  if (x.size() % 4 != 0) throw ValidationError("build_lut: activation length not divisible by 4");
  const auto& table = code_table();
  const std::size_t groups = x.size() / 4;
  std::vector<float> lut(groups * kNumCodes);
  const float* xs = x.data().data();
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t code = 0; code < kNumCodes; ++code) lut[g * kNumCodes + code] = block_sum(table[code], xs + 4 * g);
  return lut;
}

namespace serial {

Tensor naive_matvec(const SherryTensor& q, const Tensor& x) {
  check_matvec(q, x);
  Tensor y({q.rows});
  for (std::size_t r = 0; r < q.rows; ++r) y[r] = naive_row(q, r, x.data().data());
  return y;
}

Tensor lut_matvec(const SherryTensor& q, const Tensor& x) {
  check_matvec(q, x);
  const auto lut = build_lut(x);
  Tensor y({q.rows});
  for (std::size_t r = 0; r < q.rows; ++r) y[r] = lut_row(q, r, lut.data());
  return y;
}

}  // namespace serial

Tensor naive_matvec(const SherryTensor& q, const Tensor& x) {
  check_matvec(q, x);
  Tensor y({q.rows});
  const auto m = static_cast<std::ptrdiff_t>(q.rows);
  const float* xs = x.data().data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < m; ++r) y[static_cast<std::size_t>(r)] = naive_row(q, static_cast<std::size_t>(r), xs);
  return y;
}

Tensor lut_matvec(const SherryTensor& q, const Tensor& x) {
  check_matvec(q, x);
  const auto lut = build_lut(x);
  Tensor y({q.rows});
  const auto m = static_cast<std::ptrdiff_t>(q.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < m; ++r)
    y[static_cast<std::size_t>(r)] = lut_row(q, static_cast<std::size_t>(r), lut.data());
  return y;
}

// ---------------------------------------------------------------------------

std::uint8_t encode_tl2_block(const Tl2Block& b) {
  unsigned code = 0, weight = 1;
  for (auto v : b) {
    if (v < -1 || v > 1) throw ValidationError("tl2 block values must be in {-1, 0, +1}");
    code += static_cast<unsigned>(v + 1) * weight;
    weight *= 3;
  }
  return static_cast<std::uint8_t>(code);
}

Tl2Block decode_tl2_block(std::uint8_t code) {
  if (code >= 27) throw ValidationError("tl2 code out of range");
  Tl2Block b{};
  unsigned c = code;
  for (auto& v : b) {
    v = static_cast<std::int8_t>(static_cast<int>(c % 3) - 1);
    c /= 3;
  }
  return b;
}

std::vector<std::int8_t> Tl2Tensor::decode_signs() const {
  const std::size_t n = rows * cols;
  std::vector<std::int8_t> signs(n);
  for (std::size_t g = 0; g < group_count(); ++g) {
    const Tl2Block b = decode_tl2_block(read_code(codestream, g, kCodeBits));
    for (std::size_t j = 0; j < 3 && 3 * g + j < n; ++j) signs[3 * g + j] = b[j];
  }
  return signs;
}

Tensor Tl2Tensor::dequantize() const {
  const auto signs = decode_signs();
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < signs.size(); ++i) out[i] = alpha[i / cols] * static_cast<float>(signs[i]);
  return out;
}

Tl2Tensor tl2_pack(const ternary::TernaryTensor& q) {
  Tl2Tensor t;
  t.rows = q.rows;
  t.cols = q.cols;
  t.alpha = q.alpha;
  t.delta = q.delta;
  std::vector<std::uint8_t> codes(t.group_count());
  const std::size_t n = q.signs.size();
  for (std::size_t g = 0; g < codes.size(); ++g) {
    Tl2Block b{};
    for (std::size_t j = 0; j < 3; ++j) b[j] = 3 * g + j < n ? q.signs[3 * g + j] : 0;
    codes[g] = encode_tl2_block(b);
  }
  t.codestream = pack_codes(codes, kCodeBits);
  return t;
}

Tl2Tensor tl2_quantize(const Tensor& w) { return tl2_pack(ternary::ternarize(w)); }

Tensor tl2_matvec(const Tl2Tensor& q, const Tensor& x) {
  if (x.size() != q.cols) throw ValidationError("tl2 matvec: shape mismatch");
  const auto signs = q.decode_signs();
  Tensor y({q.rows});
  for (std::size_t r = 0; r < q.rows; ++r) {
    float acc = 0.0f;
    for (std::size_t c = 0; c < q.cols; ++c) acc += static_cast<float>(signs[r * q.cols + c]) * x[c];
    y[r] = q.alpha[r] * acc;
  }
  return y;
}

// ---------------------------------------------------------------------------

void ArenasSchedule::validate() const {
  if (!(lambda0 > 0.0f)) throw ValidationError("arenas: lambda0 must be > 0");
  if (total_steps < 1) throw ValidationError("arenas: total_steps must be >= 1");
}

float anneal_lambda(std::size_t t, const ArenasSchedule& sched) {
  sched.validate();
  if (t > sched.total_steps) throw ValidationError("arenas: step beyond schedule end");
  if (t == sched.total_steps) return 0.0f;
  const double frac = static_cast<double>(t) / static_cast<double>(sched.total_steps);
  return static_cast<float>(static_cast<double>(sched.lambda0) * (1.0 - frac));
}

Tensor arenas_forward(const Tensor& x, const SherryTensor& q, const Tensor& w, std::size_t t,
                      const ArenasSchedule& sched) {
  const float lambda = anneal_lambda(t, sched);
  if (w.rows() != q.rows || w.cols() != q.cols) throw ValidationError("arenas: latent weights shape mismatch");
  Tensor y = naive_matvec(q, x);
  if (lambda == 0.0f) return y;
  const Tensor dense = matvec_dense(w, x);
  for (std::size_t r = 0; r < y.size(); ++r) y[r] += lambda * dense[r];
  return y;
}

Tensor arenas_grad(const Tensor& x, const Tensor& dl_dy, std::size_t t, const ArenasSchedule& sched) {
  const float gain = 1.0f + anneal_lambda(t, sched);
  Tensor g({dl_dy.size(), x.size()});
  for (std::size_t r = 0; r < dl_dy.size(); ++r)
    for (std::size_t c = 0; c < x.size(); ++c) g.at(r, c) = gain * dl_dy[r] * x[c];
  return g;
}

}  // namespace lowbit::sherry
