#include "lowbit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

#include "bytes.hpp"
#include "lowbit/error.hpp"

namespace lowbit {

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw ValidationError("empty shape");
  std::size_t n = 1;
  for (auto d : shape) {
    if (d == 0) throw ValidationError("shape dimensions must be >= 1");
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) throw ValidationError("data length does not match shape");
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : data_.size() / shape_.back();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t CounterRng::next_u64() { return splitmix64(key_ + 0x9E3779B97F4A7C15ull * counter_++); }

double CounterRng::next_unit() {
  // 53 random bits, centred in their cell so 0 and 1 are never returned.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

namespace {

double sample_laplace(CounterRng& rng, double location, double b) {
  const double u = rng.next_unit() - 0.5;
  const double mag = -b * std::log1p(-2.0 * std::abs(u));
  return u < 0 ? location - mag : location + mag;
}

double sample_gaussian(CounterRng& rng, double mean, double stdev) {
  const double u1 = rng.next_unit();
  const double u2 = rng.next_unit();
  return mean + stdev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

Tensor generate(const RngSpec& spec, const Shape& shape) {
  Tensor out(shape);
  auto data = out.data();
  CounterRng rng(spec.seed);

  if (const auto* g = std::get_if<Gaussian>(&spec.distribution)) {
    if (!(g->stdev >= 0)) throw ValidationError("gaussian stdev must be >= 0");
    for (auto& v : data) v = static_cast<float>(sample_gaussian(rng, g->mean, g->stdev));
  } else if (const auto* l = std::get_if<Laplace>(&spec.distribution)) {
    if (!(l->scale_b > 0)) throw ValidationError("laplace scale must be > 0");
    for (auto& v : data) v = static_cast<float>(sample_laplace(rng, l->location, l->scale_b));
  } else {
    const auto& lo = std::get<LaplaceOutlier>(spec.distribution);
    if (!(lo.scale_b > 0)) throw ValidationError("laplace scale must be > 0");
    if (!(lo.outlier_fraction >= 0 && lo.outlier_fraction <= 0.01))
      throw ValidationError("outlier_fraction must lie in [0, 0.01]");
    if (!(lo.outlier_multiplier >= 1)) throw ValidationError("outlier_multiplier must be >= 1");
    for (auto& v : data) v = static_cast<float>(sample_laplace(rng, lo.location, lo.scale_b));

    // Pick exactly round(f * N) distinct positions with a partial Fisher-Yates
    // shuffle driven by a second stream.
    const std::size_t n = data.size();
    const auto k = static_cast<std::size_t>(std::llround(lo.outlier_fraction * static_cast<double>(n)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    CounterRng pick(splitmix64(spec.seed ^ 0x6F75746C69657273ull));
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(pick.next_u64() % (n - i));
      std::swap(idx[i], idx[j]);
      data[idx[i]] = static_cast<float>(static_cast<double>(data[idx[i]]) * lo.outlier_multiplier);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_matvec(const Tensor& w, const Tensor& x) {
  if (w.ndim() != 2) throw ValidationError("matvec: weight must be 2-D");
  if (x.size() != w.cols()) throw ValidationError("matvec: shape mismatch");
}

inline float dot_row(std::span<const float> row, std::span<const float> x) {
  float acc = 0.0f;
  for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
  return acc;
}

}  // namespace

namespace serial {

Tensor matvec_dense(const Tensor& w, const Tensor& x) {
  check_matvec(w, x);
  Tensor y({w.rows()});
  for (std::size_t r = 0; r < w.rows(); ++r) y[r] = dot_row(w.row(r), x.data());
  return y;
}

}  // namespace serial

Tensor matvec_dense(const Tensor& w, const Tensor& x) {
  check_matvec(w, x);
  Tensor y({w.rows()});
  const auto m = static_cast<std::ptrdiff_t>(w.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < m; ++r) y[r] = dot_row(w.row(r), x.data());
  return y;
}

double mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ValidationError("mse: shape mismatch");
  if (a.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ValidationError("cosine: size mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += double{a[i]} * b[i];
    aa += double{a[i]} * a[i];
    bb += double{b[i]} * b[i];
  }
  if (aa == 0 && bb == 0) return 1.0;
  if (aa == 0 || bb == 0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

float max_abs(std::span<const float> values) {
  float m = 0.0f;
  for (float v : values) m = std::max(m, std::abs(v));
  return m;
}

float quantile_abs(const Tensor& t, double q) {
  if (t.empty()) throw ValidationError("quantile_abs: empty tensor");
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile_abs: q must lie in [0, 1]");
  const std::size_t n = t.size();
  // q * N is snapped to the nearest integer when within rounding noise so that
  // e.g. (1 - 0.001) * 1000 selects rank 999, not 1000.
  double rank = q * static_cast<double>(n);
  if (const double r = std::round(rank); std::abs(rank - r) <= 1e-9 * static_cast<double>(n)) rank = r;
  auto k = static_cast<std::size_t>(std::ceil(rank));
  k = std::clamp<std::size_t>(k, 1, n);

  std::vector<float> mags(n);
  std::transform(t.data().begin(), t.data().end(), mags.begin(), [](float v) { return std::abs(v); });
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k - 1), mags.end());
  return mags[k - 1];
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_rtf(const Tensor& t) {
  if (t.ndim() == 0 || t.ndim() > 255) throw ValidationError("rtf: unsupported rank");
  detail::ByteWriter w;
  w.text("ARTF");
  w.u8(0x01);
  w.u8(static_cast<std::uint8_t>(t.ndim()));
  for (auto d : t.shape()) w.u64(d);
  for (float v : t.data()) w.f32(v);
  return std::move(w.buffer());
}

Tensor decode_rtf(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  auto magic = r.bytes(4);
  if (!magic || std::string(magic->begin(), magic->end()) != "ARTF") throw ValidationError("rtf: bad magic");
  auto version = r.u8();
  if (!version || *version != 0x01) throw ValidationError("rtf: unsupported version");
  auto ndim = r.u8();
  if (!ndim || *ndim == 0) throw ValidationError("rtf: truncated or empty header");
  Shape shape;
  for (int i = 0; i < *ndim; ++i) {
    auto d = r.u64();
    if (!d) throw ValidationError("rtf: truncated header");
    shape.push_back(static_cast<std::size_t>(*d));
  }
  const std::size_t n = shape_numel(shape);
  if (r.remaining() != n * 4) throw ValidationError("rtf: payload length mismatch");
  std::vector<float> data(n);
  for (auto& v : data) v = *r.f32();
  return Tensor(std::move(shape), std::move(data));
}

Tensor read_rtf(const std::filesystem::path& path) { return decode_rtf(detail::read_file(path)); }

void write_rtf(const std::filesystem::path& path, const Tensor& t) {
  detail::write_file_atomic(path, encode_rtf(t));
}

// ---------------------------------------------------------------------------

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("rename failed: " + path.string());
  }
}

}  // namespace detail
}  // namespace lowbit
