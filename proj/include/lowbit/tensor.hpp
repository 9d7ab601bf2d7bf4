#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

namespace lowbit {

using Shape = std::vector<std::size_t>;

/// Dense row-major single-precision tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix view: rows = dims[0] for 2-D, 1 for 1-D; cols = last dim.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::span<float> row(std::size_t r) { return std::span<float>(data_).subspan(r * cols(), cols()); }
  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(data_).subspan(r * cols(), cols());
  }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

std::size_t shape_numel(const Shape& shape);

// ---------------------------------------------------------------------------
// Deterministic synthetic data.

struct Gaussian {
  double mean = 0.0;
  double stdev = 1.0;
};
struct Laplace {
  double location = 0.0;
  double scale_b = 1.0;
};
struct LaplaceOutlier {
  double location = 0.0;
  double scale_b = 1.0;
  double outlier_fraction = 0.001;
  double outlier_multiplier = 20.0;
};
using Distribution = std::variant<Gaussian, Laplace, LaplaceOutlier>;

struct RngSpec {
  std::uint64_t seed = 0;
  Distribution distribution = Gaussian{};
};

/// Counter-based generator: draw i is splitmix64(key + i * golden). Any draw
/// can be recomputed from (key, index) alone, which keeps streams identical
/// across platforms and independent of call interleaving.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}
  std::uint64_t next_u64();
  // Uniform in the open interval (0, 1).
  double next_unit();
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

Tensor generate(const RngSpec& spec, const Shape& shape);

// ---------------------------------------------------------------------------
// Reductions and products.

/// y[r] = sum_c W[r,c] * x[c], single-precision accumulation in column order.
/// Rows are distributed over OpenMP threads; per-row order is fixed so the
/// result is bitwise identical to serial::matvec_dense.
Tensor matvec_dense(const Tensor& w, const Tensor& x);

/// Mean of squared differences, accumulated in double.
double mse(const Tensor& a, const Tensor& b);

/// Cosine similarity of the flattened tensors; 1 when both are zero.
double cosine_similarity(const Tensor& a, const Tensor& b);

/// Nearest-rank quantile of |t|: the k-th smallest with k = ceil(q * N)
/// clamped to [1, N]. q = 1 gives max|t|.
float quantile_abs(const Tensor& t, double q);

float max_abs(std::span<const float> values);

namespace serial {
Tensor matvec_dense(const Tensor& w, const Tensor& x);
}  // namespace serial

// ---------------------------------------------------------------------------
// RTF raw tensor files: "ARTF", 0x01, u8 ndim, ndim x u64 LE dims, f32 LE data.

Tensor read_rtf(const std::filesystem::path& path);
void write_rtf(const std::filesystem::path& path, const Tensor& t);
std::vector<std::uint8_t> encode_rtf(const Tensor& t);
Tensor decode_rtf(std::span<const std::uint8_t> bytes);

}  // namespace lowbit
