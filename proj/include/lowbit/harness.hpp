#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lowbit/asq.hpp"
#include "lowbit/lepto_quant.hpp"
#include "lowbit/tensor.hpp"

namespace lowbit::harness {

inline constexpr int kSchemaVersion = 1;

nlohmann::json to_json(const RngSpec& spec);

/// Quantizes `w` with a named scheme: ternary, tequila (ternary plus folded
/// deadzone bias), seq2, seq2-tuned, sherry or tl2.
asq::Quantized quantize_named(const std::string& scheme, const Tensor& w, float lambda = ternary::kDefaultLambda);

const std::vector<std::string>& known_schemes();

/// Weight and output fidelity of one scheme on a synthetic tensor. Output
/// metrics compare dense and quantized matvecs over `calib_count` Gaussian
/// activation vectors.
nlohmann::json run_fidelity(const std::string& scheme, const RngSpec& dist, const Shape& shape,
                            std::size_t calib_count);

/// Same, for an already-quantized tensor against the original weights.
nlohmann::json fidelity_report(const Tensor& original, const asq::Quantized& q, const std::vector<Tensor>& calib);

struct Timing {
  std::string kernel;
  double ns_per_matvec = 0.0;
  double checksum = 0.0;
};

/// Median-of-5 wall time per matvec after one discarded warmup run.
std::vector<Timing> time_kernels(const asq::Quantized& q, const Tensor& x, std::size_t iters);

nlohmann::json run_speed(const std::string& scheme, const Shape& shape, std::size_t iters);

struct LeptoSuiteConfig {
  std::size_t dim = 128;
  std::size_t hidden = 128;
  std::size_t tokens = 32;  // rows per calibration sample
  double outlier_fraction = 0.001;
  double outlier_multiplier = 20.0;
  lepto::Config search{};
};

/// One FFN block per seed: weights and calibration activations drawn from
/// laplace_outlier(0, 1, fraction, multiplier). Requires >= 20 seeds.
nlohmann::json run_lepto_suite(const std::vector<std::uint64_t>& seeds, const LeptoSuiteConfig& cfg = {});

/// Runs a named suite (fidelity | speed | lepto) and writes JSON lines.
void run_suite(const std::string& name, std::ostream& out);

}  // namespace lowbit::harness
