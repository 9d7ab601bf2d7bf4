#include "lowbit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "lowbit/error.hpp"

namespace lowbit::harness {

using nlohmann::json;

json to_json(const RngSpec& spec) {
  json j;
  j["seed"] = spec.seed;
  if (const auto* g = std::get_if<Gaussian>(&spec.distribution)) {
    j["distribution"] = "gaussian";
    j["mean"] = g->mean;
    j["stdev"] = g->stdev;
  } else if (const auto* l = std::get_if<Laplace>(&spec.distribution)) {
    j["distribution"] = "laplace";
    j["location"] = l->location;
    j["scale_b"] = l->scale_b;
  } else {
    const auto& lo = std::get<LaplaceOutlier>(spec.distribution);
    j["distribution"] = "laplace_outlier";
    j["location"] = lo.location;
    j["scale_b"] = lo.scale_b;
    j["outlier_fraction"] = lo.outlier_fraction;
    j["outlier_multiplier"] = lo.outlier_multiplier;
  }
  return j;
}

const std::vector<std::string>& known_schemes() {
  static const std::vector<std::string> names{"ternary", "tequila", "seq2", "seq2-tuned", "sherry", "tl2"};
  return names;
}

asq::Quantized quantize_named(const std::string& scheme, const Tensor& w, float lambda) {
  if (scheme == "ternary") return asq::TernaryRecord{ternary::ternarize(w, lambda), {}};
  if (scheme == "tequila") {
    auto q = ternary::ternarize(w, lambda);
    auto bias = ternary::fold_bias(q, w);
    return asq::TernaryRecord{std::move(q), std::move(bias)};
  }
  if (scheme == "seq2") return asq::SeqRecord{seq2::seq_quantize(w, false), false};
  if (scheme == "seq2-tuned") return asq::SeqRecord{seq2::seq_quantize(w, true), true};
  if (scheme == "sherry") return sherry::sherry_quantize(w);
  if (scheme == "tl2") return sherry::tl2_quantize(w);
  throw ValidationError("unsupported scheme: " + scheme);
}

namespace {

double payload_bits_per_weight(const asq::Quantized& q) {
  const std::vector<std::uint64_t> dims{asq::rows_of(q), asq::cols_of(q)};
  return static_cast<double>(asq::payload_bits(asq::scheme_of(q), dims)) / static_cast<double>(dims[0] * dims[1]);
}

std::vector<Tensor> gaussian_calib(std::uint64_t seed, std::size_t count, std::size_t n) {
  std::vector<Tensor> calib;
  for (std::size_t i = 0; i < count; ++i) calib.push_back(generate({seed + i, Gaussian{0.0, 1.0}}, {n}));
  return calib;
}

constexpr std::uint64_t kCalibSeedOffset = 0x10000;

}  // namespace

json fidelity_report(const Tensor& original, const asq::Quantized& q, const std::vector<Tensor>& calib) {
  const Tensor deq = asq::dequantize(q);
  Tensor flat_w({original.rows(), original.cols()}, {original.data().begin(), original.data().end()});
  json j;
  j["weight_mse"] = mse(flat_w, deq);
  j["weight_cosine"] = cosine_similarity(flat_w, deq);
  j["bits_per_weight"] = payload_bits_per_weight(q);
  if (!calib.empty()) {
    std::vector<float> ref, out;
    for (const auto& x : calib) {
      const Tensor y = matvec_dense(flat_w, x);
      const Tensor yq = asq::naive_matvec(q, x);
      ref.insert(ref.end(), y.data().begin(), y.data().end());
      out.insert(out.end(), yq.data().begin(), yq.data().end());
    }
    const std::size_t len = ref.size();
    const Tensor a({len}, std::move(ref)), b({len}, std::move(out));
    j["output_mse"] = mse(a, b);
    j["output_cosine"] = cosine_similarity(a, b);
  }
  return j;
}

json run_fidelity(const std::string& scheme, const RngSpec& dist, const Shape& shape, std::size_t calib_count) {
  if (shape.size() != 2) throw ValidationError("run_fidelity: shape must be 2-D");
  const Tensor w = generate(dist, shape);
  const auto q = quantize_named(scheme, w);
  const auto calib_seed = dist.seed + kCalibSeedOffset;
  json j = fidelity_report(w, q, gaussian_calib(calib_seed, calib_count, shape[1]));
  j["schema_version"] = kSchemaVersion;
  j["experiment"] = "fidelity";
  j["scheme"] = scheme;
  j["shape"] = shape;
  j["weights"] = to_json(dist);
  j["calib"] = {{"count", calib_count}, {"seed", calib_seed}, {"distribution", "gaussian"}, {"mean", 0.0}, {"stdev", 1.0}};
  return j;
}

// ---------------------------------------------------------------------------

namespace {

template <class Kernel>
Timing time_one(const std::string& name, Kernel&& kernel, std::size_t iters) {
  using clock = std::chrono::steady_clock;
  double checksum = 0.0;
  {
    const Tensor y = kernel();  // warmup, discarded
    for (float v : y.data()) checksum += v;
  }
  std::vector<double> runs;
  for (int run = 0; run < 5; ++run) {
    const auto t0 = clock::now();
    float sink = 0.0f;
    for (std::size_t i = 0; i < iters; ++i) sink += kernel()[0];
    const auto t1 = clock::now();
    runs.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count() / static_cast<double>(iters));
    if (std::isnan(sink)) checksum = sink;
  }
  std::nth_element(runs.begin(), runs.begin() + 2, runs.end());
  return {name, runs[2], checksum};
}

}  // namespace

std::vector<Timing> time_kernels(const asq::Quantized& q, const Tensor& x, std::size_t iters) {
  if (iters < 1) throw ValidationError("iters must be >= 1");
  std::vector<Timing> out;
  if (const auto* sh = std::get_if<sherry::SherryTensor>(&q)) {
    out.push_back(time_one("naive", [&] { return sherry::naive_matvec(*sh, x); }, iters));
    out.push_back(time_one("lut", [&] { return sherry::lut_matvec(*sh, x); }, iters));
  } else if (const auto* s = std::get_if<asq::SeqRecord>(&q)) {
    out.push_back(time_one("naive", [&] { return seq2::seq_matvec(s->tensor, x); }, iters));
  } else {
    out.push_back(time_one("naive", [&] { return asq::naive_matvec(q, x); }, iters));
  }
  return out;
}

json run_speed(const std::string& scheme, const Shape& shape, std::size_t iters) {
  if (shape.size() != 2) throw ValidationError("run_speed: shape must be 2-D");
  const RngSpec wspec{1, Gaussian{0.0, 1.0}};
  const RngSpec xspec{2, Gaussian{0.0, 1.0}};
  const auto q = quantize_named(scheme, generate(wspec, shape));
  const Tensor x = generate(xspec, {shape[1]});
  json j;
  j["schema_version"] = kSchemaVersion;
  j["experiment"] = "speed";
  j["scheme"] = scheme;
  j["shape"] = shape;
  j["iters"] = iters;
  j["weights"] = to_json(wspec);
  j["input"] = to_json(xspec);
  j["kernels"] = json::array();
  for (const auto& t : time_kernels(q, x, iters))
    j["kernels"].push_back({{"kernel", t.kernel}, {"ns_per_matvec", t.ns_per_matvec}, {"checksum", t.checksum}});
  return j;
}

// ---------------------------------------------------------------------------

json run_lepto_suite(const std::vector<std::uint64_t>& seeds, const LeptoSuiteConfig& cfg) {
  if (seeds.size() < 20) throw ValidationError("run_lepto_suite: at least 20 seeds required");
  cfg.search.validate();

  const auto dist = [&](std::uint64_t seed) {
    return RngSpec{seed, LaplaceOutlier{0.0, 1.0, cfg.outlier_fraction, cfg.outlier_multiplier}};
  };

  std::vector<json> rows(seeds.size());
  const auto count = static_cast<std::ptrdiff_t>(seeds.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const std::uint64_t seed = seeds[static_cast<std::size_t>(i)];
    // Independent streams for w1, w2 and each calibration sample.
    const std::uint64_t base = splitmix64(seed);
    lepto::Block block{generate(dist(base), {cfg.hidden, cfg.dim}), generate(dist(base + 1), {cfg.dim, cfg.hidden})};
    std::vector<Tensor> calib;
    for (std::size_t s = 0; s < cfg.search.n_samples; ++s) calib.push_back(generate(dist(base + 2 + s), {cfg.tokens, cfg.dim}));
    const auto res = lepto::grid_search(block, calib, cfg.search);
    double best = res.losses.front().loss;
    for (const auto& p : res.losses)
      if (p.alpha == res.alpha_star) best = p.loss;
    json row;
    row["seed"] = seed;
    row["loss_alpha0"] = res.losses.front().loss;
    row["loss_best"] = best;
    row["alpha_star"] = res.alpha_star;
    row["denominator"] = res.denominator;
    rows[static_cast<std::size_t>(i)] = std::move(row);
  }

  std::size_t strict = 0, non_worse = 0;
  for (const auto& r : rows) {
    strict += r["loss_best"].get<double>() < r["loss_alpha0"].get<double>();
    non_worse += r["loss_best"].get<double>() <= r["loss_alpha0"].get<double>();
  }
  json j;
  j["schema_version"] = kSchemaVersion;
  j["experiment"] = "lepto";
  j["config"] = {{"dim", cfg.dim},
                 {"hidden", cfg.hidden},
                 {"tokens", cfg.tokens},
                 {"n_samples", cfg.search.n_samples},
                 {"alpha_grid", cfg.search.alpha_grid},
                 {"fp8_max", cfg.search.fp8_max},
                 {"seed_derivation", "splitmix64(seed) + {0: w1, 1: w2, 2+s: sample s}"},
                 {"distribution", to_json(dist(0))}};
  j["per_seed"] = rows;
  j["improvement_fraction"] = static_cast<double>(strict) / static_cast<double>(rows.size());
  j["non_worse_fraction"] = static_cast<double>(non_worse) / static_cast<double>(rows.size());
  return j;
}

void run_suite(const std::string& name, std::ostream& out) {
  std::vector<json> lines;
  if (name == "fidelity") {
    const std::vector<RngSpec> dists{{11, Gaussian{0.0, 1.0}}, {12, Laplace{0.0, 1.0}},
                                     {13, LaplaceOutlier{0.0, 1.0, 0.001, 20.0}}};
    for (const auto& d : dists)
      for (const auto& s : known_schemes()) lines.push_back(run_fidelity(s, d, {256, 256}, 16));
  } else if (name == "speed") {
    for (const auto& s : known_schemes()) lines.push_back(run_speed(s, {1024, 1024}, 20));
  } else if (name == "lepto") {
    std::vector<std::uint64_t> seeds(20);
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i + 1;
    lines.push_back(run_lepto_suite(seeds));
  } else {
    throw ValidationError("unknown suite: " + name);
  }
  for (const auto& l : lines) out << l.dump() << '\n';
}

}  // namespace lowbit::harness
