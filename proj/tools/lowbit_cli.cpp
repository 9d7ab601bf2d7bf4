// lowbit: command-line front end for quantization, inspection and benchmarks.
//
// Exit codes: 0 success, 1 I/O error, 2 validation error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lowbit/asq.hpp"
#include "lowbit/fp8_e4m3.hpp"
#include "lowbit/harness.hpp"
#include "lowbit/lepto_quant.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lowbit;

namespace {

std::vector<Tensor> load_calib_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".rtf") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no .rtf files in " + dir.string());
  std::vector<Tensor> out;
  for (const auto& f : files) out.push_back(read_rtf(f));
  return out;
}

Shape parse_shape(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw ValidationError("shape must look like MxN");
  try {
    return {std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw ValidationError("shape must look like MxN");
  }
}

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lowbit: ultra-low-bit weight quantization toolkit"};
  app.require_subcommand(1);

  // quantize
  auto* quantize = app.add_subcommand("quantize", "Quantize an RTF tensor into an ASQ file");
  std::string q_scheme, q_in, q_out;
  bool q_micro = false;
  float q_lambda = ternary::kDefaultLambda;
  quantize->add_option("--scheme", q_scheme, "ternary | tequila | seq2 | sherry | tl2")->required();
  quantize->add_option("--in", q_in, "input RTF")->required();
  quantize->add_option("--out", q_out, "output ASQ")->required();
  quantize->add_flag("--micro-tune", q_micro, "seq2: micro-tune per-row scales");
  quantize->add_option("--lambda", q_lambda, "deadzone bias coefficient (ternary/tequila)");

  // dequantize
  auto* dequantize = app.add_subcommand("dequantize", "Expand an ASQ file back to RTF");
  std::string d_in, d_out;
  dequantize->add_option("--in", d_in)->required();
  dequantize->add_option("--out", d_out)->required();

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Report ASQ sizes, or dump the FP8 E4M3 decode table");
  std::string i_in;
  bool i_fp8 = false;
  inspect->add_option("--in", i_in);
  inspect->add_flag("--fp8-table", i_fp8, "print the 256-entry E4M3 table as CSV");

  // bench
  auto* bench = app.add_subcommand("bench", "Time a matvec kernel");
  std::string b_in, b_kernel = "naive", b_shape;
  std::size_t b_iters = 10;
  bench->add_option("--in", b_in, "ASQ file");
  bench->add_option("--shape", b_shape, "synthetic sherry tensor MxN (instead of --in)");
  bench->add_option("--kernel", b_kernel, "naive | lut")->check(CLI::IsMember({"naive", "lut"}));
  bench->add_option("--iters", b_iters)->check(CLI::PositiveNumber);

  // lepto-search
  auto* lepto = app.add_subcommand("lepto-search", "Outlier-isolation FP8 scale search for an FFN block");
  std::string l_block, l_calib;
  std::size_t l_grid = 11;
  lepto->add_option("--block", l_block, "w1.rtf,w2.rtf")->required();
  lepto->add_option("--calib", l_calib, "directory of RTF activation samples")->required();
  lepto->add_option("--grid", l_grid, "number of alpha grid points in [0, 0.001]")->check(CLI::PositiveNumber);

  // eval
  auto* eval = app.add_subcommand("eval", "Compare an ASQ file with its original weights");
  std::string e_orig, e_quant, e_calib;
  eval->add_option("--orig", e_orig)->required();
  eval->add_option("--quant", e_quant)->required();
  eval->add_option("--calib", e_calib, "directory of RTF activation vectors");

  // suite
  auto* suite = app.add_subcommand("suite", "Run an experiment suite and write JSON lines");
  std::string s_name, s_out;
  suite->add_option("--name", s_name)->required()->check(CLI::IsMember({"fidelity", "speed", "lepto"}));
  suite->add_option("--out", s_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*quantize) {
      const Tensor w = read_rtf(q_in);
      if (w.ndim() > 2) throw ValidationError("quantize: expected a 1-D or 2-D tensor");
      std::string scheme = q_scheme;
      if (scheme == "seq2" && q_micro) scheme = "seq2-tuned";
      const auto q = harness::quantize_named(scheme, w, q_lambda);
      asq::write_asq(q_out, q);
      if (const auto* t = std::get_if<asq::TernaryRecord>(&q)) {
        json side;
        side["delta"] = t->tensor.delta;
        side["alpha"] = t->tensor.alpha;
        side["lambda"] = t->tensor.lambda;
        side["deadzone_fraction"] = ternary::deadzone_fraction(t->tensor);
        write_text(q_out + ".json", side.dump(2) + "\n");
      }
      emit(asq::inspect(q_out));
    } else if (*dequantize) {
      write_rtf(d_out, asq::dequantize(asq::read_asq(d_in)));
    } else if (*inspect) {
      if (i_fp8) {
        std::cout << "code,value\n";
        const auto& table = fp8::decode_table();
        for (int c = 0; c < 256; ++c) {
          std::ostringstream v;
          v << std::setprecision(9) << table[c];
          std::cout << c << ',' << v.str() << '\n';
        }
      }
      if (!i_in.empty()) emit(asq::inspect(i_in));
      if (i_in.empty() && !i_fp8) throw ValidationError("inspect: give --in or --fp8-table");
    } else if (*bench) {
      asq::Quantized q;
      Shape shape;
      if (!b_in.empty()) {
        q = asq::read_asq(b_in);
        shape = {asq::rows_of(q), asq::cols_of(q)};
      } else if (!b_shape.empty()) {
        shape = parse_shape(b_shape);
        q = sherry::sherry_quantize(generate({1, Gaussian{0.0, 1.0}}, shape));
      } else {
        throw ValidationError("bench: give --in or --shape");
      }
      if (b_kernel == "lut" && !std::holds_alternative<sherry::SherryTensor>(q))
        throw ValidationError("bench: the lut kernel is only available for sherry tensors");
      const Tensor x = generate({2, Gaussian{0.0, 1.0}}, {shape[1]});
      for (const auto& t : harness::time_kernels(q, x, b_iters)) {
        if (t.kernel != b_kernel) continue;
        emit({{"kernel", t.kernel},
              {"scheme", asq::scheme_name(asq::scheme_of(q))},
              {"shape", std::to_string(shape[0]) + "x" + std::to_string(shape[1])},
              {"iters", b_iters},
              {"ns_per_matvec", t.ns_per_matvec},
              {"checksum", t.checksum}});
      }
    } else if (*lepto) {
      const auto comma = l_block.find(',');
      if (comma == std::string::npos) throw ValidationError("--block expects w1.rtf,w2.rtf");
      lepto::Block block{read_rtf(l_block.substr(0, comma)), read_rtf(l_block.substr(comma + 1))};
      const auto calib = load_calib_dir(l_calib);
      lepto::Config cfg;
      cfg.alpha_grid = lepto::Config::default_grid(l_grid);
      cfg.n_samples = calib.size();
      const auto res = lepto::grid_search(block, calib, cfg);
      json losses = json::array();
      for (const auto& p : res.losses) losses.push_back({{"alpha", p.alpha}, {"loss", p.loss}});
      emit({{"alpha_star", res.alpha_star}, {"D", res.denominator}, {"scale", res.scale}, {"losses", losses}});
    } else if (*eval) {
      const Tensor w = read_rtf(e_orig);
      const auto q = asq::read_asq(e_quant);
      if (w.rows() != asq::rows_of(q) || w.cols() != asq::cols_of(q)) throw ValidationError("eval: shape mismatch");
      std::vector<Tensor> calib;
      if (!e_calib.empty()) calib = load_calib_dir(e_calib);
      json rep = harness::fidelity_report(w, q, calib);
      json out;
      out["mse"] = calib.empty() ? rep["weight_mse"] : rep["output_mse"];
      out["cosine_similarity"] = calib.empty() ? rep["weight_cosine"] : rep["output_cosine"];
      out["bits_per_weight"] = rep["bits_per_weight"];
      out["weight_mse"] = rep["weight_mse"];
      emit(out);
    } else if (*suite) {
      std::ostringstream lines;
      harness::run_suite(s_name, lines);
      write_text(s_out, lines.str());
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
