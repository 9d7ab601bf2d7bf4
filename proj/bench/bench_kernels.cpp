// Serial reference kernels vs their OpenMP counterparts.
//
//   lowbit_bench [M N] [iters]
//
// Thread count follows OMP_NUM_THREADS.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "lowbit/seq2.hpp"
#include "lowbit/sherry.hpp"
#include "lowbit/tensor.hpp"

using namespace lowbit;

namespace {

double median_ns(const std::function<Tensor()>& kernel, int iters) {
  kernel();
  std::vector<double> runs;
  for (int run = 0; run < 5; ++run) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) kernel();
    const auto t1 = std::chrono::steady_clock::now();
    runs.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count() / iters);
  }
  std::sort(runs.begin(), runs.end());
  return runs[2];
}

bool same_bits(const Tensor& a, const Tensor& b) { return a == b; }

void row(const char* name, const std::function<Tensor()>& serial, const std::function<Tensor()>& parallel, int iters) {
  const double s = median_ns(serial, iters);
  const double p = median_ns(parallel, iters);
  std::printf("%-14s %14.0f %14.0f %8.2fx  %s\n", name, s, p, s / p, same_bits(serial(), parallel()) ? "bitwise" : "DIFFERS");
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t m = 4096, n = 4096;
  int iters = 20;
  if (argc >= 3) {
    m = std::strtoul(argv[1], nullptr, 10);
    n = std::strtoul(argv[2], nullptr, 10);
  }
  if (argc >= 4) iters = std::atoi(argv[3]);
  if (m == 0 || n == 0 || n % 4 != 0 || iters < 1) {
    std::fprintf(stderr, "usage: lowbit_bench [M N] [iters]   (N divisible by 4)\n");
    return 2;
  }

  const Tensor w = generate({1, Gaussian{0.0, 1.0}}, {m, n});
  const Tensor x = generate({2, Gaussian{0.0, 1.0}}, {n});
  const auto sq = sherry::sherry_quantize(w);
  const auto seq = seq2::seq_quantize(w);

  std::printf("shape %zux%zu, %d iters, %d threads\n", m, n, iters, omp_get_max_threads());
  std::printf("%-14s %14s %14s %9s\n", "kernel", "serial ns", "openmp ns", "speedup");
  row("dense", [&] { return serial::matvec_dense(w, x); }, [&] { return matvec_dense(w, x); }, iters);
  row("sherry-naive", [&] { return sherry::serial::naive_matvec(sq, x); }, [&] { return sherry::naive_matvec(sq, x); },
      iters);
  row("sherry-lut", [&] { return sherry::serial::lut_matvec(sq, x); }, [&] { return sherry::lut_matvec(sq, x); }, iters);
  row("seq2", [&] { return seq2::serial::seq_matvec(seq, x); }, [&] { return seq2::seq_matvec(seq, x); }, iters);
  return 0;
}
