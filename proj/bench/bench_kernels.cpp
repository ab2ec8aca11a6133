#include <random>

#include <benchmark/benchmark.h>

#include "mactas/kernels.hpp"
#include "mactas/matrix.hpp"

namespace {

using namespace mactas;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Matrix m(r, c);
  for (double& v : m.values()) v = d(rng);
  return m;
}

using Gemm = void (*)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);

// Square-ish products: m = k = n = state.range(0).
template <Gemm F>
void square(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(s, s, 1), b = random_matrix(s, s, 2);
  Matrix c(s, s);
  for (auto _ : state) {
    F(a.data(), b.data(), c.data(), s, s, s, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * s * s * s, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

// The shape of a batched linear layer during training: (32 teams x 3 agents) x 64 -> 192.
template <Gemm F>
void linear_layer(benchmark::State& state) {
  const std::size_t m = 96, k = 64, n = 192;
  const Matrix x = random_matrix(m, k, 3), w = random_matrix(n, k, 4);
  Matrix y(m, n);
  for (auto _ : state) {
    F(x.data(), w.data(), y.data(), m, k, n, false);
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * m * k * n, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

BENCHMARK(square<kernels::serial::gemm_nn>)->Name("serial/gemm_nn")->RangeMultiplier(2)->Range(32, 512);
BENCHMARK(square<kernels::parallel::gemm_nn>)->Name("parallel/gemm_nn")->RangeMultiplier(2)->Range(32, 512);
BENCHMARK(square<kernels::serial::gemm_nt>)->Name("serial/gemm_nt")->RangeMultiplier(2)->Range(32, 512);
BENCHMARK(square<kernels::parallel::gemm_nt>)->Name("parallel/gemm_nt")->RangeMultiplier(2)->Range(32, 512);
BENCHMARK(square<kernels::serial::gemm_tn>)->Name("serial/gemm_tn")->RangeMultiplier(2)->Range(32, 512);
BENCHMARK(square<kernels::parallel::gemm_tn>)->Name("parallel/gemm_tn")->RangeMultiplier(2)->Range(32, 512);
BENCHMARK(linear_layer<kernels::serial::gemm_nt>)->Name("serial/linear_96x64x192");
BENCHMARK(linear_layer<kernels::parallel::gemm_nt>)->Name("parallel/linear_96x64x192");

}  // namespace

BENCHMARK_MAIN();
