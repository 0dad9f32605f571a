// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

// Blocked/OpenMP GEMM vs the serial reference at the shapes the denoiser
// actually runs: batch x 256 x 256 hidden layers and the 784 -> 256 input
// projection.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "hgdpo/kernels.hpp"

namespace {

std::vector<double> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

template <auto Kernel>
void run_nt(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  auto a = random_buffer(m * k, 1);
  auto b = random_buffer(n * k, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    Kernel(a, b, c, m, k, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] =
      benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

template <auto Kernel>
void run_nn(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  auto a = random_buffer(m * k, 1);
  auto b = random_buffer(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    Kernel(a, b, c, m, k, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] =
      benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

template <auto Kernel>
void run_tn(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  auto a = random_buffer(m * k, 1);
  auto b = random_buffer(m * n, 2);
  std::vector<double> c(k * n);
  for (auto _ : state) {
    Kernel(a, b, c, m, k, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] =
      benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({32, 256, 256})->Args({128, 256, 256})->Args({640, 256, 256})->Args({128, 784, 256})->Args({128, 256, 768});
}

BENCHMARK(run_nt<hgdpo::kernels::gemm_nt>)->Name("gemm_nt/blocked")->Apply(shapes);
BENCHMARK(run_nt<hgdpo::kernels::serial::gemm_nt>)->Name("gemm_nt/serial")->Apply(shapes);
BENCHMARK(run_nn<hgdpo::kernels::gemm_nn>)->Name("gemm_nn/blocked")->Apply(shapes);
BENCHMARK(run_nn<hgdpo::kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Apply(shapes);
BENCHMARK(run_tn<hgdpo::kernels::gemm_tn>)->Name("gemm_tn/blocked")->Apply(shapes);
BENCHMARK(run_tn<hgdpo::kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->Apply(shapes);

}  // namespace

BENCHMARK_MAIN();
