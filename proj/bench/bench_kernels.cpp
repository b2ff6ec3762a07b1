// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference kernels against their OpenMP counterparts, plus the
// Rademacher estimator. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lmc/analysis.hpp"
#include "lmc/kernels.hpp"

namespace k = lmc::kernels;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  std::vector<float> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// Training-shaped matmul: (batch * T) x E times E x 4E.
template <auto Fn>
void BM_Matmul(benchmark::State& state) {
  const std::size_t n = state.range(0), kk = 64, m = 256;
  const auto a = noise(n * kk, 1), b = noise(kk * m, 2);
  std::vector<float> c(n * m);
  for (auto _ : state) {
    Fn(a, b, c, n, kk, m);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * n * kk * m);
}

template <auto Fn>
void BM_Attention(benchmark::State& state) {
  k::AttentionShape s{static_cast<std::size_t>(state.range(0)), 128, 4, 16, 16};
  const auto q = noise(s.rows() * s.width_qk(), 3), kv = noise(s.rows() * s.width_qk(), 4),
             v = noise(s.rows() * s.width_v(), 5);
  std::vector<float> out(s.rows() * s.width_v());
  std::vector<float> probs(s.batch * s.heads * s.seq_len * s.seq_len);
  for (auto _ : state) {
    Fn(q, kv, v, out, probs, s);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void BM_LayerNorm(benchmark::State& state) {
  const std::size_t rows = state.range(0), width = 64;
  const auto x = noise(rows * width, 6), gain = noise(width, 7), shift = noise(width, 8);
  std::vector<float> out(rows * width), xhat(rows * width), rstd(rows);
  for (auto _ : state) {
    Fn(x, gain, shift, out, xhat, rstd, rows, width);
    benchmark::DoNotOptimize(out.data());
  }
}

lmc::SampleMatrix samples(std::size_t n, std::size_t d) {
  lmc::SampleMatrix s;
  s.count = n;
  s.dim = d;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  s.data.resize(n * d);
  for (auto& x : s.data) x = g(rng);
  return s;
}

void BM_RademacherSerial(benchmark::State& state) {
  const auto s = samples(200, 2048);
  for (auto _ : state)
    benchmark::DoNotOptimize(lmc::rademacher_estimate_serial(s, state.range(0), 1));
}

void BM_RademacherOmp(benchmark::State& state) {
  const auto s = samples(200, 2048);
  for (auto _ : state)
    benchmark::DoNotOptimize(lmc::rademacher_estimate(s, state.range(0), 1));
}

}  // namespace

BENCHMARK(BM_Matmul<k::serial::matmul>)->Name("matmul/serial")->Arg(128)->Arg(1024);
BENCHMARK(BM_Matmul<k::omp::matmul>)->Name("matmul/omp")->Arg(128)->Arg(1024);
BENCHMARK(BM_Attention<k::serial::attention>)->Name("attention/serial")->Arg(1)->Arg(8);
BENCHMARK(BM_Attention<k::omp::attention>)->Name("attention/omp")->Arg(1)->Arg(8);
BENCHMARK(BM_LayerNorm<k::serial::layer_norm>)->Name("layer_norm/serial")->Arg(1024);
BENCHMARK(BM_LayerNorm<k::omp::layer_norm>)->Name("layer_norm/omp")->Arg(1024);
BENCHMARK(BM_RademacherSerial)->Name("rademacher/serial")->Arg(64);
BENCHMARK(BM_RademacherOmp)->Name("rademacher/omp")->Arg(64);

BENCHMARK_MAIN();
