// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include <omp.h>

#include <random>
#include <vector>

#include "doctest.h"
#include "lmc/kernels.hpp"
#include "test_support.hpp"

using namespace lmc;
namespace k = lmc::kernels;

namespace {

std::vector<float> randv(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Runs the OpenMP variant with several thread counts; on a single-core host
// the team still splits rows, so scheduling differences are exercised.
template <typename F>
void for_thread_counts(F&& f) {
  const int saved = omp_get_max_threads();
  for (int t : {1, 2, 3, 7}) {
    omp_set_num_threads(t);
    f(t);
  }
  omp_set_num_threads(saved);
}

}  // namespace

TEST_CASE("matmul matches a double-precision oracle") {
  const std::size_t n = 7, kk = 13, m = 5;
  const auto a = randv(n * kk, 1), b = randv(kk * m, 2);
  std::vector<float> c(n * m);
  k::serial::matmul(a, b, c, n, kk, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double ref = 0.0;
      for (std::size_t p = 0; p < kk; ++p)
        ref += static_cast<double>(a[i * kk + p]) * b[p * m + j];
      CHECK(c[i * m + j] == doctest::Approx(ref).epsilon(1e-5));
    }
}

TEST_CASE("serial and OpenMP matmul kernels are bitwise equal") {
  const std::size_t n = 37, kk = 64, m = 29;
  const auto a = randv(n * kk, 3), b = randv(kk * m, 4), dc = randv(n * m, 5);
  std::vector<float> c0(n * m), da0(n * kk, 0.5f), db0(kk * m, -0.25f);
  k::serial::matmul(a, b, c0, n, kk, m);
  k::serial::matmul_grad_a(dc, b, da0, n, kk, m);
  k::serial::matmul_grad_b(a, dc, db0, n, kk, m);
  for_thread_counts([&](int threads) {
    CAPTURE(threads);
    std::vector<float> c1(n * m), da1(n * kk, 0.5f), db1(kk * m, -0.25f);
    k::omp::matmul(a, b, c1, n, kk, m);
    k::omp::matmul_grad_a(dc, b, da1, n, kk, m);
    k::omp::matmul_grad_b(a, dc, db1, n, kk, m);
    CHECK(test::bitwise_equal(c0, c1));
    CHECK(test::bitwise_equal(da0, da1));
    CHECK(test::bitwise_equal(db0, db1));
  });
}

TEST_CASE("serial and OpenMP attention kernels are bitwise equal") {
  k::AttentionShape s{3, 11, 2, 4, 5};
  const auto q = randv(s.rows() * s.width_qk(), 6);
  const auto kv = randv(s.rows() * s.width_qk(), 7);
  const auto v = randv(s.rows() * s.width_v(), 8);
  const auto dout = randv(s.rows() * s.width_v(), 9);
  const std::size_t np = s.batch * s.heads * s.seq_len * s.seq_len;
  std::vector<float> out0(s.rows() * s.width_v()), p0(np);
  std::vector<float> dq0(q.size()), dk0(kv.size()), dv0(v.size());
  k::serial::attention(q, kv, v, out0, p0, s);
  k::serial::attention_grad(q, kv, v, p0, dout, dq0, dk0, dv0, s);
  for_thread_counts([&](int threads) {
    CAPTURE(threads);
    std::vector<float> out1(out0.size()), p1(np);
    std::vector<float> dq1(q.size()), dk1(kv.size()), dv1(v.size());
    k::omp::attention(q, kv, v, out1, p1, s);
    k::omp::attention_grad(q, kv, v, p1, dout, dq1, dk1, dv1, s);
    CHECK(test::bitwise_equal(out0, out1));
    CHECK(test::bitwise_equal(p0, p1));
    CHECK(test::bitwise_equal(dq0, dq1));
    CHECK(test::bitwise_equal(dk0, dk1));
    CHECK(test::bitwise_equal(dv0, dv1));
  });
}

TEST_CASE("serial and OpenMP layer norm kernels are bitwise equal") {
  const std::size_t rows = 41, width = 24;
  const auto x = randv(rows * width, 10), g = randv(width, 11),
             b = randv(width, 12), dout = randv(rows * width, 13);
  std::vector<float> o0(x.size()), xh0(x.size()), r0(rows);
  std::vector<float> dx0(x.size()), dg0(width), ds0(width);
  k::serial::layer_norm(x, g, b, o0, xh0, r0, rows, width);
  k::serial::layer_norm_grad(dout, xh0, r0, g, dx0, dg0, ds0, rows, width);
  for_thread_counts([&](int threads) {
    CAPTURE(threads);
    std::vector<float> o1(x.size()), xh1(x.size()), r1(rows);
    std::vector<float> dx1(x.size()), dg1(width), ds1(width);
    k::omp::layer_norm(x, g, b, o1, xh1, r1, rows, width);
    k::omp::layer_norm_grad(dout, xh1, r1, g, dx1, dg1, ds1, rows, width);
    CHECK(test::bitwise_equal(o0, o1));
    CHECK(test::bitwise_equal(dx0, dx1));
    CHECK(test::bitwise_equal(dg0, dg1));
    CHECK(test::bitwise_equal(ds0, ds1));
  });
}

TEST_CASE("output rows do not depend on how many rows share the call") {
  const std::size_t n = 9, kk = 16, m = 8;
  const auto a = randv(n * kk, 14), b = randv(kk * m, 15);
  std::vector<float> full(n * m);
  k::matmul(a, b, full, n, kk, m);
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<float> one(m);
    k::matmul(std::span(a).subspan(r * kk, kk), b, one, 1, kk, m);
    CHECK(test::bitwise_equal(one, std::span<const float>(full).subspan(r * m, m)));
  }

  // Causal attention over a prefix reproduces the prefix of the full run.
  k::AttentionShape s{1, 10, 2, 3, 3};
  const auto q = randv(30 * 2, 16), kv = randv(30 * 2, 17), v = randv(30 * 2, 18);
  std::vector<float> out(s.rows() * s.width_v()), probs(2 * 100);
  k::attention(q, kv, v, out, probs, s);
  k::AttentionShape p{1, 4, 2, 3, 3};
  std::vector<float> out_p(p.rows() * p.width_v()), probs_p(2 * 16);
  k::attention(std::span(q).first(4 * 6), std::span(kv).first(4 * 6),
               std::span(v).first(4 * 6), out_p, probs_p, p);
  CHECK(test::bitwise_equal(out_p, std::span<const float>(out).first(out_p.size())));
}
