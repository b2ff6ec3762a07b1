// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include <omp.h>

#include <vector>

#include "kernel_rows.hpp"
#include "lmc/kernels.hpp"

namespace lmc::kernels {

int max_threads() { return omp_get_max_threads(); }

namespace omp {

namespace {
// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;

long as_long(std::size_t v) { return static_cast<long>(v); }
}  // namespace

void matmul(std::span<const float> a, std::span<const float> b,
            std::span<float> c, std::size_t n, std::size_t k, std::size_t m) {
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (long i = 0; i < as_long(n); ++i)
    rows::matmul_row(a.data() + i * k, b.data(), c.data() + i * m, k, m);
}

void matmul_grad_a(std::span<const float> dc, std::span<const float> b,
                   std::span<float> da, std::size_t n, std::size_t k,
                   std::size_t m) {
  std::vector<float> bt(k * m);
  rows::transpose(b.data(), bt.data(), k, m);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (long i = 0; i < as_long(n); ++i)
    rows::matmul_grad_a_row(dc.data() + i * m, bt.data(), da.data() + i * k, k,
                            m);
}

void matmul_grad_b(std::span<const float> a, std::span<const float> dc,
                   std::span<float> db, std::size_t n, std::size_t k,
                   std::size_t m) {
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (long p = 0; p < as_long(k); ++p)
    rows::matmul_grad_b_row(a.data(), dc.data(), db.data() + p * m, p, n, k, m);
}

void attention(std::span<const float> q, std::span<const float> k,
               std::span<const float> v, std::span<float> out,
               std::span<float> probs, const AttentionShape& shape) {
  const long slices = as_long(shape.batch * shape.heads);
#pragma omp parallel for schedule(static) if (slices > 1)
  for (long s = 0; s < slices; ++s)
    rows::attention_head(q.data(), k.data(), v.data(), out.data(),
                         probs.data(), shape, s / shape.heads,
                         s % shape.heads);
}

void attention_grad(std::span<const float> q, std::span<const float> k,
                    std::span<const float> v, std::span<const float> probs,
                    std::span<const float> dout, std::span<float> dq,
                    std::span<float> dk, std::span<float> dv,
                    const AttentionShape& shape) {
  const long slices = as_long(shape.batch * shape.heads);
#pragma omp parallel if (slices > 1)
  {
    std::vector<float> scratch(shape.seq_len);
#pragma omp for schedule(static)
    for (long s = 0; s < slices; ++s)
      rows::attention_head_grad(q.data(), k.data(), v.data(), probs.data(),
                                dout.data(), dq.data(), dk.data(), dv.data(),
                                shape, s / shape.heads, s % shape.heads,
                                scratch.data());
  }
}

void layer_norm(std::span<const float> x, std::span<const float> gain,
                std::span<const float> shift, std::span<float> out,
                std::span<float> xhat, std::span<float> rstd, std::size_t rows,
                std::size_t width) {
#pragma omp parallel for schedule(static) if (rows * width > kParallelWork)
  for (long r = 0; r < as_long(rows); ++r)
    layer_norm_row(x.data() + r * width, gain.data(), shift.data(), width,
                   out.data() + r * width,
                   xhat.empty() ? nullptr : xhat.data() + r * width,
                   rstd.empty() ? nullptr : rstd.data() + r);
}

void layer_norm_grad(std::span<const float> dout, std::span<const float> xhat,
                     std::span<const float> rstd, std::span<const float> gain,
                     std::span<float> dx, std::span<float> dgain,
                     std::span<float> dshift, std::size_t rows,
                     std::size_t width) {
#pragma omp parallel for schedule(static) if (rows * width > kParallelWork)
  for (long r = 0; r < as_long(rows); ++r)
    rows::layer_norm_grad_row(dout.data() + r * width, xhat.data() + r * width,
                              rstd[r], gain.data(), dx.data() + r * width,
                              width);
  // Column sums stay row-ordered so the result matches the serial kernel.
#pragma omp parallel for schedule(static) if (rows * width > kParallelWork)
  for (long j = 0; j < as_long(width); ++j) {
    float g = dgain[j];
    float s = dshift[j];
    for (std::size_t r = 0; r < rows; ++r) {
      const float go = dout[r * width + j];
      g += go * xhat[r * width + j];
      s += go;
    }
    dgain[j] = g;
    dshift[j] = s;
  }
}

}  // namespace omp
}  // namespace lmc::kernels
