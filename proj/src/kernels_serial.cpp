// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Reference loop nests. Kept for tests and benchmarks; production code goes
// through the OpenMP variants.

#include <vector>

#include "kernel_rows.hpp"
#include "lmc/kernels.hpp"

namespace lmc::kernels::serial {

void matmul(std::span<const float> a, std::span<const float> b,
            std::span<float> c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    rows::matmul_row(a.data() + i * k, b.data(), c.data() + i * m, k, m);
}

void matmul_grad_a(std::span<const float> dc, std::span<const float> b,
                   std::span<float> da, std::size_t n, std::size_t k,
                   std::size_t m) {
  std::vector<float> bt(k * m);
  rows::transpose(b.data(), bt.data(), k, m);
  for (std::size_t i = 0; i < n; ++i)
    rows::matmul_grad_a_row(dc.data() + i * m, bt.data(), da.data() + i * k, k,
                            m);
}

void matmul_grad_b(std::span<const float> a, std::span<const float> dc,
                   std::span<float> db, std::size_t n, std::size_t k,
                   std::size_t m) {
  for (std::size_t p = 0; p < k; ++p)
    rows::matmul_grad_b_row(a.data(), dc.data(), db.data() + p * m, p, n, k, m);
}

void attention(std::span<const float> q, std::span<const float> k,
               std::span<const float> v, std::span<float> out,
               std::span<float> probs, const AttentionShape& shape) {
  for (std::size_t b = 0; b < shape.batch; ++b)
    for (std::size_t h = 0; h < shape.heads; ++h)
      rows::attention_head(q.data(), k.data(), v.data(), out.data(),
                           probs.data(), shape, b, h);
}

void attention_grad(std::span<const float> q, std::span<const float> k,
                    std::span<const float> v, std::span<const float> probs,
                    std::span<const float> dout, std::span<float> dq,
                    std::span<float> dk, std::span<float> dv,
                    const AttentionShape& shape) {
  std::vector<float> scratch(shape.seq_len);
  for (std::size_t b = 0; b < shape.batch; ++b)
    for (std::size_t h = 0; h < shape.heads; ++h)
      rows::attention_head_grad(q.data(), k.data(), v.data(), probs.data(),
                                dout.data(), dq.data(), dk.data(), dv.data(),
                                shape, b, h, scratch.data());
}

void layer_norm(std::span<const float> x, std::span<const float> gain,
                std::span<const float> shift, std::span<float> out,
                std::span<float> xhat, std::span<float> rstd, std::size_t rows,
                std::size_t width) {
  for (std::size_t r = 0; r < rows; ++r)
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
  for (std::size_t r = 0; r < rows; ++r)
    rows::layer_norm_grad_row(dout.data() + r * width, xhat.data() + r * width,
                              rstd[r], gain.data(), dx.data() + r * width,
                              width);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* go = dout.data() + r * width;
    const float* xh = xhat.data() + r * width;
    for (std::size_t j = 0; j < width; ++j) {
      dgain[j] += go[j] * xh[j];
      dshift[j] += go[j];
    }
  }
}

}  // namespace lmc::kernels::serial
