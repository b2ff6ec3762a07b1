// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Dense float kernels used by the autograd engine and by the incremental
// inference path.
//
// Every kernel exists twice: `serial::` is the plain reference loop nest and
// `omp::` distributes independent output rows over OpenMP threads. Both
// variants accumulate each output element in the same order, so their results
// are bitwise identical; tests/test_kernels.cpp asserts that. The unqualified
// functions in `lmc::kernels` dispatch to the OpenMP variant.
//
// A second property the codec depends on: the value of an output row never
// depends on how many other rows are processed in the same call. Running a
// causal model on a prefix therefore reproduces the prefix rows of a
// full-length run exactly.

#ifndef LMC_KERNELS_HPP_
#define LMC_KERNELS_HPP_

#include <cmath>
#include <cstddef>
#include <span>

namespace lmc::kernels {

/// Geometry of a batched multi-head causal attention call. Rows are laid out
/// as `batch` consecutive sequences of `seq_len` rows each.
struct AttentionShape {
  std::size_t batch = 1;
  std::size_t seq_len = 1;
  std::size_t heads = 1;
  std::size_t head_dim_qk = 1;
  std::size_t head_dim_v = 1;

  std::size_t rows() const { return batch * seq_len; }
  std::size_t width_qk() const { return heads * head_dim_qk; }
  std::size_t width_v() const { return heads * head_dim_v; }
};

// GELU, tanh approximation.
inline float gelu(float v) {
  constexpr float c = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * v * (1.0f + std::tanh(c * (v + 0.044715f * v * v * v)));
}

inline float gelu_derivative(float v) {
  constexpr float c = 0.7978845608028654f;
  const float t = std::tanh(c * (v + 0.044715f * v * v * v));
  const float du = c * (1.0f + 3.0f * 0.044715f * v * v);
  return 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du;
}

// Attention for a single query row against `n_keys` cached keys/values.
// `probs` receives the softmax weights (n_keys entries). Shared by the batched
// kernels and by the incremental runner.
void attend_row(const float* q, const float* keys, const float* values,
                std::size_t n_keys, std::size_t key_stride,
                std::size_t value_stride, std::size_t head_dim_qk,
                std::size_t head_dim_v, float scale, float* probs, float* out);

// Layer normalization of one row, eps = 1e-5. Writes the normalized values
// (before gain/shift) into `xhat` when it is non-null.
void layer_norm_row(const float* x, const float* gain, const float* shift,
                    std::size_t width, float* out, float* xhat, float* rstd);

namespace serial {

// c[n x m] = a[n x k] * b[k x m]
void matmul(std::span<const float> a, std::span<const float> b,
            std::span<float> c, std::size_t n, std::size_t k, std::size_t m);
// da[n x k] += dc[n x m] * b^T
void matmul_grad_a(std::span<const float> dc, std::span<const float> b,
                   std::span<float> da, std::size_t n, std::size_t k,
                   std::size_t m);
// db[k x m] += a^T * dc
void matmul_grad_b(std::span<const float> a, std::span<const float> dc,
                   std::span<float> db, std::size_t n, std::size_t k,
                   std::size_t m);

// probs holds batch*heads*seq_len*seq_len softmax weights (upper triangle 0).
void attention(std::span<const float> q, std::span<const float> k,
               std::span<const float> v, std::span<float> out,
               std::span<float> probs, const AttentionShape& shape);
void attention_grad(std::span<const float> q, std::span<const float> k,
                    std::span<const float> v, std::span<const float> probs,
                    std::span<const float> dout, std::span<float> dq,
                    std::span<float> dk, std::span<float> dv,
                    const AttentionShape& shape);

void layer_norm(std::span<const float> x, std::span<const float> gain,
                std::span<const float> shift, std::span<float> out,
                std::span<float> xhat, std::span<float> rstd, std::size_t rows,
                std::size_t width);
void layer_norm_grad(std::span<const float> dout, std::span<const float> xhat,
                     std::span<const float> rstd, std::span<const float> gain,
                     std::span<float> dx, std::span<float> dgain,
                     std::span<float> dshift, std::size_t rows,
                     std::size_t width);

}  // namespace serial

namespace omp {

void matmul(std::span<const float> a, std::span<const float> b,
            std::span<float> c, std::size_t n, std::size_t k, std::size_t m);
void matmul_grad_a(std::span<const float> dc, std::span<const float> b,
                   std::span<float> da, std::size_t n, std::size_t k,
                   std::size_t m);
void matmul_grad_b(std::span<const float> a, std::span<const float> dc,
                   std::span<float> db, std::size_t n, std::size_t k,
                   std::size_t m);
void attention(std::span<const float> q, std::span<const float> k,
               std::span<const float> v, std::span<float> out,
               std::span<float> probs, const AttentionShape& shape);
void attention_grad(std::span<const float> q, std::span<const float> k,
                    std::span<const float> v, std::span<const float> probs,
                    std::span<const float> dout, std::span<float> dq,
                    std::span<float> dk, std::span<float> dv,
                    const AttentionShape& shape);
void layer_norm(std::span<const float> x, std::span<const float> gain,
                std::span<const float> shift, std::span<float> out,
                std::span<float> xhat, std::span<float> rstd, std::size_t rows,
                std::size_t width);
void layer_norm_grad(std::span<const float> dout, std::span<const float> xhat,
                     std::span<const float> rstd, std::span<const float> gain,
                     std::span<float> dx, std::span<float> dgain,
                     std::span<float> dshift, std::size_t rows,
                     std::size_t width);

}  // namespace omp

using omp::attention;
using omp::attention_grad;
using omp::layer_norm;
using omp::layer_norm_grad;
using omp::matmul;
using omp::matmul_grad_a;
using omp::matmul_grad_b;

int max_threads();

}  // namespace lmc::kernels

#endif  // LMC_KERNELS_HPP_
