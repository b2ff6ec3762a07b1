// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Per-row bodies shared by the serial and OpenMP kernels. Keeping a single
// definition is what makes the two variants agree bit for bit.

#ifndef LMC_SRC_KERNEL_ROWS_HPP_
#define LMC_SRC_KERNEL_ROWS_HPP_

#include <cstddef>

#include "lmc/kernels.hpp"

namespace lmc::kernels::rows {

// c_row[m] = a_row[k] * b[k x m]
inline void matmul_row(const float* a_row, const float* b, float* c_row,
                       std::size_t k, std::size_t m) {
  for (std::size_t j = 0; j < m; ++j) c_row[j] = 0.0f;
  for (std::size_t p = 0; p < k; ++p) {
    const float a = a_row[p];
    const float* b_row = b + p * m;
    for (std::size_t j = 0; j < m; ++j) c_row[j] += a * b_row[j];
  }
}

// da_row[k] += dc_row[m] * bt[m x k]   (bt is b transposed)
inline void matmul_grad_a_row(const float* dc_row, const float* bt,
                              float* da_row, std::size_t k, std::size_t m) {
  for (std::size_t j = 0; j < m; ++j) {
    const float g = dc_row[j];
    const float* bt_row = bt + j * k;
    for (std::size_t p = 0; p < k; ++p) da_row[p] += g * bt_row[p];
  }
}

// db_row[m] += sum_i a[i, p] * dc[i, :]
inline void matmul_grad_b_row(const float* a, const float* dc, float* db_row,
                              std::size_t p, std::size_t n, std::size_t k,
                              std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const float av = a[i * k + p];
    const float* dc_row = dc + i * m;
    for (std::size_t j = 0; j < m; ++j) db_row[j] += av * dc_row[j];
  }
}

inline void transpose(const float* src, float* dst, std::size_t rows,
                      std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// One (sequence, head) slice of the attention forward pass.
void attention_head(const float* q, const float* k, const float* v, float* out,
                    float* probs, const AttentionShape& s, std::size_t b,
                    std::size_t h);
void attention_head_grad(const float* q, const float* k, const float* v,
                         const float* probs, const float* dout, float* dq,
                         float* dk, float* dv, const AttentionShape& s,
                         std::size_t b, std::size_t h, float* scratch);

void layer_norm_grad_row(const float* dout, const float* xhat, float rstd,
                         const float* gain, float* dx, std::size_t width);

}  // namespace lmc::kernels::rows

#endif  // LMC_SRC_KERNEL_ROWS_HPP_
