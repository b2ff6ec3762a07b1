// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernel_rows.hpp"

#include <algorithm>
#include <cmath>

namespace lmc::kernels {

void attend_row(const float* q, const float* keys, const float* values,
                std::size_t n_keys, std::size_t key_stride,
                std::size_t value_stride, std::size_t head_dim_qk,
                std::size_t head_dim_v, float scale, float* probs,
                float* out) {
  float max_score = -INFINITY;
  for (std::size_t j = 0; j < n_keys; ++j) {
    const float* key = keys + j * key_stride;
    float dot = 0.0f;
    for (std::size_t d = 0; d < head_dim_qk; ++d) dot += q[d] * key[d];
    probs[j] = dot * scale;
    max_score = std::max(max_score, probs[j]);
  }
  float total = 0.0f;
  for (std::size_t j = 0; j < n_keys; ++j) {
    probs[j] = std::exp(probs[j] - max_score);
    total += probs[j];
  }
  const float inv = 1.0f / total;
  for (std::size_t d = 0; d < head_dim_v; ++d) out[d] = 0.0f;
  for (std::size_t j = 0; j < n_keys; ++j) {
    probs[j] *= inv;
    const float p = probs[j];
    const float* value = values + j * value_stride;
    for (std::size_t d = 0; d < head_dim_v; ++d) out[d] += p * value[d];
  }
}

void layer_norm_row(const float* x, const float* gain, const float* shift,
                    std::size_t width, float* out, float* xhat, float* rstd) {
  float mean = 0.0f;
  for (std::size_t j = 0; j < width; ++j) mean += x[j];
  mean /= static_cast<float>(width);
  float var = 0.0f;
  for (std::size_t j = 0; j < width; ++j) {
    const float d = x[j] - mean;
    var += d * d;
  }
  var /= static_cast<float>(width);
  const float r = 1.0f / std::sqrt(var + 1e-5f);
  for (std::size_t j = 0; j < width; ++j) {
    const float n = (x[j] - mean) * r;
    if (xhat != nullptr) xhat[j] = n;
    out[j] = n * gain[j] + shift[j];
  }
  if (rstd != nullptr) *rstd = r;
}

namespace rows {

void attention_head(const float* q, const float* k, const float* v, float* out,
                    float* probs, const AttentionShape& s, std::size_t b,
                    std::size_t h) {
  const std::size_t T = s.seq_len;
  const std::size_t wq = s.width_qk();
  const std::size_t wv = s.width_v();
  const float scale = 1.0f / std::sqrt(static_cast<float>(s.head_dim_qk));
  const std::size_t row0 = b * T;
  const float* kbase = k + row0 * wq + h * s.head_dim_qk;
  const float* vbase = v + row0 * wv + h * s.head_dim_v;
  float* pbase = probs + (b * s.heads + h) * T * T;
  for (std::size_t i = 0; i < T; ++i) {
    float* prow = pbase + i * T;
    attend_row(q + (row0 + i) * wq + h * s.head_dim_qk, kbase, vbase, i + 1,
               wq, wv, s.head_dim_qk, s.head_dim_v, scale, prow,
               out + (row0 + i) * wv + h * s.head_dim_v);
    for (std::size_t j = i + 1; j < T; ++j) prow[j] = 0.0f;
  }
}

void attention_head_grad(const float* q, const float* k, const float* v,
                         const float* probs, const float* dout, float* dq,
                         float* dk, float* dv, const AttentionShape& s,
                         std::size_t b, std::size_t h, float* scratch) {
  const std::size_t T = s.seq_len;
  const std::size_t wq = s.width_qk();
  const std::size_t wv = s.width_v();
  const std::size_t dqk = s.head_dim_qk;
  const std::size_t dvh = s.head_dim_v;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dqk));
  const std::size_t row0 = b * T;
  const float* pbase = probs + (b * s.heads + h) * T * T;
  float* dscore = scratch;  // T entries
  for (std::size_t i = 0; i < T; ++i) {
    const float* prow = pbase + i * T;
    const float* go = dout + (row0 + i) * wv + h * dvh;
    // dP_ij = dout_i . v_j ; dv_j += P_ij dout_i
    float weighted = 0.0f;
    for (std::size_t j = 0; j <= i; ++j) {
      const float* vj = v + (row0 + j) * wv + h * dvh;
      float* dvj = dv + (row0 + j) * wv + h * dvh;
      float dp = 0.0f;
      for (std::size_t d = 0; d < dvh; ++d) {
        dp += go[d] * vj[d];
        dvj[d] += prow[j] * go[d];
      }
      dscore[j] = dp;
      weighted += prow[j] * dp;
    }
    const float* qi = q + (row0 + i) * wq + h * dqk;
    float* dqi = dq + (row0 + i) * wq + h * dqk;
    for (std::size_t j = 0; j <= i; ++j) {
      const float ds = prow[j] * (dscore[j] - weighted) * scale;
      const float* kj = k + (row0 + j) * wq + h * dqk;
      float* dkj = dk + (row0 + j) * wq + h * dqk;
      for (std::size_t d = 0; d < dqk; ++d) {
        dqi[d] += ds * kj[d];
        dkj[d] += ds * qi[d];
      }
    }
  }
}

void layer_norm_grad_row(const float* dout, const float* xhat, float rstd,
                         const float* gain, float* dx, std::size_t width) {
  float mean_g = 0.0f;
  float mean_gx = 0.0f;
  for (std::size_t j = 0; j < width; ++j) {
    const float g = dout[j] * gain[j];
    mean_g += g;
    mean_gx += g * xhat[j];
  }
  mean_g /= static_cast<float>(width);
  mean_gx /= static_cast<float>(width);
  for (std::size_t j = 0; j < width; ++j) {
    const float g = dout[j] * gain[j];
    dx[j] += (g - mean_g - xhat[j] * mean_gx) * rstd;
  }
}

}  // namespace rows
}  // namespace lmc::kernels
