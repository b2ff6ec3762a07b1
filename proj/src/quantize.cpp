// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/quantize.hpp"

#include <cfenv>
#include <cmath>
#include <limits>

namespace lmc {

float round_half_even(float v) {
  // nearbyint honours the current rounding mode, which is round-to-nearest-
  // even unless somebody changed it.
  if (std::fegetround() != FE_TONEAREST) std::fesetround(FE_TONEAREST);
  return std::nearbyint(v);
}

Tensor quantize_ste(const Tensor& x) {
  std::vector<float> out(x.size());
  const auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(v[i]))
      throw NonFiniteError("quantize_ste: non-finite input at element " +
                  std::to_string(i));
    out[i] = round_half_even(v[i]);
  }
  return make_result(x.rows(), x.cols(), std::move(out), {x},
                     [](detail::Node& self) {
                       auto& in = *self.parents[0];
                       if (!in.requires_grad) return;
                       auto g = in.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[i];
                     });
}

QuantizedLatent to_latent(const Tensor& x) {
  QuantizedLatent q;
  q.rows = x.rows();
  q.cols = x.cols();
  q.symbols.resize(x.size());
  const auto v = x.values();
  constexpr float kLimit = static_cast<float>(1 << 30);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]) || std::abs(v[i]) > kLimit)
      throw Error("to_latent: value out of integer range at element " +
                  std::to_string(i));
    q.symbols[i] = static_cast<std::int32_t>(round_half_even(v[i]));
  }
  return q;
}

Tensor QuantizedLatent::to_tensor() const {
  std::vector<float> v(symbols.begin(), symbols.end());
  return Tensor::from(std::move(v), rows, cols);
}

}  // namespace lmc
