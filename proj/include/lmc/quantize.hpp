// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef LMC_QUANTIZE_HPP_
#define LMC_QUANTIZE_HPP_

#include <cstdint>
#include <vector>

#include "lmc/tensor.hpp"

namespace lmc {

// Integer latent (Y is T x E, W is T x C) with a fixed unit step.
struct QuantizedLatent {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> symbols;
  int delta = 1;

  std::int32_t at(std::size_t r, std::size_t c) const {
    return symbols[r * cols + c];
  }
  Tensor to_tensor() const;
  bool operator==(const QuantizedLatent&) const = default;
};

// Round-half-to-even in the forward pass; the backward pass copies the
// upstream gradient unchanged. Throws on non-finite input.
Tensor quantize_ste(const Tensor& x);

// Rounds (half to even) into integer symbols.
QuantizedLatent to_latent(const Tensor& x);

float round_half_even(float v);

}  // namespace lmc

#endif  // LMC_QUANTIZE_HPP_
