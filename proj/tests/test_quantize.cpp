// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "lmc/quantize.hpp"
#include "test_support.hpp"

using namespace lmc;

TEST_CASE("rounding is to nearest with ties to even") {
  CHECK(round_half_even(0.4f) == 0.0f);
  CHECK(round_half_even(0.6f) == 1.0f);
  CHECK(round_half_even(-1.5f) == -2.0f);
  CHECK(round_half_even(2.5f) == 2.0f);
  CHECK(round_half_even(3.5f) == 4.0f);
  CHECK(round_half_even(-0.5f) == 0.0f);
  CHECK(round_half_even(-7.0f) == -7.0f);
}

TEST_CASE("quantization properties over random inputs") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<float> u(-50.0f, 50.0f);
  std::vector<float> v(5000);
  for (auto& x : v) x = u(rng);
  const Tensor x = Tensor::from(v, 50, 100);
  const Tensor q = quantize_ste(x);
  const Tensor qq = quantize_ste(q);
  CHECK(test::bitwise_equal(q.values(), qq.values()));  // idempotent
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(std::abs(q.values()[i] - v[i]) <= 0.5f);
    CHECK(q.values()[i] == std::nearbyint(q.values()[i]));
  }
  const QuantizedLatent lat = to_latent(x);
  CHECK(lat.rows == 50);
  CHECK(lat.cols == 100);
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(static_cast<float>(lat.symbols[i]) == q.values()[i]);
  const Tensor back = lat.to_tensor();
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(back.values()[i] == q.values()[i]);  // -0 and +0 compare equal
}

TEST_CASE("the straight-through gradient is the identity") {
  const Tensor x = test::random_tensor(3, 7, 4, 5.0f, true);
  const Tensor up = test::random_tensor(3, 7, 5);
  Tensor q = quantize_ste(x);
  q.backward(up.values());
  CHECK(test::bitwise_equal(x.grad(), up.values()));
}

TEST_CASE("non-finite and out-of-range values are rejected") {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const float inf = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(quantize_ste(Tensor::from({1.0f, nan}, 1, 2)), Error);
  CHECK_THROWS_AS(quantize_ste(Tensor::from({-inf}, 1, 1)), Error);
  CHECK_THROWS_AS(to_latent(Tensor::from({inf}, 1, 1)), Error);
  CHECK_THROWS_AS(to_latent(Tensor::from({3e9f}, 1, 1)), Error);
}
