// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the unit tests.

#ifndef LMC_TESTS_TEST_SUPPORT_HPP_
#define LMC_TESTS_TEST_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "lmc/codec.hpp"
#include "lmc/tensor.hpp"

namespace lmc::test {

// A codec small enough to build and run in milliseconds.
inline ModelConfig tiny_config(EntropyModelKind kind = EntropyModelKind::kProposed,
                               std::size_t seq_len = 12) {
  ModelConfig c;
  c.vocab = 32;
  c.seq_len = seq_len;
  c.embed = 16;
  c.layers = 3;
  c.heads = 2;
  c.channels = 2;
  c.split = 1;
  c.analysis_widths = {8, 4, 2};
  c.synthesis_widths = {4, 8, 32};
  c.entropy_model = kind;
  c.seed = 7;
  return c;
}

inline std::vector<int> random_tokens(std::size_t n, std::size_t vocab,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> t(n);
  for (auto& v : t) v = static_cast<int>(rng() % vocab);
  return t;
}

inline Tensor random_tensor(std::size_t rows, std::size_t cols,
                            std::uint64_t seed, float scale = 1.0f,
                            bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, scale);
  std::vector<float> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return Tensor::from(std::move(v), rows, cols, requires_grad);
}

inline bool bitwise_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// Checks d loss / d param for parameters that live inside a model: the
// analytic gradient comes from backward(), the numeric one from Richardson-
// extrapolated central differences on the parameter values themselves.
// Only the `coords` first coordinates (or all if fewer) are checked. Uses the
// same float32 rounding allowance as lmc::grad_check.
inline double param_grad_rel_error(Tensor& param,
                                   const std::function<Tensor()>& loss,
                                   double eps = 1e-2, std::size_t coords = 16) {
  param.zero_grad();
  Tensor l = loss();
  const double base = std::abs(static_cast<double>(l.item()));
  l.backward();
  const std::vector<float> analytic(param.grad().begin(), param.grad().end());
  param.zero_grad();
  auto values = param.mutable_values();
  auto eval = [&](std::size_t i, double d) {
    NoGradGuard guard;
    const float saved = values[i];
    values[i] = static_cast<float>(saved + d);
    const double applied = static_cast<double>(values[i]) - saved;
    const double out = loss().item();
    values[i] = saved;
    return std::pair{out, applied};
  };
  double worst = 0.0;
  const std::size_t n = std::min(coords, values.size());
  for (std::size_t i = 0; i < n; ++i) {
    double scale = base;
    auto central = [&](double h) {
      const auto [fp, ap] = eval(i, h);
      const auto [fm, am] = eval(i, -h);
      scale = std::max({scale, std::abs(fp), std::abs(fm)});
      return (fp - fm) / (ap - am);
    };
    const double numeric = (4.0 * central(eps / 2) - central(eps)) / 3.0;
    const double allowance =
        3.0 * std::numeric_limits<float>::epsilon() * scale / eps;
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst,
                     std::max(0.0, std::abs(a - numeric) - allowance) / denom);
  }
  return worst;
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol, int depth = 0) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6 * (fa + 4 * fm + fb);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double left = (m - a) / 6 * (fa + 4 * f(lm) + fm);
  const double right = (b - m) / 6 * (fm + 4 * f(rm) + fb);
  if (depth > 40 || std::abs(left + right - whole) < 15 * tol)
    return left + right + (left + right - whole) / 15;
  return adaptive_simpson(f, a, m, tol / 2, depth + 1) +
         adaptive_simpson(f, m, b, tol / 2, depth + 1);
}

// Adaptive Simpson over [a, b], pre-split into 20 pieces.
inline double integrate(const std::function<double(double)>& f, double a, double b) {
  // Split first so the recursion does not settle on a coarse sampling.
  double total = 0.0;
  const int pieces = 20;
  for (int i = 0; i < pieces; ++i) {
    const double lo = a + (b - a) * i / pieces, hi = a + (b - a) * (i + 1) / pieces;
    total += adaptive_simpson(f, lo, hi, 1e-8);
  }
  return total;
}

}  // namespace lmc::test

#endif  // LMC_TESTS_TEST_SUPPORT_HPP_
