// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/optim.hpp"

#include <cmath>
#include <numbers>

namespace lmc {

void adamw_step(std::vector<Tensor>& params, const std::vector<bool>& decay,
                OptimizerState& state, const AdamWConfig& config) {
  if (!decay.empty() && decay.size() != params.size())
    throw Error("adamw_step: decay mask size mismatch");
  if (config.lr < 0.0f) throw Error("adamw_step: negative learning rate");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0f);
      state.second_moment.emplace_back(p.size(), 0.0f);
    }
  }
  if (state.first_moment.size() != params.size())
    throw Error("adamw_step: optimizer state does not match parameters");
  ++state.step;
  const auto [b1, b2] = config.betas;
  const double c1 = 1.0 - std::pow(static_cast<double>(b1), state.step);
  const double c2 = 1.0 - std::pow(static_cast<double>(b2), state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != params[i].size())
      throw Error("adamw_step: moment shape mismatch for parameter " +
                  std::to_string(i));
    auto values = params[i].mutable_values();
    const auto grad = std::as_const(params[i]).grad();
    const bool decayed = decay.empty() || decay[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const float g = grad[j];
      if (decayed) values[j] -= config.lr * config.weight_decay * values[j];
      m[j] = b1 * m[j] + (1.0f - b1) * g;
      v[j] = b2 * v[j] + (1.0f - b2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      values[j] -= static_cast<float>(config.lr * mhat /
                                      (std::sqrt(vhat) + config.eps));
    }
  }
}

double lr_schedule(std::int64_t step, std::int64_t warmup_steps,
                   std::int64_t max_steps, double lr_max, double lr_min) {
  if (step < warmup_steps)
    return lr_max * static_cast<double>(step) /
           static_cast<double>(warmup_steps);
  if (step >= max_steps) return lr_min;
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(max_steps - warmup_steps);
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return lr_min + cosine * (lr_max - lr_min);
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params)
    for (float g : p.grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto& p : params)
      for (float& g : p.grad()) g *= s;
  }
  return norm;
}

}  // namespace lmc
