// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef LMC_OPTIM_HPP_
#define LMC_OPTIM_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "lmc/tensor.hpp"

namespace lmc {

struct OptimizerState {
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;
  std::uint64_t step = 0;
};

struct AdamWConfig {
  float lr = 6e-4f;
  std::pair<float, float> betas{0.9f, 0.95f};
  float weight_decay = 0.1f;
  float eps = 1e-8f;
};

// One AdamW update with decoupled weight decay: p <- p - lr*wd*p, then the
// bias-corrected Adam step. `decay[i]` selects which parameters are decayed
// (empty = all). Moments are allocated on first use.
void adamw_step(std::vector<Tensor>& params, const std::vector<bool>& decay,
                OptimizerState& state, const AdamWConfig& config);

// Linear warmup 0 -> lr_max over `warmup_steps`, cosine decay to lr_min at
// `max_steps`, lr_min afterwards.
double lr_schedule(std::int64_t step, std::int64_t warmup_steps,
                   std::int64_t max_steps, double lr_max, double lr_min);

// Scales all gradients so that their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

}  // namespace lmc

#endif  // LMC_OPTIM_HPP_
