// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/train.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "lmc/optim.hpp"

namespace lmc {

namespace {

constexpr double kDivergenceLr = 1e-4;
constexpr std::size_t kEvalChunk = 8;

std::vector<std::vector<float>> snapshot(const std::vector<Tensor>& params) {
  std::vector<std::vector<float>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.values().begin(), p.values().end());
  return out;
}

void restore(std::vector<Tensor>& params,
             const std::vector<std::vector<float>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i)
    std::copy(values[i].begin(), values[i].end(),
              params[i].mutable_values().begin());
}

}  // namespace

EvalResult evaluate(const CodecModel& model, std::span<const int> tokens,
                    std::size_t sequences, double lambda) {
  const std::size_t T = model.config().seq_len;
  sequences = std::min(sequences, window_count(tokens, T));
  if (sequences == 0) throw Error("evaluate: no validation windows");
  NoGradGuard no_grad;
  EvalResult r;
  for (std::size_t first = 0; first < sequences; first += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, sequences - first);
    const RDLossTerms t = rd_loss(model, window_batch(tokens, first, n, T), lambda);
    const double w = static_cast<double>(n) / static_cast<double>(sequences);
    r.distortion += w * t.distortion;
    r.rate_y_bpt += w * t.rate_y_bpt;
    r.rate_w_bpt += w * t.rate_w_bpt;
  }
  r.loss = r.distortion + lambda * r.total_bpt();
  return r;
}

std::vector<bool> decay_mask(CodecModel& model) {
  std::vector<bool> mask;
  model.visit_parameters([&mask](const std::string& name, Tensor& t) {
    const bool exempt = name.rfind("hyper.", 0) == 0 ||
                        name.find("start_token") != std::string::npos ||
                        t.rows() == 1;
    mask.push_back(!exempt);
  });
  return mask;
}

TrainResult train_codec(CodecModel& model, const CorpusSplit& data,
                        const TrainConfig& config, double lambda,
                        std::ostream* log) {
  if (!(lambda >= 0.0)) throw Error("train: lambda must be non-negative");
  if (config.warmup_steps >= config.max_steps)
    throw Error("train: warmup_steps must be below max_steps");
  const std::size_t T = model.config().seq_len;
  std::vector<Tensor> params = model.parameters();
  const std::vector<bool> decay = decay_mask(model);
  std::mt19937_64 rng(config.seed);
  OptimizerState state;
  AdamWConfig adam;
  adam.betas = {static_cast<float>(config.beta1),
                static_cast<float>(config.beta2)};
  adam.weight_decay = static_cast<float>(config.weight_decay);
  double lr_max = config.lr_max;

  const std::size_t tokens_per_step =
      config.batch * config.accumulation * T;
  const std::size_t steps_per_epoch =
      std::max<std::size_t>(1, data.train.size() / tokens_per_step);
  const std::size_t eval_sequences = config.eval_batches * config.batch;

  TrainResult result;
  result.best = evaluate(model, data.validation, eval_sequences, lambda);
  auto best_values = snapshot(params);
  if (log != nullptr)
    *log << "step,lr,loss,distortion,rate_y_bpt,rate_w_bpt\n";

  for (std::size_t step = 0; step < config.max_steps; ++step) {
    const double lr = lr_schedule(static_cast<std::int64_t>(step + 1),
                                  static_cast<std::int64_t>(config.warmup_steps),
                                  static_cast<std::int64_t>(config.max_steps),
                                  lr_max, config.lr_min);
    TrainLogEntry entry;
    entry.step = step + 1;
    entry.lr = lr;
    bool finite = true;
    const float micro = 1.0f / static_cast<float>(config.accumulation);
    for (std::size_t a = 0; a < config.accumulation && finite; ++a) {
      const TokenBatch batch = sample_batch(data.train, config.batch, T, rng);
      std::optional<RDLossTerms> step_terms;
      try {
        step_terms = rd_loss(model, batch, lambda);
      } catch (const NonFiniteError&) {
        finite = false;
        break;
      }
      RDLossTerms& terms = *step_terms;
      const double loss = terms.loss.item();
      finite = std::isfinite(loss);
      if (!finite) break;
      scale(terms.loss, micro).backward();
      entry.loss += loss * micro;
      entry.distortion += terms.distortion * micro;
      entry.rate_y_bpt += terms.rate_y_bpt * micro;
      entry.rate_w_bpt += terms.rate_w_bpt * micro;
    }
    const double norm = finite ? clip_grad_norm(params, config.grad_clip) : 0.0;
    if (!finite || !std::isfinite(norm)) {
      // Restart from the best parameters at a lower peak learning rate; a
      // second divergence is fatal.
      if (++result.restarts > 1)
        throw Error("train: loss diverged twice (step " +
                    std::to_string(step + 1) + ")");
      restore(params, best_values);
      for (auto& p : params) p.zero_grad();
      state = OptimizerState{};
      lr_max = kDivergenceLr;
      continue;
    }
    adam.lr = static_cast<float>(lr);
    adamw_step(params, decay, state, adam);
    for (auto& p : params) p.zero_grad();
    result.steps = step + 1;
    result.log.push_back(entry);
    if (log != nullptr)
      *log << entry.step << ',' << entry.lr << ',' << entry.loss << ','
           << entry.distortion << ',' << entry.rate_y_bpt << ','
           << entry.rate_w_bpt << '\n';

    const bool last = step + 1 == config.max_steps;
    if ((step + 1) % config.eval_every == 0 || last) {
      const EvalResult e =
          evaluate(model, data.validation, eval_sequences, lambda);
      if (std::isfinite(e.loss) && e.loss < result.best.loss) {
        result.best = e;
        result.best_step = step + 1;
        best_values = snapshot(params);
      } else if ((step + 1 - result.best_step) / steps_per_epoch >=
                 config.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }
  restore(params, best_values);
  return result;
}

}  // namespace lmc
