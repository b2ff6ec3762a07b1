// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Rate-distortion training loop: AdamW with warmup + cosine schedule,
// gradient accumulation and clipping, periodic validation, patience-based
// early stopping and restart-from-best on divergence.

#ifndef LMC_TRAIN_HPP_
#define LMC_TRAIN_HPP_

#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "lmc/codec.hpp"
#include "lmc/config.hpp"
#include "lmc/corpus.hpp"

namespace lmc {

struct EvalResult {
  double distortion = 0.0;  // nats per token
  double rate_y_bpt = 0.0;
  double rate_w_bpt = 0.0;
  double loss = 0.0;
  double total_bpt() const { return rate_y_bpt + rate_w_bpt; }
};

// Averages rd_loss terms over `sequences` validation windows (no gradients).
EvalResult evaluate(const CodecModel& model, std::span<const int> tokens,
                    std::size_t sequences, double lambda);

struct TrainLogEntry {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double distortion = 0.0;
  double rate_y_bpt = 0.0;
  double rate_w_bpt = 0.0;
};

struct TrainResult {
  std::size_t steps = 0;
  EvalResult best;
  std::size_t best_step = 0;
  std::size_t restarts = 0;
  bool early_stopped = false;
  std::vector<TrainLogEntry> log;
};

// Parameters that receive decoupled weight decay: matrices of the networks.
// Norm gains/shifts, the start token and the hyper density are exempt.
std::vector<bool> decay_mask(CodecModel& model);

// Trains in place and leaves the best-validation parameters in `model`.
// `log`, if given, receives one CSV line per step
// (step,lr,loss,distortion,rate_y_bpt,rate_w_bpt) after a header.
TrainResult train_codec(CodecModel& model, const CorpusSplit& data,
                        const TrainConfig& config, double lambda,
                        std::ostream* log = nullptr);

}  // namespace lmc

#endif  // LMC_TRAIN_HPP_
