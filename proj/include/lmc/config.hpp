// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration in JSON form and the hash that binds a checkpoint
// to its architecture.
//
// File layout (all keys optional, defaults shown by `lmcodec train
// --print-config`):
//
//   {
//     "format": 1,
//     "model":   { "vocab", "seq_len", "embed", "layers", "heads",
//                  "channels", "split", "analysis_widths",
//                  "synthesis_widths", "entropy_model", "seed" },
//     "train":   { "lambdas", "splits", "batch", "accumulation", "max_steps",
//                  "warmup_steps", "lr_max", "lr_min", "beta1", "beta2",
//                  "weight_decay", "grad_clip", "eval_every", "eval_batches",
//                  "patience", "warm_start", "seed" },
//     "analyze": { "samples", "draws", "arnoldi_iterations",
//                  "lipschitz_samples", "lipschitz_iterations",
//                  "rd_sequences", "seed" },
//     "corpus": "data/shakespeare.txt",
//     "output_dir": "runs"
//   }

#ifndef LMC_CONFIG_HPP_
#define LMC_CONFIG_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmc/nn.hpp"

namespace lmc {

inline constexpr int kConfigFormat = 1;

struct TrainConfig {
  std::vector<double> lambdas{0.001, 0.0025, 0.0075, 0.01};
  std::vector<std::size_t> splits{3};
  std::size_t batch = 8;
  std::size_t accumulation = 4;
  std::size_t max_steps = 2000;
  std::size_t warmup_steps = 100;
  double lr_max = 6e-4;
  double lr_min = 6e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.1;
  double grad_clip = 1.0;
  std::size_t eval_every = 100;
  std::size_t eval_batches = 8;
  std::size_t patience = 5;  // evaluations are compared in corpus epochs
  // Each lambda after the first (per split) starts from the previous one.
  bool warm_start = true;
  std::uint64_t seed = 1;
};

struct AnalyzeConfig {
  std::size_t samples = 200;       // N
  std::size_t draws = 2000;        // M
  std::size_t arnoldi_iterations = 256;
  std::size_t lipschitz_samples = 20;
  std::size_t lipschitz_iterations = 50;
  std::size_t rd_sequences = 100;  // validation windows per rd-sweep point
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  AnalyzeConfig analyze;
  std::string corpus = "data/shakespeare.txt";
  std::string output_dir = "runs";

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::uint64_t fnv1a64(const std::string& text);

// Hash of the canonical JSON of the model configuration (format version
// included), which also fixes the entropy-model variant.
std::uint64_t config_hash(const ModelConfig& config);

std::string hex64(std::uint64_t value);

}  // namespace lmc

#endif  // LMC_CONFIG_HPP_
