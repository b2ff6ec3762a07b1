// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace lmc {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(std::string("config key '") + key + "': " + e.what());
  }
}

// Keys absent from the serialized defaults are typos, not extensions.
void reject_unknown(const json& j, const json& reference, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!reference.contains(key))
      throw Error("unknown config key '" + where + key + "'");
    if (value.is_object() && reference.at(key).is_object())
      reject_unknown(value, reference.at(key), where + key + ".");
  }
}

}  // namespace

nlohmann::json to_json(const ModelConfig& c) {
  return json{{"vocab", c.vocab},
              {"seq_len", c.seq_len},
              {"embed", c.embed},
              {"layers", c.layers},
              {"heads", c.heads},
              {"channels", c.channels},
              {"split", c.split},
              {"analysis_widths", c.analysis_widths},
              {"synthesis_widths", c.synthesis_widths},
              {"entropy_model", to_string(c.entropy_model)},
              {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (!j.is_object()) throw Error("model config must be a JSON object");
  reject_unknown(j, to_json(ModelConfig{}), "model.");
  read(j, "vocab", c.vocab);
  read(j, "seq_len", c.seq_len);
  read(j, "embed", c.embed);
  read(j, "layers", c.layers);
  read(j, "heads", c.heads);
  read(j, "channels", c.channels);
  read(j, "split", c.split);
  read(j, "analysis_widths", c.analysis_widths);
  read(j, "synthesis_widths", c.synthesis_widths);
  std::string kind = to_string(c.entropy_model);
  read(j, "entropy_model", kind);
  c.entropy_model = entropy_model_from_string(kind);
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  model.validate();
  if (train.lambdas.empty()) throw Error("train.lambdas is empty");
  for (double l : train.lambdas)
    if (!(l >= 0.0)) throw Error("train.lambdas must be non-negative");
  for (auto s : train.splits)
    if (s < 1 || s >= model.layers)
      throw Error("train.splits entries must satisfy 1 <= split < layers");
  if (train.batch == 0 || train.accumulation == 0)
    throw Error("train.batch and train.accumulation must be positive");
  if (train.warmup_steps >= train.max_steps)
    throw Error("train.warmup_steps must be below train.max_steps");
  if (analyze.samples == 0 || analyze.draws == 0)
    throw Error("analyze.samples and analyze.draws must be positive");
  if (analyze.arnoldi_iterations == 0 || analyze.lipschitz_samples == 0 ||
      analyze.rd_sequences == 0)
    throw Error("analyze counts must be positive");
  if (train.eval_every == 0 || train.eval_batches == 0)
    throw Error("train.eval_every and train.eval_batches must be positive");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& t = c.train;
  const auto& a = c.analyze;
  return json{
      {"format", kConfigFormat},
      {"model", to_json(c.model)},
      {"train",
       {{"lambdas", t.lambdas},
        {"splits", t.splits},
        {"batch", t.batch},
        {"accumulation", t.accumulation},
        {"max_steps", t.max_steps},
        {"warmup_steps", t.warmup_steps},
        {"lr_max", t.lr_max},
        {"lr_min", t.lr_min},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"weight_decay", t.weight_decay},
        {"grad_clip", t.grad_clip},
        {"eval_every", t.eval_every},
        {"eval_batches", t.eval_batches},
        {"patience", t.patience},
        {"warm_start", t.warm_start},
        {"seed", t.seed}}},
      {"analyze",
       {{"samples", a.samples},
        {"draws", a.draws},
        {"arnoldi_iterations", a.arnoldi_iterations},
        {"lipschitz_samples", a.lipschitz_samples},
        {"lipschitz_iterations", a.lipschitz_iterations},
        {"rd_sequences", a.rd_sequences},
        {"seed", a.seed}}},
      {"corpus", c.corpus},
      {"output_dir", c.output_dir}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (!j.is_object()) throw Error("config must be a JSON object");
  reject_unknown(j, to_json(ExperimentConfig{}), "");
  int format = kConfigFormat;
  read(j, "format", format);
  if (format != kConfigFormat)
    throw Error("unsupported config format " + std::to_string(format));
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) {
    const json& t = j.at("train");
    auto& o = c.train;
    read(t, "lambdas", o.lambdas);
    read(t, "splits", o.splits);
    read(t, "batch", o.batch);
    read(t, "accumulation", o.accumulation);
    read(t, "max_steps", o.max_steps);
    read(t, "warmup_steps", o.warmup_steps);
    read(t, "lr_max", o.lr_max);
    read(t, "lr_min", o.lr_min);
    read(t, "beta1", o.beta1);
    read(t, "beta2", o.beta2);
    read(t, "weight_decay", o.weight_decay);
    read(t, "grad_clip", o.grad_clip);
    read(t, "eval_every", o.eval_every);
    read(t, "eval_batches", o.eval_batches);
    read(t, "patience", o.patience);
    read(t, "warm_start", o.warm_start);
    read(t, "seed", o.seed);
  }
  if (j.contains("analyze")) {
    const json& a = j.at("analyze");
    auto& o = c.analyze;
    read(a, "samples", o.samples);
    read(a, "draws", o.draws);
    read(a, "arnoldi_iterations", o.arnoldi_iterations);
    read(a, "lipschitz_samples", o.lipschitz_samples);
    read(a, "lipschitz_iterations", o.lipschitz_iterations);
    read(a, "rd_sequences", o.rd_sequences);
    read(a, "seed", o.seed);
  }
  read(j, "corpus", c.corpus);
  read(j, "output_dir", c.output_dir);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("config file '" + path + "': " + e.what());
  }
  return experiment_config_from_json(j);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& text) {
  return fnv1a64(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::uint64_t config_hash(const ModelConfig& config) {
  json j = to_json(config);
  j["format"] = kConfigFormat;
  return fnv1a64(j.dump());  // object keys are emitted sorted
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace lmc
