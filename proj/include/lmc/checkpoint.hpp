// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint file layout (little-endian):
//
//   "LMCK" | u8 version (1) | varint n | n bytes of JSON header
//   varint parameter count
//   per parameter: varint name length | name | varint rows | varint cols |
//                  rows*cols float32
//
// The JSON header holds {"config", "config_hash", "step", "lambda",
// "metrics"}. Loading verifies the hash against the embedded config and the
// parameter names and shapes against a freshly built model.

#ifndef LMC_CHECKPOINT_HPP_
#define LMC_CHECKPOINT_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmc/codec.hpp"

namespace lmc {

struct CheckpointMeta {
  std::uint64_t step = 0;
  double lambda = 0.0;
  nlohmann::json metrics = nlohmann::json::object();
};

struct LoadedCheckpoint {
  std::unique_ptr<CodecModel> model;
  CheckpointMeta meta;
};

std::vector<std::uint8_t> serialize_checkpoint(CodecModel& model,
                                               const CheckpointMeta& meta);
LoadedCheckpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, CodecModel& model,
                     const CheckpointMeta& meta);
LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies parameter values between two models of identical configuration.
void copy_parameters(CodecModel& from, CodecModel& to);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace lmc

#endif  // LMC_CHECKPOINT_HPP_
