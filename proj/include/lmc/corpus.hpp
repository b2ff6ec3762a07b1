// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Character-level corpus: every byte is a token id, so the vocabulary is the
// 7-bit ASCII range.

#ifndef LMC_CORPUS_HPP_
#define LMC_CORPUS_HPP_

#include <random>
#include <span>
#include <string>
#include <vector>

#include "lmc/codec.hpp"

namespace lmc {

struct CorpusSplit {
  std::vector<int> train;
  std::vector<int> validation;
};

// Reads a text file as byte tokens; throws if a byte is >= vocab.
std::vector<int> load_tokens(const std::string& path, std::size_t vocab);
std::vector<int> encode_text(const std::string& text, std::size_t vocab);

// The last `validation_fraction` of the tokens become the validation split.
CorpusSplit split_corpus(std::vector<int> tokens,
                         double validation_fraction = 0.1);

// Random windows of seq_len + 1 tokens.
TokenBatch sample_batch(std::span<const int> tokens, std::size_t batch,
                        std::size_t seq_len, std::mt19937_64& rng);

// Non-overlapping windows: sequence i starts at (first + i) * seq_len.
TokenBatch window_batch(std::span<const int> tokens, std::size_t first,
                        std::size_t count, std::size_t seq_len);

// Number of whole (seq_len + 1)-token windows available at stride seq_len.
std::size_t window_count(std::span<const int> tokens, std::size_t seq_len);

// One window's input tokens.
std::vector<int> window(std::span<const int> tokens, std::size_t index,
                        std::size_t seq_len);

}  // namespace lmc

#endif  // LMC_CORPUS_HPP_
