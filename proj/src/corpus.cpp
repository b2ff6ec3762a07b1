// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/corpus.hpp"

#include <fstream>
#include <iterator>

namespace lmc {

std::vector<int> encode_text(const std::string& text, std::size_t vocab) {
  std::vector<int> out(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto b = static_cast<unsigned char>(text[i]);
    if (b >= vocab)
      throw Error("corpus: byte " + std::to_string(b) + " at offset " +
                  std::to_string(i) + " is outside the vocabulary of " +
                  std::to_string(vocab));
    out[i] = b;
  }
  return out;
}

std::vector<int> load_tokens(const std::string& path, std::size_t vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus '" + path + "'");
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  return encode_text(text, vocab);
}

CorpusSplit split_corpus(std::vector<int> tokens, double validation_fraction) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw Error("split_corpus: fraction must be in (0, 1)");
  const auto cut = static_cast<std::size_t>(
      static_cast<double>(tokens.size()) * (1.0 - validation_fraction));
  CorpusSplit s;
  s.validation.assign(tokens.begin() + static_cast<long>(cut), tokens.end());
  tokens.resize(cut);
  s.train = std::move(tokens);
  return s;
}

TokenBatch sample_batch(std::span<const int> tokens, std::size_t batch,
                        std::size_t seq_len, std::mt19937_64& rng) {
  if (tokens.size() < seq_len + 2)
    throw Error("sample_batch: corpus shorter than one window");
  std::uniform_int_distribution<std::size_t> start(0,
                                                   tokens.size() - seq_len - 1);
  TokenBatch b;
  b.batch = batch;
  b.seq_len = seq_len;
  b.inputs.reserve(batch * seq_len);
  b.targets.reserve(batch * seq_len);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t s = start(rng);
    b.inputs.insert(b.inputs.end(), tokens.begin() + s,
                    tokens.begin() + s + seq_len);
    b.targets.insert(b.targets.end(), tokens.begin() + s + 1,
                     tokens.begin() + s + seq_len + 1);
  }
  return b;
}

std::size_t window_count(std::span<const int> tokens, std::size_t seq_len) {
  return tokens.size() < seq_len + 1 ? 0 : (tokens.size() - 1) / seq_len;
}

TokenBatch window_batch(std::span<const int> tokens, std::size_t first,
                        std::size_t count, std::size_t seq_len) {
  if (first + count > window_count(tokens, seq_len))
    throw Error("window_batch: not enough validation windows");
  TokenBatch b;
  b.batch = count;
  b.seq_len = seq_len;
  for (std::size_t i = first; i < first + count; ++i) {
    const std::size_t s = i * seq_len;
    b.inputs.insert(b.inputs.end(), tokens.begin() + s,
                    tokens.begin() + s + seq_len);
    b.targets.insert(b.targets.end(), tokens.begin() + s + 1,
                     tokens.begin() + s + seq_len + 1);
  }
  return b;
}

std::vector<int> window(std::span<const int> tokens, std::size_t index,
                        std::size_t seq_len) {
  if (index >= window_count(tokens, seq_len))
    throw Error("window: index out of range");
  const auto s = tokens.begin() + static_cast<long>(index * seq_len);
  return std::vector<int>(s, s + static_cast<long>(seq_len));
}

}  // namespace lmc
