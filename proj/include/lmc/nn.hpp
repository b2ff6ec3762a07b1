// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Causal transformer building blocks and the networks assembled from them:
// the split backbone, the hyper-prior analysis and synthesis stacks, and the
// direct-access baseline.
//
// Each network has two evaluation paths. `forward` records an autograd graph
// over a batch of stacked sequences; `step` advances one time step with a
// key/value cache. Both go through the same row kernels, so a step run
// reproduces the matching row of a batched run bit for bit.

#ifndef LMC_NN_HPP_
#define LMC_NN_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lmc/entropy.hpp"
#include "lmc/tensor.hpp"

namespace lmc {

enum class EntropyModelKind { kProposed, kFourier, kDirectAccess };

std::string to_string(EntropyModelKind kind);
EntropyModelKind entropy_model_from_string(const std::string& name);

struct ModelConfig {
  std::size_t vocab = 128;
  std::size_t seq_len = 128;
  std::size_t embed = 64;
  std::size_t layers = 6;
  std::size_t heads = 4;
  std::size_t channels = 4;  // C
  std::size_t split = 3;     // S: blocks 1..S run on the head side
  // Output widths of the analysis blocks; the last equals `channels`.
  std::vector<std::size_t> analysis_widths{32, 16, 8, 4};
  // Output widths of the synthesis blocks; the last equals 2 * embed.
  std::vector<std::size_t> synthesis_widths{8, 16, 32, 128};
  EntropyModelKind entropy_model = EntropyModelKind::kProposed;
  std::uint64_t seed = 1;

  // Throws lmc::Error describing the first violated constraint.
  void validate() const;
};

// Largest head count <= `requested` that divides `width`.
std::size_t heads_for_width(std::size_t requested, std::size_t width);

struct KvCache {
  std::vector<float> keys;
  std::vector<float> values;
  std::size_t length = 0;
};

// Pre-norm block: x1 = x + Attn(LN1 x) Wo, x1' = x1 P (only when the width
// changes), out = x1' + W2 GELU(W1 LN2 x1'). Dense layers carry no biases.
class TransformerBlock {
 public:
  TransformerBlock() = default;
  // `out_scale` multiplies the init of Wo and W2; 0 makes the block an
  // identity map at initialization (when d_in == d_out).
  TransformerBlock(std::size_t d_in, std::size_t d_out, std::size_t heads,
                   std::mt19937_64& rng, float out_scale = 1.0f);

  std::size_t d_in() const { return d_in_; }
  std::size_t d_out() const { return d_out_; }
  std::size_t heads() const { return heads_; }

  // x: [batch*seq_len x d_in] -> [batch*seq_len x d_out]
  Tensor forward(const Tensor& x, std::size_t seq_len) const;
  // One row; appends this step's key/value to `cache`.
  std::vector<float> step(std::span<const float> x, KvCache& cache) const;

  void visit_parameters(const std::string& prefix, const ParameterVisitor& v);

 private:
  Tensor mlp(const Tensor& x1) const;
  void mlp_row(const float* x1, float* out) const;

  std::size_t d_in_ = 0, d_out_ = 0, heads_ = 1;
  Tensor ln1_gain_, ln1_shift_, wq_, wk_, wv_, wo_;
  Tensor proj_;  // undefined when d_in == d_out
  Tensor ln2_gain_, ln2_shift_, w1_, w2_;
};

// A chain of blocks with matching widths, plus its incremental runner.
class BlockStack {
 public:
  BlockStack() = default;
  BlockStack(std::size_t d_in, const std::vector<std::size_t>& widths,
             std::size_t heads, std::mt19937_64& rng);

  std::size_t d_in() const;
  std::size_t d_out() const;
  std::size_t size() const { return blocks_.size(); }
  std::vector<TransformerBlock>& blocks() { return blocks_; }
  const std::vector<TransformerBlock>& blocks() const { return blocks_; }

  Tensor forward(const Tensor& x, std::size_t seq_len) const;
  void visit_parameters(const std::string& prefix, const ParameterVisitor& v);

  class Runner {
   public:
    explicit Runner(const BlockStack& stack)
        : stack_(&stack), caches_(stack.size()) {}
    std::vector<float> step(std::span<const float> x);
    std::size_t length() const {
      return caches_.empty() ? steps_ : caches_[0].length;
    }

   private:
    const BlockStack* stack_;
    std::vector<KvCache> caches_;
    std::size_t steps_ = 0;
  };

 private:
  std::vector<TransformerBlock> blocks_;
};

// Token/position embedding, L blocks, final norm and vocabulary head.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const ModelConfig& config, std::mt19937_64& rng);

  // ids: batch*seq_len token ids -> [rows x embed]
  Tensor embed(std::span<const int> ids, std::size_t seq_len) const;
  // Blocks [begin, end) in zero-based indexing.
  Tensor run_blocks(const Tensor& x, std::size_t begin, std::size_t end,
                    std::size_t seq_len) const;
  Tensor logits(const Tensor& x) const;

  // Per-step versions. `position` is the zero-based time index.
  std::vector<float> embed_step(int id, std::size_t position) const;
  std::vector<float> logits_row(std::span<const float> x) const;

  std::size_t layers() const { return blocks_.size(); }
  const TransformerBlock& block(std::size_t i) const { return blocks_[i]; }
  void visit_parameters(const std::string& prefix, const ParameterVisitor& v);

 private:
  std::size_t seq_len_ = 0;
  Tensor token_embedding_, position_embedding_;
  std::vector<TransformerBlock> blocks_;
  Tensor ln_gain_, ln_shift_, head_;
};

// Incremental runner over backbone blocks [begin, end).
class BackboneRunner {
 public:
  BackboneRunner(const Backbone& model, std::size_t begin, std::size_t end);
  std::vector<float> step(std::span<const float> x);

 private:
  const Backbone* model_;
  std::size_t begin_;
  std::vector<KvCache> caches_;
};

struct GaussianParams {
  Tensor mu;     // [rows x E]
  Tensor sigma;  // [rows x E], >= kSigmaMin
};

// Splits a [rows x 2E] raw output into mean and clamped exp-scale.
GaussianParams split_gaussian(const Tensor& raw);
void split_gaussian_row(std::span<const float> raw, std::vector<float>& mu,
                        std::vector<float>& sigma);

// Hyper-prior analysis h: E -> ... -> C.
class AnalysisNetwork {
 public:
  AnalysisNetwork() = default;
  AnalysisNetwork(const ModelConfig& config, std::mt19937_64& rng);
  Tensor forward(const Tensor& y, std::size_t seq_len) const;
  const BlockStack& stack() const { return stack_; }
  void visit_parameters(const std::string& prefix, const ParameterVisitor& v);

 private:
  BlockStack stack_;
};

// Hyper-prior synthesis g_y: C -> ... -> 2E.
class SynthesisNetwork {
 public:
  SynthesisNetwork() = default;
  SynthesisNetwork(const ModelConfig& config, std::mt19937_64& rng);
  GaussianParams forward(const Tensor& w, std::size_t seq_len) const;
  const BlockStack& stack() const { return stack_; }
  void visit_parameters(const std::string& prefix, const ParameterVisitor& v);

 private:
  BlockStack stack_;
};

// Baseline that additionally sees the strictly-past target latent. Four
// blocks at width C over W, one fusion block where W forms the queries and
// both W and the shifted Y form keys and values, then three blocks at width
// E, the last widening to 2E.
class DirectAccessModel {
 public:
  DirectAccessModel() = default;
  DirectAccessModel(const ModelConfig& config, std::mt19937_64& rng);

  // Y shifted down one row per sequence, row 0 = learned start token.
  Tensor shift(const Tensor& y, std::size_t seq_len) const;
  GaussianParams forward(const Tensor& w, const Tensor& y_shifted,
                         std::size_t seq_len) const;
  void visit_parameters(const std::string& prefix, const ParameterVisitor& v);

  std::span<const float> start_token() const { return start_.values(); }

  class Runner {
   public:
    explicit Runner(const DirectAccessModel& model);
    // w_row: C symbols of step t, y_prev: E values of step t-1 (the start
    // token when t = 0).
    std::vector<float> step(std::span<const float> w_row,
                            std::span<const float> y_prev);

   private:
    const DirectAccessModel* model_;
    BlockStack::Runner w_runner_;
    KvCache fusion_cache_;
    BlockStack::Runner out_runner_;
  };

 private:
  Tensor fusion(const Tensor& w, const Tensor& y_shifted,
                std::size_t seq_len) const;
  void fusion_row(const float* w, const float* y, KvCache& cache,
                  float* out) const;

  std::size_t channels_ = 0, embed_ = 0, heads_ = 1;
  BlockStack w_stack_;
  Tensor start_;
  Tensor ln_w_gain_, ln_w_shift_, ln_y_gain_, ln_y_shift_;
  Tensor wq_, wk_, wv_, wo_;
  Tensor ln2_gain_, ln2_shift_, w1_, w2_;
  BlockStack out_stack_;
};

}  // namespace lmc

#endif  // LMC_NN_HPP_
