// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// The split codec: backbone head -> quantize -> hyper-prior -> range coding
// -> entropy decoding -> backbone tail. Also the rate-distortion loss used to
// train all of it.

#ifndef LMC_CODEC_HPP_
#define LMC_CODEC_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "lmc/entropy.hpp"
#include "lmc/nn.hpp"
#include "lmc/quantize.hpp"
#include "lmc/range_coder.hpp"

namespace lmc {

// Every parameter of one codec instance. Which hyper density and conditional
// model are used follows config().entropy_model.
class CodecModel {
 public:
  explicit CodecModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::uint64_t config_hash() const;
  // Fingerprint of the configuration and every parameter value; two sides of
  // a session must agree on it bit for bit.
  std::uint64_t weights_hash() const;

  const Backbone& backbone() const { return backbone_; }
  const AnalysisNetwork& analysis() const { return analysis_; }
  const SynthesisNetwork& synthesis() const { return synthesis_; }
  const DirectAccessModel& direct_access() const { return direct_; }
  const HyperDensity& hyper_density() const;

  // Visits parameters in a fixed order. Names are prefixed with the owning
  // component ("backbone.", "analysis.", ...).
  void visit_parameters(const ParameterVisitor& visit);
  std::vector<Tensor> parameters();

 private:
  ModelConfig config_;
  Backbone backbone_;
  AnalysisNetwork analysis_;
  SynthesisNetwork synthesis_;
  FactorizedDensity factorized_;
  FourierDensity fourier_;
  DirectAccessModel direct_;
};

struct TokenBatch {
  std::vector<int> inputs;   // batch * seq_len
  std::vector<int> targets;  // next tokens, same layout
  std::size_t batch = 0;
  std::size_t seq_len = 0;
};

// Forward pass through the head and the entropy models.
struct LatentPass {
  Tensor y_pre;  // [rows x E]
  Tensor y;      // rounded, straight-through
  Tensor w_pre;  // [rows x C]
  Tensor w;      // rounded, straight-through
  GaussianParams gaussian;
};

LatentPass run_latents(const CodecModel& model, std::span<const int> ids,
                       std::size_t seq_len);

struct RDLossTerms {
  Tensor loss;              // differentiable 1x1
  double distortion = 0.0;  // nats per token
  double rate_y_bpt = 0.0;
  double rate_w_bpt = 0.0;
  double lambda = 0.0;
  double total_bpt() const { return rate_y_bpt + rate_w_bpt; }
};

// loss = cross-entropy + lambda * (rate_y + rate_w) / tokens. With
// lambda == 0 the rates are evaluated but kept out of the graph.
RDLossTerms rd_loss(const CodecModel& model, const TokenBatch& batch,
                    double lambda);

// -- Coding tables -------------------------------------------------------------------

inline constexpr int kMaxTableRadius = 64;

// Table for one Gaussian element, centered on round(mu) with a radius that
// grows with sigma (capped at kMaxTableRadius) and an escape slot.
CdfTable gaussian_table(float mu, float sigma);
// One static table per hyper-prior channel.
std::vector<CdfTable> hyper_tables(const HyperDensity& density);

// -- Bitstream ------------------------------------------------------------------------

// One time step: the C hyper-prior symbols and the E target symbols, each in
// its own independently terminated chunk.
struct FramePacket {
  std::uint64_t index = 0;
  std::vector<std::uint8_t> w_chunk;
  std::vector<std::uint8_t> y_chunk;

  // "RCF1" | u8 version (1) | varint index | chunk W | chunk Y
  std::vector<std::uint8_t> serialize() const;
  void serialize_to(std::vector<std::uint8_t>& out) const;
  // Parses one packet at `pos`, advancing it.
  static FramePacket parse(std::span<const std::uint8_t> bytes,
                           std::size_t& pos);
  bool operator==(const FramePacket&) const = default;
};

// A whole sequence coded as one W chunk and one Y chunk (rate benchmarking).
struct SequenceStream {
  std::uint64_t length = 0;
  std::vector<std::uint8_t> w_chunk;
  std::vector<std::uint8_t> y_chunk;
};

// Chunk payload bits over both chunk kinds divided by `tokens`.
double measure_bpt(std::span<const FramePacket> packets, std::size_t tokens);
double measure_bpt(const SequenceStream& stream);

// In-process reference: what the tail should see and predict.
struct SplitResult {
  QuantizedLatent y;
  QuantizedLatent w;
  std::vector<float> mu, sigma;  // [T x E]
  std::vector<float> logits;     // [T x vocab]
  double estimated_w_bits = 0.0;
  double estimated_y_bits = 0.0;
  double estimated_bpt() const;
};

SplitResult run_split_inference(const CodecModel& model,
                                std::span<const int> tokens);

// Per-frame coding: one packet per token.
std::vector<FramePacket> encode_sequence(const CodecModel& model,
                                         std::span<const int> tokens);
SequenceStream encode_whole_sequence(const CodecModel& model,
                                     std::span<const int> tokens);

struct DecodedSequence {
  QuantizedLatent y;
  QuantizedLatent w;
  std::vector<float> logits;  // [T x vocab]
};

// Packets must be frames 0..n-1 in order; a gap raises an error naming the
// first missing frame.
DecodedSequence decode_sequence(const CodecModel& model,
                                std::span<const FramePacket> packets);
DecodedSequence decode_whole_sequence(const CodecModel& model,
                                      const SequenceStream& stream);

// Head side, one token at a time.
class StreamingEncoder {
 public:
  explicit StreamingEncoder(const CodecModel& model);
  FramePacket push(int token);
  std::size_t frames() const { return frames_; }

 private:
  const CodecModel* model_;
  std::vector<CdfTable> w_tables_;
  BackboneRunner head_;
  BlockStack::Runner analysis_;
  std::optional<BlockStack::Runner> synthesis_;
  std::optional<DirectAccessModel::Runner> direct_;
  std::vector<float> y_prev_;
  std::size_t frames_ = 0;
};

// Tail side, one packet at a time. Frame t yields the prediction for step t
// using packets 0..t only.
class StreamingDecoder {
 public:
  struct Frame {
    std::vector<std::int32_t> w;
    std::vector<std::int32_t> y;
    std::vector<float> logits;
  };

  explicit StreamingDecoder(const CodecModel& model);
  Frame push(const FramePacket& packet);
  std::size_t frames() const { return frames_; }

 private:
  const CodecModel* model_;
  std::vector<CdfTable> w_tables_;
  BackboneRunner tail_;
  std::optional<BlockStack::Runner> synthesis_;
  std::optional<DirectAccessModel::Runner> direct_;
  std::vector<float> y_prev_;
  std::size_t frames_ = 0;
};

}  // namespace lmc

#endif  // LMC_CODEC_HPP_
