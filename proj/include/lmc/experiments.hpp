// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment drivers behind the command-line tool: training sweeps,
// rate-distortion tables, complexity reports and bitstream files.
//
// Checkpoints live at <out>/<model>_s<split>_l<lambda>.ckpt, where <out> is
// $LMC_OUTPUT_DIR if set and the config's output_dir otherwise.

#ifndef LMC_EXPERIMENTS_HPP_
#define LMC_EXPERIMENTS_HPP_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmc/codec.hpp"
#include "lmc/config.hpp"
#include "lmc/train.hpp"

namespace lmc {

inline constexpr const char* kOutputDirEnv = "LMC_OUTPUT_DIR";

std::string resolve_output_dir(const ExperimentConfig& config);
std::string lambda_tag(double lambda);  // shortest round-trip decimal
std::string checkpoint_path(const std::string& dir, EntropyModelKind model,
                            std::size_t split, double lambda);

// -- train ----------------------------------------------------------------------

struct TrainRun {
  EntropyModelKind model = EntropyModelKind::kProposed;
  std::size_t split = 0;
  double lambda = 0.0;
  std::string checkpoint;
  std::string log;  // per-step CSV
  TrainResult result;
  double epochs = 0.0;  // corpus passes
};

// Trains config.model.entropy_model at every (split, lambda) of the config and
// writes one checkpoint and one log per run. Progress lines go to `progress`.
std::vector<TrainRun> cmd_train(const ExperimentConfig& config,
                                std::ostream* progress = nullptr);

// -- rd-sweep -------------------------------------------------------------------

struct RdRow {
  std::string model;
  std::size_t split = 0;
  double lambda = 0.0;
  double hyper_bpt = 0.0;   // model-estimated
  double total_bpt = 0.0;   // model-estimated
  double coded_bpt = 0.0;   // range-coded, whole-sequence mode
  double distortion = 0.0;  // nats per token
  double perplexity = 0.0;
};

struct BdEntry {
  std::string ref;
  std::string test;
  std::size_t split = 0;
  std::optional<double> percent;
  std::string notice;  // why percent is missing
};

struct RdSweepReport {
  std::vector<RdRow> rows;
  std::vector<BdEntry> bd_rates;

  // model,split,lambda,hyper_bpt,total_bpt,coded_bpt,distortion,perplexity
  void write_rd_csv(std::ostream& out) const;
  // ref,test,split,bd_rate_percent,notice
  void write_bd_csv(std::ostream& out) const;
};

// Evaluates every (model, split, lambda) checkpoint on the first
// analyze.rd_sequences validation windows. BD-rates use `models.front()` as
// the reference, total_bpt as rate and -distortion as quality. Throws,
// listing all of them, if any checkpoint is missing.
RdSweepReport cmd_rd_sweep(const ExperimentConfig& config,
                           const std::vector<EntropyModelKind>& models);

// -- analyze --------------------------------------------------------------------

struct ComplexityRow {
  std::string model;
  std::size_t split = 0;
  double lambda = 0.0;
  double bpt = 0.0;  // model-estimated total
  double distortion = 0.0;
  double rademacher = 0.0;
  double cov_logdet_scaled = 0.0;
  std::size_t krylov_dim = 0;
  double lipschitz = 0.0;
  double lipschitz_log = 0.0;
};

struct Correlation {
  std::string name;  // e.g. "bpt~rademacher"
  std::optional<double> value;
  std::string notice;
};

struct ComplexityReport {
  std::vector<ComplexityRow> rows;
  std::vector<Correlation> correlations;
  std::string notice;  // set when correlations were not computed

  nlohmann::json to_json() const;
  // model,split,lambda,bpt,distortion,rademacher,cov_logdet_scaled,
  // krylov_dim,lipschitz,lipschitz_log
  void write_csv(std::ostream& out) const;
};

// Complexity estimates for each checkpoint, and Pearson correlations of bpt
// against the Rademacher and covariance estimates across the rows. Fewer than
// two distinct splits, or a zero-variance column, leaves the correlation
// empty with a notice instead of failing.
ComplexityReport analyze_checkpoints(const ExperimentConfig& config,
                                     const std::vector<std::string>& paths);
// Uses the checkpoints of config.model.entropy_model at every split and
// lambda of the config.
ComplexityReport cmd_analyze(const ExperimentConfig& config);

// r(y) = bits of y under the conditional model driven by h(y), with rounding
// in h treated as identity. Returns the rate and dr/dy ([T x E], row-major).
std::pair<double, std::vector<double>> rate_gradient(
    const CodecModel& model, const QuantizedLatent& y);

// -- bitstream files ------------------------------------------------------------

// "LMCS" | u8 version (1) | u64 LE config hash | u64 LE weights hash |
// varint frames | packets
struct PacketFile {
  std::uint64_t config_hash = 0;
  std::uint64_t weights_hash = 0;
  std::vector<FramePacket> packets;

  std::vector<std::uint8_t> serialize() const;
  static PacketFile parse(std::span<const std::uint8_t> bytes);
  // Throws unless both hashes match `model`.
  void check_model(const CodecModel& model) const;
};

}  // namespace lmc

#endif  // LMC_EXPERIMENTS_HPP_
