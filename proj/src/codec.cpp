// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lmc/config.hpp"

namespace lmc {

namespace {

constexpr std::uint8_t kFrameMagic[4] = {'R', 'C', 'F', '1'};
constexpr std::uint8_t kFrameVersion = 1;
// Hyper-prior table support: symbols in [-64, 64] whose mass is at least
// 2^-20; everything else goes through the escape slot.
constexpr int kHyperRange = 64;
constexpr double kHyperMinMass = 1.0 / 1048576.0;

std::vector<float> to_floats(std::span<const std::int32_t> s) {
  return std::vector<float>(s.begin(), s.end());
}

std::vector<std::int32_t> round_row(std::span<const float> x) {
  std::vector<std::int32_t> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!std::isfinite(x[j]))
      throw NonFiniteError("codec: non-finite latent value at column " +
                  std::to_string(j));
    out[j] = static_cast<std::int32_t>(round_half_even(x[j]));
  }
  return out;
}

std::vector<CdfTable> gaussian_row_tables(std::span<const float> mu,
                                          std::span<const float> sigma) {
  std::vector<CdfTable> tables;
  tables.reserve(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j)
    tables.push_back(gaussian_table(mu[j], sigma[j]));
  return tables;
}

double sum_bits(const Tensor& bits) { return static_cast<double>(bits.item()); }

}  // namespace

// -- CodecModel ----------------------------------------------------------------------

CodecModel::CodecModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  backbone_ = Backbone(config_, rng);
  analysis_ = AnalysisNetwork(config_, rng);
  synthesis_ = SynthesisNetwork(config_, rng);
  direct_ = DirectAccessModel(config_, rng);
  factorized_ = FactorizedDensity(config_.channels, 10.0, config_.seed + 1);
  fourier_ = FourierDensity(config_.channels, config_.seed + 2);
}

std::uint64_t CodecModel::config_hash() const { return lmc::config_hash(config_); }

std::uint64_t CodecModel::weights_hash() const {
  // visit_parameters hands out mutable references; nothing is written here.
  std::vector<std::uint8_t> bytes;
  const_cast<CodecModel*>(this)->visit_parameters(
      [&bytes](const std::string& name, Tensor& t) {
        bytes.insert(bytes.end(), name.begin(), name.end());
        const auto* raw = reinterpret_cast<const std::uint8_t*>(t.values().data());
        bytes.insert(bytes.end(), raw, raw + t.size() * sizeof(float));
      });
  return fnv1a64(bytes) ^ config_hash();
}

const HyperDensity& CodecModel::hyper_density() const {
  if (config_.entropy_model == EntropyModelKind::kFourier) return fourier_;
  return factorized_;
}

void CodecModel::visit_parameters(const ParameterVisitor& visit) {
  backbone_.visit_parameters("backbone.", visit);
  analysis_.visit_parameters("analysis.", visit);
  auto prefixed = [&visit](std::string prefix) {
    return [&visit, prefix](const std::string& name, Tensor& t) {
      visit(prefix + name, t);
    };
  };
  switch (config_.entropy_model) {
    case EntropyModelKind::kProposed:
      synthesis_.visit_parameters("synthesis.", visit);
      factorized_.visit_parameters(prefixed("hyper."));
      break;
    case EntropyModelKind::kFourier:
      synthesis_.visit_parameters("synthesis.", visit);
      fourier_.visit_parameters(prefixed("hyper."));
      break;
    case EntropyModelKind::kDirectAccess:
      direct_.visit_parameters("direct.", visit);
      factorized_.visit_parameters(prefixed("hyper."));
      break;
  }
}

std::vector<Tensor> CodecModel::parameters() {
  std::vector<Tensor> out;
  visit_parameters([&out](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

// -- Training forward ------------------------------------------------------------------

LatentPass run_latents(const CodecModel& model, std::span<const int> ids,
                       std::size_t seq_len) {
  const ModelConfig& c = model.config();
  LatentPass p;
  const Tensor x = model.backbone().embed(ids, seq_len);
  p.y_pre = model.backbone().run_blocks(x, 0, c.split, seq_len);
  p.y = quantize_ste(p.y_pre);
  p.w_pre = model.analysis().forward(p.y_pre, seq_len);
  p.w = quantize_ste(p.w_pre);
  if (c.entropy_model == EntropyModelKind::kDirectAccess) {
    const auto& da = model.direct_access();
    p.gaussian = da.forward(p.w, da.shift(p.y, seq_len), seq_len);
  } else {
    p.gaussian = model.synthesis().forward(p.w, seq_len);
  }
  return p;
}

RDLossTerms rd_loss(const CodecModel& model, const TokenBatch& batch,
                    double lambda) {
  if (!(lambda >= 0.0)) throw Error("rd_loss: lambda must be non-negative");
  if (batch.inputs.size() != batch.batch * batch.seq_len ||
      batch.targets.size() != batch.inputs.size())
    throw Error("rd_loss: batch layout mismatch");
  const ModelConfig& c = model.config();
  const LatentPass p = run_latents(model, batch.inputs, batch.seq_len);
  const Tensor tail =
      model.backbone().run_blocks(p.y, c.split, c.layers, batch.seq_len);
  const Tensor d = cross_entropy(model.backbone().logits(tail), batch.targets);
  const double tokens = static_cast<double>(batch.inputs.size());

  RDLossTerms terms;
  terms.lambda = lambda;
  terms.distortion = d.item();
  Tensor ry, rw;
  if (lambda > 0.0) {
    ry = rate_y(p.y, p.gaussian.mu, p.gaussian.sigma);
    rw = model.hyper_density().rate_bits(p.w);
    terms.loss = add(d, scale(add(ry, rw), static_cast<float>(lambda / tokens)));
  } else {
    NoGradGuard no_grad;
    ry = rate_y(p.y, p.gaussian.mu, p.gaussian.sigma);
    rw = model.hyper_density().rate_bits(p.w);
    terms.loss = d;
  }
  terms.rate_y_bpt = sum_bits(ry) / tokens;
  terms.rate_w_bpt = sum_bits(rw) / tokens;
  return terms;
}

// -- Tables -----------------------------------------------------------------------------

CdfTable gaussian_table(float mu, float sigma) {
  if (!std::isfinite(mu) || !std::isfinite(sigma) || sigma <= 0.0f)
    throw Error("gaussian_table: invalid parameters");
  constexpr float kLimit = 1.0e9f;
  const auto center = static_cast<std::int32_t>(
      round_half_even(std::clamp(mu, -kLimit, kLimit)));
  // Ten standard deviations plus one keeps the escaped mass far below the
  // single count reserved for the escape slot.
  const double wanted = std::ceil(10.0 * static_cast<double>(sigma) + 1.0);
  const int radius = static_cast<int>(
      std::clamp(wanted, 1.0, static_cast<double>(kMaxTableRadius)));
  std::vector<double> probs(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double p = gaussian_interval_prob(center + k, mu, sigma);
    probs[k + radius] = p;
    total += p;
  }
  return build_cdf_table(probs, center - radius, std::max(0.0, 1.0 - total));
}

std::vector<CdfTable> hyper_tables(const HyperDensity& density) {
  std::vector<CdfTable> tables;
  for (std::size_t j = 0; j < density.channels(); ++j) {
    std::vector<double> probs(2 * kHyperRange + 1);
    std::size_t first = probs.size(), last = 0, best = 0;
    for (int s = -kHyperRange; s <= kHyperRange; ++s) {
      const std::size_t i = static_cast<std::size_t>(s + kHyperRange);
      probs[i] = density.interval_probability(j, s);
      if (!std::isfinite(probs[i]) || probs[i] < 0.0)
        throw Error("hyper_tables: invalid probability in channel " +
                    std::to_string(j));
      if (probs[i] > probs[best]) best = i;
      if (probs[i] >= kHyperMinMass) {
        first = std::min(first, i);
        last = std::max(last, i);
      }
    }
    if (first > last) first = last = best;
    std::span<const double> kept(probs.data() + first, last - first + 1);
    double total = 0.0;
    for (double p : kept) total += p;
    tables.push_back(build_cdf_table(
        kept, static_cast<std::int32_t>(first) - kHyperRange,
        std::max(0.0, 1.0 - total)));
  }
  return tables;
}

// -- Bitstream ----------------------------------------------------------------------------

void FramePacket::serialize_to(std::vector<std::uint8_t>& out) const {
  out.insert(out.end(), std::begin(kFrameMagic), std::end(kFrameMagic));
  out.push_back(kFrameVersion);
  put_varint(out, index);
  put_chunk(out, w_chunk);
  put_chunk(out, y_chunk);
}

std::vector<std::uint8_t> FramePacket::serialize() const {
  std::vector<std::uint8_t> out;
  serialize_to(out);
  return out;
}

FramePacket FramePacket::parse(std::span<const std::uint8_t> bytes,
                               std::size_t& pos) {
  if (bytes.size() - pos < 5)
    throw Error("frame packet: truncated header");
  if (std::memcmp(bytes.data() + pos, kFrameMagic, 4) != 0)
    throw Error("frame packet: bad magic");
  if (bytes[pos + 4] != kFrameVersion)
    throw Error("frame packet: unsupported version " +
                std::to_string(bytes[pos + 4]));
  pos += 5;
  FramePacket p;
  p.index = get_varint(bytes, pos);
  try {
    auto w = get_chunk(bytes, pos);
    p.w_chunk.assign(w.begin(), w.end());
    auto y = get_chunk(bytes, pos);
    p.y_chunk.assign(y.begin(), y.end());
  } catch (const Error& e) {
    throw Error("frame " + std::to_string(p.index) + ": " + e.what());
  }
  return p;
}

double measure_bpt(std::span<const FramePacket> packets, std::size_t tokens) {
  if (tokens == 0) return 0.0;
  std::size_t bytes = 0;
  for (const auto& p : packets) bytes += p.w_chunk.size() + p.y_chunk.size();
  return 8.0 * static_cast<double>(bytes) / static_cast<double>(tokens);
}

double measure_bpt(const SequenceStream& stream) {
  if (stream.length == 0) return 0.0;
  return 8.0 *
         static_cast<double>(stream.w_chunk.size() + stream.y_chunk.size()) /
         static_cast<double>(stream.length);
}

// -- In-process inference -------------------------------------------------------------------

double SplitResult::estimated_bpt() const {
  return y.rows == 0 ? 0.0
                     : (estimated_w_bits + estimated_y_bits) /
                           static_cast<double>(y.rows);
}

SplitResult run_split_inference(const CodecModel& model,
                                std::span<const int> tokens) {
  NoGradGuard no_grad;
  SplitResult r;
  const ModelConfig& c = model.config();
  if (tokens.empty()) {
    r.y.cols = c.embed;
    r.w.cols = c.channels;
    return r;
  }
  const std::size_t T = tokens.size();
  const LatentPass p = run_latents(model, tokens, T);
  r.y = to_latent(p.y);
  r.w = to_latent(p.w);
  r.mu.assign(p.gaussian.mu.values().begin(), p.gaussian.mu.values().end());
  r.sigma.assign(p.gaussian.sigma.values().begin(),
                 p.gaussian.sigma.values().end());
  const Tensor tail = model.backbone().run_blocks(p.y, c.split, c.layers, T);
  const Tensor logits = model.backbone().logits(tail);
  r.logits.assign(logits.values().begin(), logits.values().end());
  r.estimated_w_bits = sum_bits(model.hyper_density().rate_bits(p.w));
  r.estimated_y_bits =
      sum_bits(rate_y(p.y, p.gaussian.mu, p.gaussian.sigma));
  return r;
}

std::vector<FramePacket> encode_sequence(const CodecModel& model,
                                         std::span<const int> tokens) {
  const SplitResult r = run_split_inference(model, tokens);
  const std::vector<CdfTable> w_tables = hyper_tables(model.hyper_density());
  const std::size_t C = r.w.cols, E = r.y.cols;
  std::vector<FramePacket> packets(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    packets[t].index = t;
    packets[t].w_chunk = encode_symbols(
        std::span(r.w.symbols).subspan(t * C, C), w_tables);
    const auto y_tables =
        gaussian_row_tables(std::span(r.mu).subspan(t * E, E),
                            std::span(r.sigma).subspan(t * E, E));
    packets[t].y_chunk = encode_symbols(
        std::span(r.y.symbols).subspan(t * E, E), y_tables);
  }
  return packets;
}

SequenceStream encode_whole_sequence(const CodecModel& model,
                                     std::span<const int> tokens) {
  const SplitResult r = run_split_inference(model, tokens);
  const std::vector<CdfTable> w_tables = hyper_tables(model.hyper_density());
  SequenceStream s;
  s.length = tokens.size();
  RangeEncoder w_enc, y_enc;
  for (std::size_t i = 0; i < r.w.symbols.size(); ++i)
    w_enc.encode(r.w.symbols[i], w_tables[i % r.w.cols]);
  for (std::size_t i = 0; i < r.y.symbols.size(); ++i)
    y_enc.encode(r.y.symbols[i], gaussian_table(r.mu[i], r.sigma[i]));
  s.w_chunk = w_enc.finish();
  s.y_chunk = y_enc.finish();
  return s;
}

DecodedSequence decode_sequence(const CodecModel& model,
                                std::span<const FramePacket> packets) {
  const ModelConfig& c = model.config();
  DecodedSequence out;
  out.y.cols = c.embed;
  out.w.cols = c.channels;
  StreamingDecoder decoder(model);
  for (std::size_t t = 0; t < packets.size(); ++t) {
    if (packets[t].index != t)
      throw Error("decode_sequence: frame " + std::to_string(t) +
                  " is missing (found frame " +
                  std::to_string(packets[t].index) + " in its place)");
    StreamingDecoder::Frame f;
    try {
      f = decoder.push(packets[t]);
    } catch (const Error& e) {
      throw Error("decode_sequence: frame " + std::to_string(t) + ": " +
                  e.what());
    }
    out.w.symbols.insert(out.w.symbols.end(), f.w.begin(), f.w.end());
    out.y.symbols.insert(out.y.symbols.end(), f.y.begin(), f.y.end());
    out.logits.insert(out.logits.end(), f.logits.begin(), f.logits.end());
  }
  out.y.rows = out.w.rows = packets.size();
  return out;
}

DecodedSequence decode_whole_sequence(const CodecModel& model,
                                      const SequenceStream& stream) {
  NoGradGuard no_grad;
  const ModelConfig& c = model.config();
  const std::size_t T = stream.length, C = c.channels, E = c.embed;
  if (T > c.seq_len)
    throw Error("decode_whole_sequence: length exceeds the model context");
  DecodedSequence out;
  out.w.cols = C;
  out.y.cols = E;
  out.w.rows = out.y.rows = T;
  if (T == 0) return out;

  const std::vector<CdfTable> w_tables = hyper_tables(model.hyper_density());
  {
    RangeDecoder dec(stream.w_chunk);
    out.w.symbols.resize(T * C);
    for (std::size_t i = 0; i < T * C; ++i)
      out.w.symbols[i] = dec.decode(w_tables[i % C]);
    dec.finish();
  }
  RangeDecoder dec(stream.y_chunk);
  out.y.symbols.resize(T * E);
  if (c.entropy_model == EntropyModelKind::kDirectAccess) {
    DirectAccessModel::Runner runner(model.direct_access());
    std::vector<float> y_prev(model.direct_access().start_token().begin(),
                              model.direct_access().start_token().end());
    std::vector<float> mu, sigma;
    for (std::size_t t = 0; t < T; ++t) {
      const auto w_row =
          to_floats(std::span(out.w.symbols).subspan(t * C, C));
      split_gaussian_row(runner.step(w_row, y_prev), mu, sigma);
      for (std::size_t j = 0; j < E; ++j)
        out.y.symbols[t * E + j] = dec.decode(gaussian_table(mu[j], sigma[j]));
      y_prev = to_floats(std::span(out.y.symbols).subspan(t * E, E));
    }
  } else {
    const GaussianParams g = model.synthesis().forward(out.w.to_tensor(), T);
    for (std::size_t i = 0; i < T * E; ++i)
      out.y.symbols[i] =
          dec.decode(gaussian_table(g.mu.values()[i], g.sigma.values()[i]));
  }
  dec.finish();
  const Tensor tail =
      model.backbone().run_blocks(out.y.to_tensor(), c.split, c.layers, T);
  const Tensor logits = model.backbone().logits(tail);
  out.logits.assign(logits.values().begin(), logits.values().end());
  return out;
}

// -- Streaming ---------------------------------------------------------------------------------

StreamingEncoder::StreamingEncoder(const CodecModel& model)
    : model_(&model),
      w_tables_(hyper_tables(model.hyper_density())),
      head_(model.backbone(), 0, model.config().split),
      analysis_(model.analysis().stack()) {
  if (model.config().entropy_model == EntropyModelKind::kDirectAccess) {
    direct_.emplace(model.direct_access());
    const auto start = model.direct_access().start_token();
    y_prev_.assign(start.begin(), start.end());
  } else {
    synthesis_.emplace(model.synthesis().stack());
  }
}

FramePacket StreamingEncoder::push(int token) {
  const auto y_pre = head_.step(model_->backbone().embed_step(token, frames_));
  const auto y = round_row(y_pre);
  const auto w = round_row(analysis_.step(y_pre));
  const auto w_f = to_floats(w);
  std::vector<float> mu, sigma;
  if (direct_) {
    split_gaussian_row(direct_->step(w_f, y_prev_), mu, sigma);
    y_prev_ = to_floats(y);
  } else {
    split_gaussian_row(synthesis_->step(w_f), mu, sigma);
  }
  FramePacket p;
  p.index = frames_++;
  p.w_chunk = encode_symbols(w, w_tables_);
  p.y_chunk = encode_symbols(y, gaussian_row_tables(mu, sigma));
  return p;
}

StreamingDecoder::StreamingDecoder(const CodecModel& model)
    : model_(&model),
      w_tables_(hyper_tables(model.hyper_density())),
      tail_(model.backbone(), model.config().split, model.config().layers) {
  if (model.config().entropy_model == EntropyModelKind::kDirectAccess) {
    direct_.emplace(model.direct_access());
    const auto start = model.direct_access().start_token();
    y_prev_.assign(start.begin(), start.end());
  } else {
    synthesis_.emplace(model.synthesis().stack());
  }
}

StreamingDecoder::Frame StreamingDecoder::push(const FramePacket& packet) {
  if (packet.index != frames_)
    throw Error("expected frame " + std::to_string(frames_) + ", got frame " +
                std::to_string(packet.index));
  if (frames_ >= model_->config().seq_len)
    throw Error("frame " + std::to_string(frames_) +
                " exceeds the model context");
  Frame f;
  f.w = decode_symbols(packet.w_chunk, w_tables_);
  const auto w_f = to_floats(f.w);
  std::vector<float> mu, sigma;
  if (direct_)
    split_gaussian_row(direct_->step(w_f, y_prev_), mu, sigma);
  else
    split_gaussian_row(synthesis_->step(w_f), mu, sigma);
  f.y = decode_symbols(packet.y_chunk, gaussian_row_tables(mu, sigma));
  const auto y_f = to_floats(f.y);
  if (direct_) y_prev_ = y_f;
  f.logits = model_->backbone().logits_row(tail_.step(y_f));
  ++frames_;
  return f;
}

}  // namespace lmc
