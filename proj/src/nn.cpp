// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/nn.hpp"

#include <algorithm>
#include <cmath>

#include "lmc/kernels.hpp"

namespace lmc {

namespace {

Tensor normal_param(std::size_t rows, std::size_t cols, float stddev,
                    std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(rows * cols);
  for (auto& x : v) x = stddev * dist(rng);
  return Tensor::from(std::move(v), rows, cols, true);
}

Tensor ones_param(std::size_t cols) { return Tensor::full(1, cols, 1.0f, true); }
Tensor zeros_param(std::size_t cols) { return Tensor::zeros(1, cols, true); }

// out[1 x m] = x[1 x k] * w[k x m]
void row_matmul(const float* x, const Tensor& w, float* out) {
  kernels::matmul(std::span<const float>(x, w.rows()), w.values(),
                  std::span<float>(out, w.cols()), 1, w.rows(), w.cols());
}

void row_layer_norm(const float* x, const Tensor& gain, const Tensor& shift,
                    float* out) {
  kernels::layer_norm_row(x, gain.values().data(), shift.values().data(),
                          gain.cols(), out, nullptr, nullptr);
}

// Appends k, v rows to the cache and attends the query against it.
void cached_attention(const float* q, const float* k, const float* v,
                      std::size_t width_qk, std::size_t width_v,
                      std::size_t heads, KvCache& cache, float* out) {
  cache.keys.insert(cache.keys.end(), k, k + width_qk);
  cache.values.insert(cache.values.end(), v, v + width_v);
  ++cache.length;
  const std::size_t dqk = width_qk / heads, dv = width_v / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dqk));
  std::vector<float> probs(cache.length);
  for (std::size_t h = 0; h < heads; ++h)
    kernels::attend_row(q + h * dqk, cache.keys.data() + h * dqk,
                        cache.values.data() + h * dv, cache.length, width_qk,
                        width_v, dqk, dv, scale, probs.data(), out + h * dv);
}

void check_row(std::span<const float> x, std::size_t width, const char* who) {
  if (x.size() != width)
    throw Error(std::string(who) + ": expected a row of width " +
                std::to_string(width) + ", got " + std::to_string(x.size()));
}

}  // namespace

std::string to_string(EntropyModelKind kind) {
  switch (kind) {
    case EntropyModelKind::kProposed:
      return "proposed";
    case EntropyModelKind::kFourier:
      return "fourier";
    case EntropyModelKind::kDirectAccess:
      return "direct_access";
  }
  return "proposed";
}

EntropyModelKind entropy_model_from_string(const std::string& name) {
  if (name == "proposed") return EntropyModelKind::kProposed;
  if (name == "fourier") return EntropyModelKind::kFourier;
  if (name == "direct_access") return EntropyModelKind::kDirectAccess;
  throw Error("unknown entropy model '" + name +
              "' (expected proposed, fourier or direct_access)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error("model config: " + m); };
  if (vocab == 0 || seq_len == 0 || embed == 0 || heads == 0 || channels == 0)
    fail("dimensions must be positive");
  if (layers < 2) fail("need at least two layers");
  if (split < 1 || split >= layers)
    fail("split must satisfy 1 <= split < layers");
  if (analysis_widths.empty() || analysis_widths.back() != channels)
    fail("last analysis width must equal channels");
  if (synthesis_widths.empty() || synthesis_widths.back() != 2 * embed)
    fail("last synthesis width must equal 2 * embed");
  for (auto w : analysis_widths)
    if (w == 0) fail("analysis widths must be positive");
  for (auto w : synthesis_widths)
    if (w == 0) fail("synthesis widths must be positive");
}

std::size_t heads_for_width(std::size_t requested, std::size_t width) {
  for (std::size_t h = std::min(requested, width); h > 1; --h)
    if (width % h == 0) return h;
  return 1;
}

// -- TransformerBlock ----------------------------------------------------------

TransformerBlock::TransformerBlock(std::size_t d_in, std::size_t d_out,
                                   std::size_t heads, std::mt19937_64& rng,
                                   float out_scale)
    : d_in_(d_in), d_out_(d_out), heads_(heads_for_width(heads, d_in)) {
  if (d_in == 0 || d_out == 0) throw Error("TransformerBlock: zero width");
  const float s_in = 1.0f / std::sqrt(static_cast<float>(d_in));
  const float s_out = 1.0f / std::sqrt(static_cast<float>(d_out));
  const std::size_t hidden = 4 * d_out;
  ln1_gain_ = ones_param(d_in);
  ln1_shift_ = zeros_param(d_in);
  wq_ = normal_param(d_in, d_in, s_in, rng);
  wk_ = normal_param(d_in, d_in, s_in, rng);
  wv_ = normal_param(d_in, d_in, s_in, rng);
  wo_ = normal_param(d_in, d_in, out_scale * s_in, rng);
  if (d_in != d_out) proj_ = normal_param(d_in, d_out, s_in, rng);
  ln2_gain_ = ones_param(d_out);
  ln2_shift_ = zeros_param(d_out);
  w1_ = normal_param(d_out, hidden, s_out, rng);
  w2_ = normal_param(hidden, d_out,
                     out_scale / std::sqrt(static_cast<float>(hidden)), rng);
}

Tensor TransformerBlock::mlp(const Tensor& x1) const {
  const Tensor h = layer_norm(x1, ln2_gain_, ln2_shift_);
  return add(x1, matmul(gelu(matmul(h, w1_)), w2_));
}

void TransformerBlock::mlp_row(const float* x1, float* out) const {
  std::vector<float> h(d_out_), hidden(w1_.cols()), y(d_out_);
  row_layer_norm(x1, ln2_gain_, ln2_shift_, h.data());
  row_matmul(h.data(), w1_, hidden.data());
  for (auto& v : hidden) v = kernels::gelu(v);
  row_matmul(hidden.data(), w2_, y.data());
  for (std::size_t j = 0; j < d_out_; ++j) out[j] = x1[j] + y[j];
}

Tensor TransformerBlock::forward(const Tensor& x, std::size_t seq_len) const {
  if (x.cols() != d_in_)
    throw Error("TransformerBlock: input width " + std::to_string(x.cols()) +
                " != " + std::to_string(d_in_));
  const Tensor h = layer_norm(x, ln1_gain_, ln1_shift_);
  const Tensor a = causal_attention(matmul(h, wq_), matmul(h, wk_),
                                    matmul(h, wv_), seq_len, heads_);
  Tensor x1 = add(x, matmul(a, wo_));
  if (proj_.defined()) x1 = matmul(x1, proj_);
  return mlp(x1);
}

std::vector<float> TransformerBlock::step(std::span<const float> x,
                                          KvCache& cache) const {
  check_row(x, d_in_, "TransformerBlock::step");
  const std::size_t d = d_in_;
  std::vector<float> h(d), q(d), k(d), v(d), a(d), o(d), x1(d);
  row_layer_norm(x.data(), ln1_gain_, ln1_shift_, h.data());
  row_matmul(h.data(), wq_, q.data());
  row_matmul(h.data(), wk_, k.data());
  row_matmul(h.data(), wv_, v.data());
  cached_attention(q.data(), k.data(), v.data(), d, d, heads_, cache,
                   a.data());
  row_matmul(a.data(), wo_, o.data());
  for (std::size_t j = 0; j < d; ++j) x1[j] = x[j] + o[j];
  if (proj_.defined()) {
    std::vector<float> p(d_out_);
    row_matmul(x1.data(), proj_, p.data());
    x1 = std::move(p);
  }
  std::vector<float> out(d_out_);
  mlp_row(x1.data(), out.data());
  return out;
}

void TransformerBlock::visit_parameters(const std::string& prefix,
                                        const ParameterVisitor& v) {
  v(prefix + "ln1.gain", ln1_gain_);
  v(prefix + "ln1.shift", ln1_shift_);
  v(prefix + "attn.q", wq_);
  v(prefix + "attn.k", wk_);
  v(prefix + "attn.v", wv_);
  v(prefix + "attn.out", wo_);
  if (proj_.defined()) v(prefix + "proj", proj_);
  v(prefix + "ln2.gain", ln2_gain_);
  v(prefix + "ln2.shift", ln2_shift_);
  v(prefix + "mlp.in", w1_);
  v(prefix + "mlp.out", w2_);
}

// -- BlockStack ----------------------------------------------------------------

BlockStack::BlockStack(std::size_t d_in, const std::vector<std::size_t>& widths,
                       std::size_t heads, std::mt19937_64& rng) {
  std::size_t d = d_in;
  for (std::size_t w : widths) {
    blocks_.emplace_back(d, w, heads, rng);
    d = w;
  }
}

std::size_t BlockStack::d_in() const {
  return blocks_.empty() ? 0 : blocks_.front().d_in();
}

std::size_t BlockStack::d_out() const {
  return blocks_.empty() ? 0 : blocks_.back().d_out();
}

Tensor BlockStack::forward(const Tensor& x, std::size_t seq_len) const {
  Tensor h = x;
  for (const auto& b : blocks_) h = b.forward(h, seq_len);
  return h;
}

void BlockStack::visit_parameters(const std::string& prefix,
                                  const ParameterVisitor& v) {
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].visit_parameters(prefix + "block" + std::to_string(i) + ".", v);
}

std::vector<float> BlockStack::Runner::step(std::span<const float> x) {
  std::vector<float> h(x.begin(), x.end());
  for (std::size_t i = 0; i < stack_->blocks_.size(); ++i)
    h = stack_->blocks_[i].step(h, caches_[i]);
  ++steps_;
  return h;
}

// -- Backbone ------------------------------------------------------------------

Backbone::Backbone(const ModelConfig& config, std::mt19937_64& rng)
    : seq_len_(config.seq_len) {
  const std::size_t e = config.embed;
  // Unit-scale token embeddings keep the residual stream well above the
  // quantization step.
  token_embedding_ = normal_param(config.vocab, e, 1.0f, rng);
  position_embedding_ = normal_param(config.seq_len, e, 0.1f, rng);
  const float out_scale =
      1.0f / std::sqrt(2.0f * static_cast<float>(config.layers));
  for (std::size_t l = 0; l < config.layers; ++l)
    blocks_.emplace_back(e, e, config.heads, rng, out_scale);
  ln_gain_ = ones_param(e);
  ln_shift_ = zeros_param(e);
  head_ = normal_param(e, config.vocab, 1.0f / std::sqrt(static_cast<float>(e)),
                       rng);
}

Tensor Backbone::embed(std::span<const int> ids, std::size_t seq_len) const {
  if (seq_len == 0 || seq_len > seq_len_ || ids.size() % seq_len != 0)
    throw Error("Backbone::embed: bad sequence length " +
                std::to_string(seq_len));
  std::vector<int> positions(ids.size());
  for (std::size_t r = 0; r < ids.size(); ++r)
    positions[r] = static_cast<int>(r % seq_len);
  return add(embedding(token_embedding_, ids),
             embedding(position_embedding_, positions));
}

Tensor Backbone::run_blocks(const Tensor& x, std::size_t begin,
                            std::size_t end, std::size_t seq_len) const {
  if (begin > end || end > blocks_.size())
    throw Error("Backbone::run_blocks: bad block range");
  Tensor h = x;
  for (std::size_t i = begin; i < end; ++i) h = blocks_[i].forward(h, seq_len);
  return h;
}

Tensor Backbone::logits(const Tensor& x) const {
  return matmul(layer_norm(x, ln_gain_, ln_shift_), head_);
}

std::vector<float> Backbone::embed_step(int id, std::size_t position) const {
  const std::size_t e = token_embedding_.cols();
  if (id < 0 || static_cast<std::size_t>(id) >= token_embedding_.rows())
    throw Error("Backbone::embed_step: id " + std::to_string(id) +
                " out of range");
  if (position >= seq_len_)
    throw Error("Backbone::embed_step: position beyond context");
  std::vector<float> out(e);
  const float* tok = token_embedding_.values().data() + id * e;
  const float* pos = position_embedding_.values().data() + position * e;
  for (std::size_t j = 0; j < e; ++j) out[j] = tok[j] + pos[j];
  return out;
}

std::vector<float> Backbone::logits_row(std::span<const float> x) const {
  check_row(x, ln_gain_.cols(), "Backbone::logits_row");
  std::vector<float> h(x.size()), out(head_.cols());
  row_layer_norm(x.data(), ln_gain_, ln_shift_, h.data());
  row_matmul(h.data(), head_, out.data());
  return out;
}

void Backbone::visit_parameters(const std::string& prefix,
                                const ParameterVisitor& v) {
  v(prefix + "token_embedding", token_embedding_);
  v(prefix + "position_embedding", position_embedding_);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].visit_parameters(prefix + "block" + std::to_string(i) + ".", v);
  v(prefix + "ln_f.gain", ln_gain_);
  v(prefix + "ln_f.shift", ln_shift_);
  v(prefix + "head", head_);
}

BackboneRunner::BackboneRunner(const Backbone& model, std::size_t begin,
                               std::size_t end)
    : model_(&model), begin_(begin) {
  if (begin > end || end > model.layers())
    throw Error("BackboneRunner: bad block range");
  caches_.resize(end - begin);
}

std::vector<float> BackboneRunner::step(std::span<const float> x) {
  std::vector<float> h(x.begin(), x.end());
  for (std::size_t i = 0; i < caches_.size(); ++i)
    h = model_->block(begin_ + i).step(h, caches_[i]);
  return h;
}

// -- Gaussian head ---------------------------------------------------------------

GaussianParams split_gaussian(const Tensor& raw) {
  if (raw.cols() % 2 != 0) throw Error("split_gaussian: odd width");
  const std::size_t e = raw.cols() / 2;
  return {slice_cols(raw, 0, e),
          clamp_min(exp(slice_cols(raw, e, e)), kSigmaMin)};
}

void split_gaussian_row(std::span<const float> raw, std::vector<float>& mu,
                        std::vector<float>& sigma) {
  const std::size_t e = raw.size() / 2;
  mu.assign(raw.begin(), raw.begin() + e);
  sigma.resize(e);
  for (std::size_t j = 0; j < e; ++j) {
    const float s = std::exp(raw[e + j]);
    sigma[j] = s > kSigmaMin ? s : kSigmaMin;
  }
}

// -- Hyper-prior networks ----------------------------------------------------------

AnalysisNetwork::AnalysisNetwork(const ModelConfig& config,
                                 std::mt19937_64& rng)
    : stack_(config.embed, config.analysis_widths, config.heads, rng) {}

Tensor AnalysisNetwork::forward(const Tensor& y, std::size_t seq_len) const {
  return stack_.forward(y, seq_len);
}

void AnalysisNetwork::visit_parameters(const std::string& prefix,
                                       const ParameterVisitor& v) {
  stack_.visit_parameters(prefix, v);
}

SynthesisNetwork::SynthesisNetwork(const ModelConfig& config,
                                   std::mt19937_64& rng)
    : stack_(config.channels, config.synthesis_widths, config.heads, rng) {}

GaussianParams SynthesisNetwork::forward(const Tensor& w,
                                         std::size_t seq_len) const {
  return split_gaussian(stack_.forward(w, seq_len));
}

void SynthesisNetwork::visit_parameters(const std::string& prefix,
                                        const ParameterVisitor& v) {
  stack_.visit_parameters(prefix, v);
}

// -- Direct access --------------------------------------------------------------------

DirectAccessModel::DirectAccessModel(const ModelConfig& config,
                                     std::mt19937_64& rng)
    : channels_(config.channels),
      embed_(config.embed),
      heads_(heads_for_width(config.heads, config.embed)) {
  const std::size_t c = channels_, e = embed_;
  w_stack_ = BlockStack(c, {c, c, c, c}, config.heads, rng);
  start_ = zeros_param(e);
  ln_w_gain_ = ones_param(c);
  ln_w_shift_ = zeros_param(c);
  ln_y_gain_ = ones_param(e);
  ln_y_shift_ = zeros_param(e);
  const float s_kv = 1.0f / std::sqrt(static_cast<float>(c + e));
  wq_ = normal_param(c, e, 1.0f / std::sqrt(static_cast<float>(c)), rng);
  wk_ = normal_param(c + e, e, s_kv, rng);
  wv_ = normal_param(c + e, e, s_kv, rng);
  wo_ = normal_param(e, e, 1.0f / std::sqrt(static_cast<float>(e)), rng);
  ln2_gain_ = ones_param(e);
  ln2_shift_ = zeros_param(e);
  w1_ = normal_param(e, 4 * e, 1.0f / std::sqrt(static_cast<float>(e)), rng);
  w2_ = normal_param(4 * e, e, 1.0f / std::sqrt(static_cast<float>(4 * e)),
                     rng);
  out_stack_ = BlockStack(e, {e, e, 2 * e}, config.heads, rng);
}

Tensor DirectAccessModel::shift(const Tensor& y, std::size_t seq_len) const {
  return shift_rows(y, start_, seq_len);
}

Tensor DirectAccessModel::fusion(const Tensor& w, const Tensor& y_shifted,
                                 std::size_t seq_len) const {
  const Tensor lw = layer_norm(w, ln_w_gain_, ln_w_shift_);
  const Tensor ly = layer_norm(y_shifted, ln_y_gain_, ln_y_shift_);
  const Tensor kv = concat_cols(lw, ly);
  const Tensor a = causal_attention(matmul(lw, wq_), matmul(kv, wk_),
                                    matmul(kv, wv_), seq_len, heads_);
  const Tensor x1 = add(y_shifted, matmul(a, wo_));
  const Tensor h = layer_norm(x1, ln2_gain_, ln2_shift_);
  return add(x1, matmul(gelu(matmul(h, w1_)), w2_));
}

void DirectAccessModel::fusion_row(const float* w, const float* y,
                                   KvCache& cache, float* out) const {
  const std::size_t c = channels_, e = embed_;
  std::vector<float> kv(c + e), q(e), k(e), v(e), a(e), o(e), x1(e), h(e),
      hidden(4 * e), m(e);
  row_layer_norm(w, ln_w_gain_, ln_w_shift_, kv.data());
  row_layer_norm(y, ln_y_gain_, ln_y_shift_, kv.data() + c);
  row_matmul(kv.data(), wq_, q.data());  // reads the first c entries
  row_matmul(kv.data(), wk_, k.data());
  row_matmul(kv.data(), wv_, v.data());
  cached_attention(q.data(), k.data(), v.data(), e, e, heads_, cache,
                   a.data());
  row_matmul(a.data(), wo_, o.data());
  for (std::size_t j = 0; j < e; ++j) x1[j] = y[j] + o[j];
  row_layer_norm(x1.data(), ln2_gain_, ln2_shift_, h.data());
  row_matmul(h.data(), w1_, hidden.data());
  for (auto& val : hidden) val = kernels::gelu(val);
  row_matmul(hidden.data(), w2_, m.data());
  for (std::size_t j = 0; j < e; ++j) out[j] = x1[j] + m[j];
}

GaussianParams DirectAccessModel::forward(const Tensor& w,
                                          const Tensor& y_shifted,
                                          std::size_t seq_len) const {
  if (w.cols() != channels_ || y_shifted.cols() != embed_ ||
      w.rows() != y_shifted.rows())
    throw Error("DirectAccessModel::forward: shape mismatch");
  const Tensor wf = w_stack_.forward(w, seq_len);
  return split_gaussian(
      out_stack_.forward(fusion(wf, y_shifted, seq_len), seq_len));
}

void DirectAccessModel::visit_parameters(const std::string& prefix,
                                         const ParameterVisitor& v) {
  w_stack_.visit_parameters(prefix + "w.", v);
  v(prefix + "start_token", start_);
  v(prefix + "fusion.ln_w.gain", ln_w_gain_);
  v(prefix + "fusion.ln_w.shift", ln_w_shift_);
  v(prefix + "fusion.ln_y.gain", ln_y_gain_);
  v(prefix + "fusion.ln_y.shift", ln_y_shift_);
  v(prefix + "fusion.attn.q", wq_);
  v(prefix + "fusion.attn.k", wk_);
  v(prefix + "fusion.attn.v", wv_);
  v(prefix + "fusion.attn.out", wo_);
  v(prefix + "fusion.ln2.gain", ln2_gain_);
  v(prefix + "fusion.ln2.shift", ln2_shift_);
  v(prefix + "fusion.mlp.in", w1_);
  v(prefix + "fusion.mlp.out", w2_);
  out_stack_.visit_parameters(prefix + "out.", v);
}

DirectAccessModel::Runner::Runner(const DirectAccessModel& model)
    : model_(&model), w_runner_(model.w_stack_), out_runner_(model.out_stack_) {}

std::vector<float> DirectAccessModel::Runner::step(
    std::span<const float> w_row, std::span<const float> y_prev) {
  check_row(w_row, model_->channels_, "DirectAccessModel::Runner::step");
  check_row(y_prev, model_->embed_, "DirectAccessModel::Runner::step");
  const std::vector<float> wf = w_runner_.step(w_row);
  std::vector<float> fused(model_->embed_);
  model_->fusion_row(wf.data(), y_prev.data(), fusion_cache_, fused.data());
  return out_runner_.step(fused);
}

}  // namespace lmc
