// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "lmc/analysis.hpp"
#include "lmc/checkpoint.hpp"
#include "lmc/corpus.hpp"

namespace lmc {

namespace {

constexpr std::uint8_t kPacketMagic[4] = {'L', 'M', 'C', 'S'};
constexpr std::uint8_t kPacketVersion = 1;
constexpr std::size_t kLatentBatch = 8;

CorpusSplit load_corpus(const ExperimentConfig& config) {
  return split_corpus(load_tokens(config.corpus, config.model.vocab));
}

std::string stem(const std::string& ckpt) {
  return ckpt.substr(0, ckpt.size() - std::strlen(".ckpt"));
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out.precision(10);
  return out;
}

// Quantized Y of validation windows, one flattened T*E row per window.
SampleMatrix latent_samples(const CodecModel& model,
                            std::span<const int> tokens,
                            const std::vector<std::size_t>& windows) {
  NoGradGuard no_grad;
  const std::size_t T = model.config().seq_len;
  std::vector<std::vector<float>> rows;
  for (std::size_t i = 0; i < windows.size(); i += kLatentBatch) {
    const std::size_t n = std::min(kLatentBatch, windows.size() - i);
    std::vector<int> ids;
    for (std::size_t k = 0; k < n; ++k) {
      const auto w = window(tokens, windows[i + k], T);
      ids.insert(ids.end(), w.begin(), w.end());
    }
    const LatentPass p = run_latents(model, ids, T);
    const auto v = p.y.values();
    const std::size_t stride = T * p.y.cols();
    for (std::size_t k = 0; k < n; ++k)
      rows.emplace_back(v.begin() + k * stride, v.begin() + (k + 1) * stride);
  }
  return SampleMatrix::from_rows(rows);
}

// `count` distinct window indices drawn with a seeded generator (all windows,
// in order, if fewer are available).
std::vector<std::size_t> pick_windows(std::size_t available, std::size_t count,
                                      std::uint64_t seed) {
  std::vector<std::size_t> idx(available);
  std::iota(idx.begin(), idx.end(), 0);
  if (count >= available) return idx;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates with an explicit draw so the result does not depend
  // on the standard library's shuffle.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng() % (available - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::string resolve_output_dir(const ExperimentConfig& config) {
  const char* env = std::getenv(kOutputDirEnv);
  if (env != nullptr && *env != '\0') return env;
  return config.output_dir;
}

std::string lambda_tag(double lambda) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, lambda);
  return std::string(buf, r.ptr);
}

std::string checkpoint_path(const std::string& dir, EntropyModelKind model,
                            std::size_t split, double lambda) {
  return dir + "/" + to_string(model) + "_s" + std::to_string(split) + "_l" +
         lambda_tag(lambda) + ".ckpt";
}

// -- train ----------------------------------------------------------------------

std::vector<TrainRun> cmd_train(const ExperimentConfig& config,
                                std::ostream* progress) {
  config.validate();
  const CorpusSplit data = load_corpus(config);
  const std::string dir = resolve_output_dir(config);
  const std::size_t tokens_per_step = config.train.batch *
                                      config.train.accumulation *
                                      config.model.seq_len;
  std::vector<TrainRun> runs;
  for (std::size_t split : config.train.splits) {
    ModelConfig mc = config.model;
    mc.split = split;
    std::unique_ptr<CodecModel> model;
    for (double lambda : config.train.lambdas) {
      if (!model || !config.train.warm_start)
        model = std::make_unique<CodecModel>(mc);
      TrainRun run;
      run.model = mc.entropy_model;
      run.split = split;
      run.lambda = lambda;
      run.checkpoint = checkpoint_path(dir, mc.entropy_model, split, lambda);
      run.log = stem(run.checkpoint) + ".train.csv";
      if (progress != nullptr)
        *progress << "training " << to_string(mc.entropy_model) << " split "
                  << split << " lambda " << lambda_tag(lambda) << '\n';
      std::filesystem::create_directories(dir);
      std::ofstream log = open_output(run.log);
      run.result = train_codec(*model, data, config.train, lambda, &log);
      run.epochs = static_cast<double>(run.result.steps * tokens_per_step) /
                   static_cast<double>(data.train.size());
      const EvalResult& b = run.result.best;
      CheckpointMeta meta;
      meta.step = run.result.best_step;
      meta.lambda = lambda;
      meta.metrics = {{"distortion", b.distortion},
                      {"rate_y_bpt", b.rate_y_bpt},
                      {"rate_w_bpt", b.rate_w_bpt},
                      {"steps", run.result.steps},
                      {"epochs", run.epochs},
                      {"restarts", run.result.restarts},
                      {"early_stopped", run.result.early_stopped}};
      save_checkpoint(run.checkpoint, *model, meta);
      if (progress != nullptr)
        *progress << "  steps " << run.result.steps << " (" << run.epochs
                  << " epochs), best step " << run.result.best_step
                  << ": distortion " << b.distortion << " nats, "
                  << b.total_bpt() << " BPT -> " << run.checkpoint << '\n';
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

// -- rd-sweep -------------------------------------------------------------------

void RdSweepReport::write_rd_csv(std::ostream& out) const {
  out << "model,split,lambda,hyper_bpt,total_bpt,coded_bpt,distortion,"
         "perplexity\n";
  for (const auto& r : rows)
    out << r.model << ',' << r.split << ',' << lambda_tag(r.lambda) << ','
        << r.hyper_bpt << ',' << r.total_bpt << ',' << r.coded_bpt << ','
        << r.distortion << ',' << r.perplexity << '\n';
}

void RdSweepReport::write_bd_csv(std::ostream& out) const {
  out << "ref,test,split,bd_rate_percent,notice\n";
  for (const auto& b : bd_rates) {
    out << b.ref << ',' << b.test << ',' << b.split << ',';
    if (b.percent) out << *b.percent;
    out << ',' << b.notice << '\n';
  }
}

RdSweepReport cmd_rd_sweep(const ExperimentConfig& config,
                           const std::vector<EntropyModelKind>& models) {
  config.validate();
  if (models.empty()) throw Error("rd-sweep: no models given");
  const std::string dir = resolve_output_dir(config);
  std::vector<std::string> missing;
  for (auto m : models)
    for (auto s : config.train.splits)
      for (double l : config.train.lambdas) {
        const std::string p = checkpoint_path(dir, m, s, l);
        if (!std::filesystem::exists(p)) missing.push_back(p);
      }
  if (!missing.empty()) {
    std::string msg = "rd-sweep: missing checkpoints:";
    for (const auto& p : missing) msg += "\n  " + p;
    throw Error(msg);
  }

  const CorpusSplit data = load_corpus(config);
  RdSweepReport report;
  for (auto m : models)
    for (auto s : config.train.splits)
      for (double l : config.train.lambdas) {
        const auto ck = load_checkpoint(checkpoint_path(dir, m, s, l));
        const CodecModel& model = *ck.model;
        const std::size_t T = model.config().seq_len;
        const std::size_t n = std::min(config.analyze.rd_sequences,
                                       window_count(data.validation, T));
        const EvalResult e = evaluate(model, data.validation, n, l);
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const SequenceStream coded =
              encode_whole_sequence(model, window(data.validation, i, T));
          bits += 8 * (coded.w_chunk.size() + coded.y_chunk.size());
        }
        RdRow row;
        row.model = to_string(m);
        row.split = s;
        row.lambda = l;
        row.hyper_bpt = e.rate_w_bpt;
        row.total_bpt = e.total_bpt();
        row.coded_bpt = static_cast<double>(bits) / static_cast<double>(n * T);
        row.distortion = e.distortion;
        row.perplexity = std::exp(e.distortion);
        report.rows.push_back(row);
      }

  auto curve = [&report](const std::string& model, std::size_t split) {
    std::vector<RdPoint> pts;
    for (const auto& r : report.rows)
      if (r.model == model && r.split == split)
        pts.push_back({r.total_bpt, -r.distortion});
    return pts;
  };
  const std::string ref = to_string(models.front());
  for (std::size_t i = 1; i < models.size(); ++i)
    for (auto s : config.train.splits) {
      BdEntry b{ref, to_string(models[i]), s, std::nullopt, ""};
      try {
        b.percent = bd_rate(curve(ref, s), curve(b.test, s));
      } catch (const Error& e) {
        b.notice = e.what();
      }
      report.bd_rates.push_back(b);
    }
  return report;
}

// -- analyze --------------------------------------------------------------------

std::pair<double, std::vector<double>> rate_gradient(
    const CodecModel& model, const QuantizedLatent& yq) {
  const ModelConfig& c = model.config();
  const std::size_t T = yq.rows;
  if (yq.cols != c.embed) throw Error("rate_gradient: latent width mismatch");
  Tensor y = yq.to_tensor();
  y = Tensor::from(std::vector<float>(y.values().begin(), y.values().end()),
                   T, c.embed, true);
  const Tensor w = quantize_ste(model.analysis().forward(y, T));
  GaussianParams g;
  if (c.entropy_model == EntropyModelKind::kDirectAccess) {
    const auto& da = model.direct_access();
    g = da.forward(w, da.shift(y, T), T);
  } else {
    g = model.synthesis().forward(w, T);
  }
  Tensor bits = rate_y(y, g.mu, g.sigma);
  const double r = bits.item();
  bits.backward();
  const auto grad = y.grad();
  return {r, std::vector<double>(grad.begin(), grad.end())};
}

nlohmann::json ComplexityReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"model", r.model},
                         {"split", r.split},
                         {"lambda", r.lambda},
                         {"bpt", r.bpt},
                         {"distortion", r.distortion},
                         {"rademacher", r.rademacher},
                         {"cov_logdet_scaled", r.cov_logdet_scaled},
                         {"krylov_dim", r.krylov_dim},
                         {"lipschitz", r.lipschitz},
                         {"lipschitz_log", r.lipschitz_log}});
  nlohmann::json corr = nlohmann::json::array();
  for (const auto& c : correlations) {
    nlohmann::json e{{"name", c.name}};
    e["pearson"] = c.value ? nlohmann::json(*c.value) : nlohmann::json(nullptr);
    if (!c.notice.empty()) e["notice"] = c.notice;
    corr.push_back(e);
  }
  nlohmann::json j{{"format", 1}, {"rows", rows_json}, {"correlations", corr}};
  if (!notice.empty()) j["notice"] = notice;
  // What each measured column stands in for.
  j["proxies"] = {
      {"bpt", "conditional cross-entropy of Y under the entropy model"},
      {"rademacher", "empirical Rademacher complexity of the quantized Y"},
      {"cov_logdet_scaled", "(1/2D) log det of the covariance of Y"},
      {"lipschitz_log", "log Lipschitz constant of the rate in y"}};
  return j;
}

void ComplexityReport::write_csv(std::ostream& out) const {
  out << "model,split,lambda,bpt,distortion,rademacher,cov_logdet_scaled,"
         "krylov_dim,lipschitz,lipschitz_log\n";
  for (const auto& r : rows)
    out << r.model << ',' << r.split << ',' << lambda_tag(r.lambda) << ','
        << r.bpt << ',' << r.distortion << ',' << r.rademacher << ','
        << r.cov_logdet_scaled << ',' << r.krylov_dim << ',' << r.lipschitz
        << ',' << r.lipschitz_log << '\n';
}

ComplexityReport analyze_checkpoints(const ExperimentConfig& config,
                                     const std::vector<std::string>& paths) {
  config.validate();
  if (paths.empty()) throw Error("analyze: no checkpoints given");
  const AnalyzeConfig& a = config.analyze;
  const CorpusSplit data = load_corpus(config);
  ComplexityReport report;
  for (const auto& path : paths) {
    const auto ck = load_checkpoint(path);
    const CodecModel& model = *ck.model;
    const ModelConfig& mc = model.config();
    const std::size_t T = mc.seq_len;
    const std::size_t available = window_count(data.validation, T);
    const auto windows = pick_windows(available, a.samples, a.seed);
    const SampleMatrix samples = latent_samples(model, data.validation, windows);

    ComplexityRow row;
    row.model = to_string(mc.entropy_model);
    row.split = mc.split;
    row.lambda = ck.meta.lambda;
    const EvalResult e =
        evaluate(model, data.validation, a.rd_sequences, ck.meta.lambda);
    row.bpt = e.total_bpt();
    row.distortion = e.distortion;
    row.rademacher = rademacher_estimate(samples, a.draws, a.seed);
    const ArnoldiResult ar = arnoldi_cov_logdet(
        samples, std::min(a.arnoldi_iterations, samples.dim), a.seed);
    row.cov_logdet_scaled = ar.scaled_logdet;
    row.krylov_dim = ar.krylov_dim;

    // The rate is scalar, so its Jacobian is one gradient row and power
    // iteration reduces to that row's norm; it still runs through the
    // generic matrix-free routine.
    const std::size_t n_lip = std::min(a.lipschitz_samples, samples.count);
    double lip_sum = 0.0;
    for (std::size_t i = 0; i < n_lip; ++i) {
      QuantizedLatent yq;
      yq.rows = T;
      yq.cols = mc.embed;
      const auto s = samples.row(i);
      yq.symbols.assign(s.begin(), s.end());
      const std::vector<double> grad = rate_gradient(model, yq).second;
      const LinearMap jvp = [&grad](std::span<const double> v) {
        double dot = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) dot += grad[k] * v[k];
        return std::vector<double>{dot};
      };
      const LinearMap vjp = [&grad](std::span<const double> u) {
        std::vector<double> out(grad.size());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = grad[k] * u[0];
        return out;
      };
      lip_sum += power_iteration_norm(grad.size(), jvp, vjp,
                                      a.lipschitz_iterations, a.seed + i);
    }
    row.lipschitz = lip_sum / static_cast<double>(n_lip);
    row.lipschitz_log = std::log(std::max(row.lipschitz, 1e-300));
    report.rows.push_back(row);
  }

  std::set<std::size_t> splits;
  for (const auto& r : report.rows) splits.insert(r.split);
  const std::vector<std::pair<std::string, double ComplexityRow::*>> pairs = {
      {"bpt~rademacher", &ComplexityRow::rademacher},
      {"bpt~cov_logdet_scaled", &ComplexityRow::cov_logdet_scaled}};
  if (splits.size() < 2) {
    report.notice = "correlations need at least 2 split points, found " +
                    std::to_string(splits.size());
    return report;
  }
  std::vector<double> bpt;
  for (const auto& r : report.rows) bpt.push_back(r.bpt);
  for (const auto& [name, field] : pairs) {
    std::vector<double> xs;
    for (const auto& r : report.rows) xs.push_back(r.*field);
    Correlation c{name, std::nullopt, ""};
    try {
      c.value = pearson(bpt, xs);
    } catch (const Error& e) {
      c.notice = e.what();
    }
    report.correlations.push_back(c);
  }
  return report;
}

ComplexityReport cmd_analyze(const ExperimentConfig& config) {
  const std::string dir = resolve_output_dir(config);
  std::vector<std::string> paths, missing;
  for (auto s : config.train.splits)
    for (double l : config.train.lambdas) {
      paths.push_back(checkpoint_path(dir, config.model.entropy_model, s, l));
      if (!std::filesystem::exists(paths.back())) missing.push_back(paths.back());
    }
  if (!missing.empty()) {
    std::string msg = "analyze: missing checkpoints:";
    for (const auto& p : missing) msg += "\n  " + p;
    throw Error(msg);
  }
  return analyze_checkpoints(config, paths);
}

// -- bitstream files ------------------------------------------------------------

std::vector<std::uint8_t> PacketFile::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kPacketMagic), std::end(kPacketMagic));
  out.push_back(kPacketVersion);
  for (std::uint64_t h : {config_hash, weights_hash})
    for (int i = 0; i < 8; ++i)
      out.push_back(static_cast<std::uint8_t>(h >> (8 * i)));
  put_varint(out, packets.size());
  for (const auto& p : packets) p.serialize_to(out);
  return out;
}

PacketFile PacketFile::parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 21 || std::memcmp(bytes.data(), kPacketMagic, 4) != 0)
    throw Error("bitstream: bad magic");
  if (bytes[4] != kPacketVersion)
    throw Error("bitstream: unsupported version " + std::to_string(bytes[4]));
  PacketFile f;
  for (int i = 0; i < 8; ++i) {
    f.config_hash |= static_cast<std::uint64_t>(bytes[5 + i]) << (8 * i);
    f.weights_hash |= static_cast<std::uint64_t>(bytes[13 + i]) << (8 * i);
  }
  std::size_t pos = 21;
  const std::uint64_t n = get_varint(bytes, pos);
  for (std::uint64_t t = 0; t < n; ++t) {
    try {
      f.packets.push_back(FramePacket::parse(bytes, pos));
    } catch (const Error& e) {
      throw Error("bitstream: frame " + std::to_string(t) + ": " + e.what());
    }
  }
  if (pos != bytes.size()) throw Error("bitstream: trailing bytes");
  return f;
}

void PacketFile::check_model(const CodecModel& model) const {
  if (config_hash != model.config_hash())
    throw Error("bitstream config hash " + hex64(config_hash) +
                " does not match the checkpoint's " + hex64(model.config_hash()));
  if (weights_hash != model.weights_hash())
    throw Error("bitstream weights hash " + hex64(weights_hash) +
                " does not match the checkpoint's " +
                hex64(model.weights_hash()));
}

}  // namespace lmc
