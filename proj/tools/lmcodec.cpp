// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// lmcodec: train, evaluate and run split language-model codecs.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "lmc/checkpoint.hpp"
#include "lmc/corpus.hpp"
#include "lmc/experiments.hpp"
#include "lmc/runtime.hpp"

namespace {

using namespace lmc;

struct Common {
  std::string config_path;
  std::string output_dir;
  std::string corpus;
};

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty()
                             ? ExperimentConfig{}
                             : load_experiment_config(c.config_path);
  if (!c.output_dir.empty()) cfg.output_dir = c.output_dir;
  if (!c.corpus.empty()) cfg.corpus = c.corpus;
  return cfg;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "JSON experiment config")
      ->check(CLI::ExistingFile);
  cmd->add_option("-o,--output-dir", c.output_dir,
                  "Checkpoint/report directory (LMC_OUTPUT_DIR overrides)");
  cmd->add_option("--corpus", c.corpus, "Training text");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out.precision(10);
  return out;
}

std::vector<int> read_text_tokens(const std::string& path, std::size_t vocab,
                                  std::size_t offset, std::size_t length,
                                  std::size_t context) {
  const auto all = load_tokens(path, vocab);
  if (offset > all.size()) throw Error("--offset is past the end of the input");
  const std::size_t n =
      length == 0 ? std::min(context, all.size() - offset) : length;
  if (n > context)
    throw Error("sequence of " + std::to_string(n) +
                " tokens exceeds the model context of " +
                std::to_string(context));
  if (offset + n > all.size()) throw Error("input is shorter than requested");
  return {all.begin() + static_cast<long>(offset),
          all.begin() + static_cast<long>(offset + n)};
}

// Most likely next character after each position.
std::string argmax_text(const std::vector<float>& logits, std::size_t vocab) {
  std::string out;
  for (std::size_t r = 0; r * vocab < logits.size(); ++r) {
    const auto row = logits.begin() + static_cast<long>(r * vocab);
    out.push_back(static_cast<char>(std::max_element(row, row + static_cast<long>(vocab)) - row));
  }
  return out;
}

int run_train(const Common& c, bool print_config,
              const std::vector<double>& lambdas,
              const std::vector<std::size_t>& splits, const std::string& model,
              std::size_t max_steps) {
  ExperimentConfig cfg = load_config(c);
  if (!lambdas.empty()) cfg.train.lambdas = lambdas;
  if (!splits.empty()) cfg.train.splits = splits;
  if (!model.empty()) cfg.model.entropy_model = entropy_model_from_string(model);
  if (max_steps != 0) cfg.train.max_steps = max_steps;
  cfg.validate();
  if (print_config) {
    std::cout << to_json(cfg).dump(2) << '\n';
    return 0;
  }
  cmd_train(cfg, &std::cout);
  return 0;
}

int run_rd_sweep(const Common& c, const std::vector<std::string>& model_names) {
  const ExperimentConfig cfg = load_config(c);
  std::vector<EntropyModelKind> models;
  for (const auto& m : model_names) models.push_back(entropy_model_from_string(m));
  if (models.empty()) models.push_back(cfg.model.entropy_model);
  const RdSweepReport r = cmd_rd_sweep(cfg, models);
  const std::string dir = resolve_output_dir(cfg);
  {
    auto out = open_out(dir + "/rd_sweep.csv");
    r.write_rd_csv(out);
  }
  {
    auto out = open_out(dir + "/bd_rate.csv");
    r.write_bd_csv(out);
  }
  std::cout << std::left << std::setw(15) << "Model" << std::setw(7) << "Split"
            << std::setw(9) << "lambda" << std::setw(11) << "Hyper BPT"
            << std::setw(11) << "Total BPT" << std::setw(11) << "Coded BPT"
            << "Perplexity\n"
            << std::fixed << std::setprecision(2);
  for (const auto& row : r.rows)
    std::cout << std::setw(15) << row.model << std::setw(7) << row.split
              << std::setw(9) << lambda_tag(row.lambda) << std::setw(11)
              << row.hyper_bpt << std::setw(11) << row.total_bpt
              << std::setw(11) << row.coded_bpt << row.perplexity << '\n';
  for (const auto& b : r.bd_rates) {
    std::cout << "BD-rate " << b.test << " vs " << b.ref << " (split "
              << b.split << "): ";
    if (b.percent)
      std::cout << *b.percent << "%\n";
    else
      std::cout << "n/a (" << b.notice << ")\n";
  }
  std::cout << "wrote " << dir << "/rd_sweep.csv and " << dir
            << "/bd_rate.csv\n";
  return 0;
}

int run_analyze(const Common& c, const std::vector<std::string>& checkpoints,
                std::size_t samples) {
  ExperimentConfig cfg = load_config(c);
  if (samples != 0) cfg.analyze.samples = samples;
  const ComplexityReport r = checkpoints.empty()
                                 ? cmd_analyze(cfg)
                                 : analyze_checkpoints(cfg, checkpoints);
  const std::string dir = resolve_output_dir(cfg);
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir + "/analysis.csv");
    r.write_csv(out);
  }
  {
    auto out = open_out(dir + "/analysis.json");
    out << r.to_json().dump(2) << '\n';
  }
  r.write_csv(std::cout);
  for (const auto& corr : r.correlations) {
    std::cout << corr.name << ": ";
    if (corr.value)
      std::cout << *corr.value << '\n';
    else
      std::cout << "n/a (" << corr.notice << ")\n";
  }
  if (!r.notice.empty()) std::cout << "notice: " << r.notice << '\n';
  std::cout << "wrote " << dir << "/analysis.csv and " << dir
            << "/analysis.json\n";
  return 0;
}

int run_encode(const std::string& ckpt_path, const std::string& input,
               const std::string& output, std::size_t offset,
               std::size_t length) {
  const auto ck = load_checkpoint(ckpt_path);
  const CodecModel& model = *ck.model;
  const auto tokens = read_text_tokens(input, model.config().vocab, offset,
                                       length, model.config().seq_len);
  PacketFile f;
  f.config_hash = model.config_hash();
  f.weights_hash = model.weights_hash();
  f.packets = encode_sequence(model, tokens);
  write_file(output, f.serialize());
  const SplitResult ref = run_split_inference(model, tokens);
  std::cout << tokens.size() << " frames, "
            << measure_bpt(f.packets, tokens.size()) << " BPT coded, "
            << ref.estimated_bpt() << " BPT estimated -> " << output << '\n';
  return 0;
}

int run_decode(const std::string& ckpt_path, const std::string& input,
               const std::string& output) {
  const auto ck = load_checkpoint(ckpt_path);
  const CodecModel& model = *ck.model;
  const PacketFile f = PacketFile::parse(read_file(input));
  f.check_model(model);
  const DecodedSequence d = decode_sequence(model, f.packets);
  const std::string predictions = argmax_text(d.logits, model.config().vocab);
  if (!output.empty()) {
    auto out = open_out(output);
    out << predictions;
  }
  std::cout << f.packets.size() << " frames, "
            << measure_bpt(f.packets, f.packets.size()) << " BPT\n";
  return 0;
}

int run_serve(const std::string& role, const std::string& addr,
              const std::string& ckpt_path, std::size_t split,
              const std::string& input, const std::string& output,
              std::size_t offset, std::size_t length) {
  const auto ck = load_checkpoint(ckpt_path);
  const CodecModel& model = *ck.model;
  if (split != 0 && split != model.config().split)
    throw Error("--split " + std::to_string(split) +
                " does not match the checkpoint's split " +
                std::to_string(model.config().split));
  if (role == "head") {
    if (input.empty()) throw Error("the head needs --input");
    const auto tokens = read_text_tokens(input, model.config().vocab, offset,
                                         length, model.config().seq_len);
    FdTransport t = tcp_connect(addr);
    const HeadResult h = serve_head(t, model, tokens);
    const double n = static_cast<double>(h.frames);
    std::cout << h.frames << " frames sent, "
              << static_cast<double>(h.payload_bits) / n << " BPT payload, "
              << 8.0 * static_cast<double>(h.wire_bytes) / n
              << " bits/token on the wire, " << h.encode_ms / n
              << " ms/token encode\n";
    return 0;
  }
  TcpListener listener(addr);
  std::cerr << "tail listening on port " << listener.port() << '\n';
  FdTransport t = listener.accept();
  const TailResult r = serve_tail(t, model);
  const std::string predictions =
      argmax_text(r.decoded.logits, model.config().vocab);
  if (!output.empty()) {
    auto out = open_out(output);
    out << predictions;
  }
  const std::size_t frames = r.decoded.y.rows;
  std::cout << frames << " frames decoded, " << r.decode_ms / static_cast<double>(std::max<std::size_t>(frames, 1))
            << " ms/token decode\n";
  if (frames > 0) {
    const LosslessResult z = lossless_baseline(r.decoded.y);
    std::cout << "DEFLATE on the same latents: " << z.bpt << " BPT (raw "
              << static_cast<double>(z.raw_bits) / static_cast<double>(frames)
              << ")\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split language-model codec: training, RD sweeps, analysis, "
               "bitstreams and two-process inference"};
  app.require_subcommand(1);

  Common common;
  bool print_config = false;
  std::vector<double> lambdas;
  std::vector<std::size_t> splits;
  std::string model_name;
  std::size_t max_steps = 0;
  auto* train = app.add_subcommand("train", "Train codecs over lambdas and splits");
  add_common(train, common);
  train->add_flag("--print-config", print_config,
                  "Print the effective config as JSON and exit");
  train->add_option("--lambda", lambdas, "Override the lambda list");
  train->add_option("--split", splits, "Override the split list");
  train->add_option("--model", model_name,
                    "proposed | fourier | direct_access");
  train->add_option("--max-steps", max_steps, "Override train.max_steps");

  std::vector<std::string> models;
  auto* sweep = app.add_subcommand("rd-sweep", "Rate-distortion table and BD-rates");
  add_common(sweep, common);
  sweep->add_option("--models", models,
                    "Entropy models to compare; the first is the BD reference");

  std::vector<std::string> checkpoints;
  std::size_t samples = 0;
  auto* analyze = app.add_subcommand("analyze", "Complexity estimates and correlations");
  add_common(analyze, common);
  analyze->add_option("--checkpoint", checkpoints,
                      "Checkpoints to analyze (default: from the config)");
  analyze->add_option("--samples", samples, "Override analyze.samples");

  std::string ckpt, input, output, role = "tail", addr = "127.0.0.1:7470";
  std::size_t offset = 0, length = 0, split = 0;
  auto* encode = app.add_subcommand("encode", "Encode text into a frame bitstream");
  encode->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  encode->add_option("-i,--input", input, "Text file")->required()->check(CLI::ExistingFile);
  encode->add_option("-o,--output", output, "Bitstream file")->required();
  encode->add_option("--offset", offset, "First character to encode");
  encode->add_option("--length", length, "Characters to encode (default: context)");

  auto* decode = app.add_subcommand("decode", "Decode a bitstream and predict");
  decode->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  decode->add_option("-i,--input", input, "Bitstream file")->required()->check(CLI::ExistingFile);
  decode->add_option("-o,--output", output, "Write argmax predictions here");

  auto* serve = app.add_subcommand("serve", "Run one side of a split session over TCP");
  serve->add_option("--role", role, "head (sender) or tail (receiver)")
      ->check(CLI::IsMember({"head", "tail"}));
  serve->add_option("--addr", addr, "host:port");
  serve->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  serve->add_option("--split", split, "Expected split point (checked)");
  serve->add_option("-i,--input", input, "Text file (head)");
  serve->add_option("-o,--output", output, "Predictions file (tail)");
  serve->add_option("--offset", offset, "First character to send (head)");
  serve->add_option("--length", length, "Characters to send (head)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return run_train(common, print_config, lambdas, splits, model_name, max_steps);
    if (*sweep) return run_rd_sweep(common, models);
    if (*analyze) return run_analyze(common, checkpoints, samples);
    if (*encode) return run_encode(ckpt, input, output, offset, length);
    if (*decode) return run_decode(ckpt, input, output);
    if (*serve) return run_serve(role, addr, ckpt, split, input, output, offset, length);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
