// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lmc/checkpoint.hpp"
#include "lmc/corpus.hpp"
#include "lmc/experiments.hpp"
#include "test_support.hpp"

using namespace lmc;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path p = fs::temp_directory_path() / "lmc_test_experiments";
    fs::remove_all(p);
    fs::create_directories(p);
    // A slice of the bundled corpus keeps runs short.
    std::ifstream in("data/shakespeare.txt");
    std::string text(30000, '\0');
    in.read(text.data(), static_cast<std::streamsize>(text.size()));
    text.resize(static_cast<std::size_t>(in.gcount()));
    std::ofstream(p / "corpus.txt") << text;
    return p;
  }();
  return dir;
}

ExperimentConfig small_experiment() {
  ExperimentConfig c;
  c.model = test::tiny_config();
  c.model.vocab = 128;
  c.model.layers = 4;
  c.train.splits = {1, 2, 3};
  c.train.lambdas = {0.001, 0.01};
  c.train.batch = 2;
  c.train.accumulation = 1;
  c.train.max_steps = 6;
  c.train.warmup_steps = 1;
  c.train.eval_every = 3;
  c.train.eval_batches = 1;
  c.analyze.samples = 8;
  c.analyze.draws = 16;
  c.analyze.arnoldi_iterations = 8;
  c.analyze.lipschitz_samples = 2;
  c.analyze.lipschitz_iterations = 5;
  c.analyze.rd_sequences = 4;
  c.corpus = (work_dir() / "corpus.txt").string();
  c.output_dir = (work_dir() / "runs").string();
  return c;
}

// Trains the sweep once and shares it between test cases.
const std::vector<TrainRun>& trained() {
  static const std::vector<TrainRun> runs = [] {
    std::ostringstream progress;
    auto r = cmd_train(small_experiment(), &progress);
    REQUIRE_FALSE(progress.str().empty());
    return r;
  }();
  return runs;
}

}  // namespace

TEST_CASE("paths and tags") {
  CHECK(lambda_tag(0.001) == "0.001");
  CHECK(lambda_tag(0.0025) == "0.0025");
  CHECK(lambda_tag(1.0) == "1");
  CHECK(checkpoint_path("out", EntropyModelKind::kProposed, 3, 0.01) ==
        (fs::path("out") / "proposed_s3_l0.01.ckpt").string());

  ExperimentConfig c = small_experiment();
  ::unsetenv(kOutputDirEnv);
  CHECK(resolve_output_dir(c) == c.output_dir);
  ::setenv(kOutputDirEnv, "/tmp/elsewhere", 1);
  CHECK(resolve_output_dir(c) == "/tmp/elsewhere");
  ::unsetenv(kOutputDirEnv);
}

TEST_CASE("train writes one checkpoint per split and lambda") {
  const auto& runs = trained();
  REQUIRE(runs.size() == 6);
  for (const auto& r : runs) {
    CAPTURE(r.checkpoint);
    CHECK(fs::exists(r.checkpoint));
    CHECK(fs::exists(r.log));
    const LoadedCheckpoint ck = load_checkpoint(r.checkpoint);
    CHECK(ck.model->config().split == r.split);
    CHECK(ck.meta.lambda == r.lambda);
    CHECK(r.epochs > 0.0);
  }
  CHECK(runs[0].split == 1);
  CHECK(runs[0].lambda == 0.001);
  CHECK(runs[1].lambda == 0.01);
  CHECK(runs[5].split == 3);
}

TEST_CASE("rd sweep") {
  trained();
  const ExperimentConfig c = small_experiment();
  const RdSweepReport rep = cmd_rd_sweep(c, {EntropyModelKind::kProposed});
  REQUIRE(rep.rows.size() == 6);
  for (const auto& r : rep.rows) {
    CHECK(r.model == "proposed");
    CHECK(r.total_bpt >= r.hyper_bpt);
    CHECK(r.coded_bpt > 0.0);
    CHECK(r.perplexity == doctest::Approx(std::exp(r.distortion)));
  }
  std::ostringstream csv;
  rep.write_rd_csv(csv);
  CHECK(csv.str().rfind("model,split,lambda,hyper_bpt,total_bpt,coded_bpt,distortion,perplexity\n", 0) == 0);
  std::ostringstream bd;
  rep.write_bd_csv(bd);
  CHECK(bd.str().rfind("ref,test,split,bd_rate_percent,notice\n", 0) == 0);

  // The direct-access sweep was never trained.
  try {
    cmd_rd_sweep(c, {EntropyModelKind::kProposed, EntropyModelKind::kDirectAccess});
    FAIL("missing checkpoints not reported");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("direct_access_s1_l0.001") != std::string::npos);
    CHECK(std::string(e.what()).find("direct_access_s3_l0.01") != std::string::npos);
  }
}

TEST_CASE("analyze reports every split and is deterministic") {
  trained();
  const ExperimentConfig c = small_experiment();
  const ComplexityReport a = cmd_analyze(c);
  const ComplexityReport b = cmd_analyze(c);
  REQUIRE(a.rows.size() == 6);
  CHECK(a.to_json().dump() == b.to_json().dump());
  REQUIRE(a.correlations.size() == 2);
  CHECK(a.correlations[0].name == "bpt~rademacher");
  CHECK(a.correlations[1].name == "bpt~cov_logdet_scaled");
  for (const auto& corr : a.correlations) {
    if (corr.value) {
      CHECK(std::abs(*corr.value) <= 1.0);
    } else {
      CHECK_FALSE(corr.notice.empty());
    }
  }
  for (const auto& r : a.rows) {
    CHECK(r.rademacher > 0.0);
    CHECK(std::isfinite(r.cov_logdet_scaled));
    CHECK(r.krylov_dim >= 1);
    CHECK(r.lipschitz >= 0.0);
  }
  const nlohmann::json j = a.to_json();
  CHECK(j.at("rows").size() == 6);
  CHECK(j.contains("proxies"));
  std::ostringstream csv;
  a.write_csv(csv);
  const std::string text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);

  // A single split cannot support a correlation.
  ExperimentConfig one = c;
  one.train.splits = {2};
  const ComplexityReport single = cmd_analyze(one);
  CHECK(single.rows.size() == 2);
  CHECK(single.correlations.empty());
  CHECK_FALSE(single.notice.empty());

  ExperimentConfig missing = c;
  missing.output_dir = (work_dir() / "nothing").string();
  CHECK_THROWS_AS(cmd_analyze(missing), Error);
}

TEST_CASE("rate gradient covers every latent value") {
  const auto& runs = trained();
  const LoadedCheckpoint ck = load_checkpoint(runs[0].checkpoint);
  const CodecModel& model = *ck.model;
  const auto tokens = test::random_tokens(model.config().seq_len, 128, 40);
  const QuantizedLatent y = run_split_inference(model, tokens).y;
  const auto [rate, grad] = rate_gradient(model, y);
  CHECK(rate > 0.0);
  CHECK(grad.size() == y.rows * y.cols);
  for (double g : grad) CHECK(std::isfinite(g));
}

TEST_CASE("packet files") {
  const CodecModel model(test::tiny_config());
  PacketFile f;
  f.config_hash = model.config_hash();
  f.weights_hash = model.weights_hash();
  f.packets = encode_sequence(model, test::random_tokens(5, 32, 41));
  const auto bytes = f.serialize();
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LMCS");
  const PacketFile back = PacketFile::parse(bytes);
  CHECK(back.packets == f.packets);
  CHECK_NOTHROW(back.check_model(model));

  ModelConfig other = test::tiny_config();
  other.seed = 8;
  CHECK_THROWS_AS(back.check_model(CodecModel(other)), Error);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(PacketFile::parse(truncated), Error);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(PacketFile::parse(trailing), Error);
  auto magic = bytes;
  magic[1] = 'X';
  CHECK_THROWS_AS(PacketFile::parse(magic), Error);
}
