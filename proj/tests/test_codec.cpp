// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>
#include <string>

#include "doctest.h"
#include "lmc/codec.hpp"
#include "test_support.hpp"

using namespace lmc;
using test::bitwise_equal;

namespace {

TokenBatch make_batch(const ModelConfig& c, std::size_t batch, std::uint64_t seed) {
  TokenBatch b;
  b.batch = batch;
  b.seq_len = c.seq_len;
  const auto all = test::random_tokens(batch * c.seq_len + 1, c.vocab, seed);
  b.inputs.assign(all.begin(), all.end() - 1);
  b.targets.assign(all.begin() + 1, all.end());
  return b;
}

const EntropyModelKind kKinds[] = {EntropyModelKind::kProposed,
                                   EntropyModelKind::kFourier,
                                   EntropyModelKind::kDirectAccess};

}  // namespace

TEST_CASE("rd loss terms") {
  const ModelConfig cfg = test::tiny_config();
  const CodecModel model(cfg);
  const TokenBatch batch = make_batch(cfg, 2, 1);

  const RDLossTerms zero = rd_loss(model, batch, 0.0);
  CHECK(zero.loss.item() == static_cast<float>(zero.distortion));
  CHECK(zero.rate_y_bpt > 0.0);
  CHECK(zero.rate_w_bpt >= 0.0);

  const RDLossTerms a = rd_loss(model, batch, 0.01);
  const RDLossTerms b = rd_loss(model, batch, 0.02);
  CHECK(a.distortion == zero.distortion);
  CHECK(a.total_bpt() == b.total_bpt());
  const double rate_a = a.loss.item() - a.distortion;
  const double rate_b = b.loss.item() - b.distortion;
  CHECK(rate_a == doctest::Approx(0.01 * a.total_bpt()).epsilon(1e-4));
  CHECK(rate_b == doctest::Approx(2.0 * rate_a).epsilon(1e-4));
  // With lambda = 1 the loss is distortion plus bits per token.
  const RDLossTerms one = rd_loss(model, batch, 1.0);
  CHECK(one.loss.item() == doctest::Approx(one.distortion + one.total_bpt()).epsilon(1e-5));
  // Cross-entropy of an untrained model sits near log(vocab).
  CHECK(zero.distortion == doctest::Approx(std::log(32.0)).epsilon(0.2));

  CHECK_THROWS_AS(rd_loss(model, batch, -1.0), Error);
  TokenBatch broken = batch;
  broken.targets.pop_back();
  CHECK_THROWS_AS(rd_loss(model, broken, 0.1), Error);
}

TEST_CASE("the rd loss reaches every parameter group") {
  for (auto kind : kKinds) {
    CAPTURE(to_string(kind));
    const ModelConfig cfg = test::tiny_config(kind);
    CodecModel model(cfg);
    const TokenBatch batch = make_batch(cfg, 2, 2);
    rd_loss(model, batch, 0.05).loss.backward();
    std::map<std::string, double> group_norm;
    std::size_t dead = 0, total = 0;
    model.visit_parameters([&](const std::string& name, Tensor& p) {
      double n = 0.0;
      for (float g : std::as_const(p).grad()) n += double(g) * g;
      group_norm[name.substr(0, name.find('.'))] += n;
      ++total;
      if (n == 0.0) {
        MESSAGE("no gradient: " << name);
        ++dead;
      }
    });
    for (const auto& [group, n] : group_norm) {
      CAPTURE(group);
      CHECK(n > 0.0);
    }
    CHECK(dead == 0);
    CHECK(total > 10);
  }
}

TEST_CASE("lambda zero keeps the entropy models out of the graph") {
  const ModelConfig cfg = test::tiny_config();
  CodecModel model(cfg);
  rd_loss(model, make_batch(cfg, 1, 3), 0.0).loss.backward();
  model.visit_parameters([&](const std::string& name, Tensor& p) {
    if (name.rfind("hyper.", 0) == 0 || name.rfind("synthesis.", 0) == 0) {
      CAPTURE(name);
      CHECK_FALSE(p.has_grad());
    }
  });
}

TEST_CASE("gaussian tables") {
  const CdfTable t = gaussian_table(2.3f, 1.0f);
  CHECK(t.has_escape);
  CHECK(t.lo <= 2);
  CHECK(t.hi() >= 2);
  CHECK((t.lo + t.hi()) / 2 == 2);  // centered on round(mu)
  // Ideal cost of the center symbol tracks the exact interval probability.
  CHECK(t.cost_bits(2) == doctest::Approx(-std::log2(gaussian_interval_prob(2, 2.3, 1.0))).epsilon(1e-3));
  const CdfTable narrow = gaussian_table(0.0f, kSigmaMin);
  CHECK(narrow.alphabet() == 5);  // radius ceil(10 sigma + 1) = 2
  const CdfTable wide = gaussian_table(-5.0f, 1000.0f);
  CHECK(wide.alphabet() == 2 * kMaxTableRadius + 1);
  CHECK_THROWS_AS(gaussian_table(NAN, 1.0f), Error);
  CHECK_THROWS_AS(gaussian_table(0.0f, 0.0f), Error);
}

TEST_CASE("frame packets serialize to the documented layout") {
  FramePacket p;
  p.index = 300;
  p.w_chunk = {0xAA};
  p.y_chunk = {1, 2};
  const auto bytes = p.serialize();
  const std::vector<std::uint8_t> expected{'R', 'C', 'F', '1', 1, 0xAC, 0x02,
                                           1, 0xAA, 2, 1, 2};
  CHECK(bytes == expected);
  std::size_t pos = 0;
  CHECK(FramePacket::parse(bytes, pos) == p);
  CHECK(pos == bytes.size());

  auto truncated = bytes;
  truncated.pop_back();
  pos = 0;
  try {
    FramePacket::parse(truncated, pos);
    FAIL("truncated packet parsed");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("frame 300") != std::string::npos);
  }
  auto magic = bytes;
  magic[0] = 'X';
  pos = 0;
  CHECK_THROWS_AS(FramePacket::parse(magic, pos), Error);
  auto version = bytes;
  version[4] = 2;
  pos = 0;
  CHECK_THROWS_AS(FramePacket::parse(version, pos), Error);
}

TEST_CASE("bits per token") {
  FramePacket p;
  p.w_chunk.assign(10, 1);
  p.y_chunk.assign(15, 1);
  CHECK(measure_bpt(std::vector<FramePacket>{p}, 1) == 200.0);
  CHECK(measure_bpt(std::vector<FramePacket>{FramePacket{}}, 1) == 0.0);
  CHECK(measure_bpt(std::vector<FramePacket>{}, 0) == 0.0);
  SequenceStream s;
  s.length = 4;
  s.w_chunk.assign(3, 1);
  s.y_chunk.assign(5, 1);
  CHECK(measure_bpt(s) == 16.0);
}

TEST_CASE("decoding reproduces in-process split inference exactly") {
  for (auto kind : kKinds) {
    CAPTURE(to_string(kind));
    const ModelConfig cfg = test::tiny_config(kind);
    const CodecModel model(cfg);
    const auto tokens = test::random_tokens(cfg.seq_len, cfg.vocab, 4);
    const SplitResult ref = run_split_inference(model, tokens);
    const auto packets = encode_sequence(model, tokens);
    REQUIRE(packets.size() == cfg.seq_len);
    for (std::size_t t = 0; t < packets.size(); ++t) CHECK(packets[t].index == t);
    const DecodedSequence dec = decode_sequence(model, packets);
    CHECK(dec.y == ref.y);
    CHECK(dec.w == ref.w);
    CHECK(bitwise_equal(dec.logits, ref.logits));

    // Whole-sequence mode decodes to the same latents.
    const SequenceStream whole = encode_whole_sequence(model, tokens);
    const DecodedSequence dw = decode_whole_sequence(model, whole);
    CHECK(dw.y == ref.y);
    CHECK(bitwise_equal(dw.logits, ref.logits));

    // Coded size against the model estimate: 16-bit tables and termination
    // are the only sources of excess. An untrained model puts many symbols in
    // the far tails, where the estimate's 24-bit floor exceeds the escape
    // code, so only the upper side is bounded here.
    const double est = ref.estimated_w_bits + ref.estimated_y_bits;
    const double coded = measure_bpt(whole) * cfg.seq_len;
    CHECK(coded <= est * 1.02 + 2 * 64);

    SUBCASE("prefixes decode to prefixes") {
      for (std::size_t t = 1; t <= packets.size(); ++t) {
        const DecodedSequence part =
            decode_sequence(model, std::span(packets).first(t));
        CHECK(std::equal(part.y.symbols.begin(), part.y.symbols.end(),
                         ref.y.symbols.begin()));
        CHECK(part.y.rows == t);
        CHECK(bitwise_equal(part.logits, std::span<const float>(ref.logits).first(t * cfg.vocab)));
      }
    }
  }
}

TEST_CASE("decoder errors") {
  const ModelConfig cfg = test::tiny_config();
  const CodecModel model(cfg);
  const auto tokens = test::random_tokens(cfg.seq_len, cfg.vocab, 5);
  const auto packets = encode_sequence(model, tokens);

  const DecodedSequence empty = decode_sequence(model, {});
  CHECK(empty.y.symbols.empty());
  CHECK(empty.logits.empty());

  auto gap = packets;
  gap.erase(gap.begin() + 4);
  try {
    decode_sequence(model, gap);
    FAIL("gap not detected");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("frame 4") != std::string::npos);
  }

  auto extra = packets;
  extra[2].y_chunk.push_back(0);
  CHECK_THROWS_AS(decode_sequence(model, extra), Error);

  // More tokens than the model context, or ids outside the vocabulary.
  CHECK_THROWS_AS(encode_sequence(model, test::random_tokens(cfg.seq_len + 1, cfg.vocab, 6)), Error);
  CHECK_THROWS_AS(encode_sequence(model, std::vector<int>{0, 1, 99}), Error);
}

TEST_CASE("a single token yields a single packet") {
  const ModelConfig cfg = test::tiny_config();
  const CodecModel model(cfg);
  const std::vector<int> one{7};
  const auto packets = encode_sequence(model, one);
  CHECK(packets.size() == 1);
  CHECK(decode_sequence(model, packets).y == run_split_inference(model, one).y);
}

TEST_CASE("hashes identify configuration and weights") {
  const ModelConfig cfg = test::tiny_config();
  CodecModel a(cfg), b(cfg);
  CHECK(a.config_hash() == b.config_hash());
  CHECK(a.weights_hash() == b.weights_hash());
  b.visit_parameters([](const std::string& name, Tensor& p) {
    if (name == "backbone.head") p.mutable_values()[0] += 1e-3f;
  });
  CHECK(a.config_hash() == b.config_hash());
  CHECK(a.weights_hash() != b.weights_hash());
  ModelConfig other = cfg;
  other.split = 2;
  CHECK(CodecModel(other).config_hash() != a.config_hash());
}
