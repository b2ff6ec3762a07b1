// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Randomized properties that cut across modules.

#include <cmath>
#include <random>

#include "doctest.h"
#include "lmc/analysis.hpp"
#include "lmc/checkpoint.hpp"
#include "lmc/codec.hpp"
#include "lmc/quantize.hpp"
#include "lmc/range_coder.hpp"
#include "test_support.hpp"

using namespace lmc;

TEST_CASE("rounding commutes with even integer shifts and stays within half a step") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1000.0f, 1000.0f);
  for (int i = 0; i < 20000; ++i) {
    const float x = u(rng);
    const float r = round_half_even(x);
    // Even shifts only: an odd shift flips the parity of a tie.
    const auto k = static_cast<float>(2 * (static_cast<int>(rng() % 100) - 50));
    REQUIRE(round_half_even(r) == r);
    REQUIRE(std::abs(r - x) <= 0.5f);
    // Exact when x + k is representable, which holds at this magnitude for
    // values on a 1/64 grid.
    const float g = std::round(x * 64.0f) / 64.0f;
    REQUIRE(round_half_even(g + k) == round_half_even(g) + k);
  }
}

TEST_CASE("gaussian tables are valid and cost is non-negative") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> mu(-50.0f, 50.0f), logs(-5.0f, 7.0f);
  for (int i = 0; i < 3000; ++i) {
    const float m = mu(rng), s = std::max(kSigmaMin, std::exp(logs(rng)));
    const CdfTable t = gaussian_table(m, s);
    REQUIRE(t.cumulative.front() == 0);
    REQUIRE(t.cumulative.back() == kCdfTotal);
    for (std::size_t k = 0; k + 1 < t.cumulative.size(); ++k)
      REQUIRE(t.cumulative[k] < t.cumulative[k + 1]);
    const auto sym = static_cast<std::int32_t>(std::lround(m)) +
                     static_cast<std::int32_t>(rng() % 21) - 10;
    REQUIRE(t.cost_bits(sym) > 0.0);
  }
}

TEST_CASE("varints round-trip arbitrary values") {
  std::mt19937_64 rng(3);
  std::vector<std::uint8_t> buf;
  std::vector<std::uint64_t> vals;
  for (int i = 0; i < 5000; ++i) {
    const std::uint64_t v = rng() >> (rng() % 64);
    vals.push_back(v);
    put_varint(buf, v);
  }
  std::size_t pos = 0;
  for (auto v : vals) REQUIRE(get_varint(buf, pos) == v);
  CHECK(pos == buf.size());
}

TEST_CASE("coding round-trips for random models, lengths and sequences") {
  std::mt19937_64 rng(4);
  const EntropyModelKind kinds[] = {EntropyModelKind::kProposed, EntropyModelKind::kFourier,
                                    EntropyModelKind::kDirectAccess};
  for (int trial = 0; trial < 24; ++trial) {
    ModelConfig cfg = test::tiny_config(kinds[trial % 3], 4 + rng() % 12);
    cfg.seed = rng();
    cfg.split = 1 + rng() % (cfg.layers - 1);
    const CodecModel model(cfg);
    const auto tokens = test::random_tokens(1 + rng() % cfg.seq_len, cfg.vocab, rng());
    CAPTURE(trial);
    const SplitResult ref = run_split_inference(model, tokens);
    const DecodedSequence framed = decode_sequence(model, encode_sequence(model, tokens));
    const DecodedSequence whole =
        decode_whole_sequence(model, encode_whole_sequence(model, tokens));
    REQUIRE(framed.y == ref.y);
    REQUIRE(whole.y == ref.y);
    REQUIRE(test::bitwise_equal(framed.logits, ref.logits));
    REQUIRE(test::bitwise_equal(whole.logits, ref.logits));
  }
}

TEST_CASE("checkpoints round-trip for random seeds") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 6; ++trial) {
    ModelConfig cfg = test::tiny_config();
    cfg.seed = rng();
    CodecModel m(cfg);
    const auto bytes = serialize_checkpoint(m, {});
    REQUIRE(parse_checkpoint(bytes).model->weights_hash() == m.weights_hash());
  }
}

TEST_CASE("pearson is invariant under positive affine maps") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(3 + rng() % 20), y(x.size()), y2(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = g(rng);
      y[i] = 0.5 * x[i] + g(rng);
    }
    const double a = 0.1 + std::abs(g(rng)) * 10, b = g(rng) * 100;
    for (std::size_t i = 0; i < y.size(); ++i) y2[i] = a * y[i] + b;
    const double r = pearson(x, y);
    REQUIRE(std::abs(r) <= 1.0 + 1e-12);
    REQUIRE(pearson(x, y2) == doctest::Approx(r).epsilon(1e-9));
    REQUIRE(pearson(y, x) == doctest::Approx(r).epsilon(1e-12));
  }
}

TEST_CASE("bd-rate of a uniformly scaled curve is the scale") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.2, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RdPoint> ref;
    double rate = 50.0 + 100.0 * u(rng), q = -30.0;
    for (int i = 0; i < 4 + static_cast<int>(rng() % 4); ++i) {
      ref.push_back({rate, q});
      rate *= 1.1 + u(rng);
      q += 0.5 + u(rng);
    }
    const double k = u(rng);
    std::vector<RdPoint> test = ref;
    for (auto& p : test) p.rate *= k;
    REQUIRE(bd_rate(ref, test) == doctest::Approx((k - 1.0) * 100.0).epsilon(1e-6));
  }
}
