// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>

#include "doctest.h"
#include "lmc/entropy.hpp"
#include "test_support.hpp"

using namespace lmc;

namespace {

void randomize(HyperDensity& d, std::uint64_t seed, float stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, stddev);
  d.visit_parameters([&](const std::string&, Tensor& t) {
    for (auto& v : t.mutable_values()) v += n(rng);
  });
}

// Independent double-precision evaluation of the monotone MLP from its raw
// parameters, read back through the visitor by name.
struct MlpOracle {
  std::map<std::string, std::vector<double>> p;
  explicit MlpOracle(FactorizedDensity& d) {
    d.visit_parameters([&](const std::string& name, Tensor& t) {
      p[name] = std::vector<double>(t.values().begin(), t.values().end());
    });
  }
  double cdf(std::size_t c, double x) const {
    const auto& w = FactorizedDensity::kWidths;
    std::vector<double> h{x};
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      const std::string base = "c" + std::to_string(c) + ".l" + std::to_string(l) + ".";
      const auto& m = p.at(base + "matrix");
      const auto& b = p.at(base + "bias");
      std::vector<double> next(w[l + 1]);
      for (std::size_t j = 0; j < w[l + 1]; ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < w[l]; ++i)
          acc += h[i] * std::log1p(std::exp(m[i * w[l + 1] + j]));
        next[j] = acc;
      }
      if (l + 2 < w.size()) {
        const auto& a = p.at(base + "gate");
        for (std::size_t j = 0; j < next.size(); ++j)
          next[j] += std::tanh(a[j]) * std::tanh(next[j]);
      }
      h = next;
    }
    return 1.0 / (1.0 + std::exp(-h[0]));
  }
};

void set_single_coefficient(FourierDensity& d, std::size_t channel, float c0,
                            float scale, float offset) {
  auto c = d.coefficients().mutable_values();
  const std::size_t w = d.coefficients().cols();
  for (std::size_t i = 0; i < w; ++i) c[channel * w + i] = 0.0f;
  c[channel * w] = c0;
  d.log_scale().mutable_values()[channel] = std::log(scale);
  d.offset().mutable_values()[channel] = offset;
}

}  // namespace

// -- factorized -----------------------------------------------------------------

TEST_CASE("factorized density has 118 parameters per channel") {
  CHECK(FactorizedDensity::parameters_per_channel() == 118);
  FactorizedDensity d(3);
  std::size_t total = 0;
  d.visit_parameters([&](const std::string&, Tensor& t) { total += t.size(); });
  CHECK(total == 3 * 118);
}

TEST_CASE("factorized CDF tails, bounds and monotonicity") {
  FactorizedDensity d(2, 10.0, 3);
  randomize(d, 4, 0.5f);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(factorized_cdf(d, c, -1e6) < 1e-4);
    CHECK(factorized_cdf(d, c, 1e6) > 1 - 1e-4);
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-60.0, 60.0);
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const std::size_t c = i % 2;
    const double fa = d.cdf(c, a), fb = d.cdf(c, b);
    if (!(fa <= fb) || fa < 0 || fb > 1) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("factorized CDF matches an independent MLP evaluation") {
  FactorizedDensity d(2, 10.0, 8);
  randomize(d, 9, 0.7f);
  const MlpOracle oracle(d);
  for (double x : {-7.5, -0.5, 0.0, 0.5, 3.25, 20.0})
    for (std::size_t c = 0; c < 2; ++c)
      CHECK(d.cdf(c, x) == doctest::Approx(oracle.cdf(c, x)).epsilon(1e-9));
}

TEST_CASE("rate_w on a zero tensor matches the direct oracle") {
  FactorizedDensity d(3, 10.0, 11);
  randomize(d, 12, 0.5f);
  const MlpOracle oracle(d);
  const std::size_t rows = 5;
  double expected = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double p = oracle.cdf(c, 0.5) - oracle.cdf(c, -0.5);
    expected += -std::log2(std::max(p, kProbFloor)) * rows;
  }
  std::vector<float> per;
  const Tensor bits = rate_w(Tensor::zeros(rows, 3), d, &per);
  CHECK(bits.item() == doctest::Approx(expected).epsilon(1e-5));
  CHECK(per.size() == rows * 3);
  QuantizedLatent q{rows, 3, std::vector<std::int32_t>(rows * 3, 0), 1};
  CHECK(rate_w(q, d).item() == doctest::Approx(expected).epsilon(1e-5));
}

TEST_CASE("interval bits from logits: fixed probabilities") {
  // sigmoid(0) = 1/2 and sigmoid(log(5/3)) = 5/8, so every interval has 1/8.
  const float hi = static_cast<float>(std::log(5.0 / 3.0));
  std::vector<float> per;
  const Tensor b = interval_bits_from_logits(Tensor::zeros(2, 2),
                                             Tensor::full(2, 2, hi), &per);
  CHECK(b.item() == doctest::Approx(12.0).epsilon(1e-5));
  for (float v : per) CHECK(v == doctest::Approx(3.0).epsilon(1e-5));
  // Whole mass inside the interval.
  CHECK(interval_bits_from_logits(Tensor::full(2, 2, -200.0f),
                                  Tensor::full(2, 2, 200.0f))
            .item() == doctest::Approx(0.0));
  // Empty interval hits the floor: 24 bits each.
  CHECK(interval_bits_from_logits(Tensor::full(1, 3, 1.0f), Tensor::full(1, 3, 1.0f))
            .item() == doctest::Approx(72.0));
}

TEST_CASE("rate_w is finite and non-negative for extreme symbols") {
  FactorizedDensity d(2);
  std::vector<float> v{0, 1, -3, 7, 1000, -100000};
  const Tensor bits = rate_w(Tensor::from(v, 3, 2), d);
  CHECK(std::isfinite(bits.item()));
  CHECK(bits.item() >= 0.0f);
  CHECK(bits.item() <= 6 * 24.0f + 1e-3f);
  CHECK_THROWS_AS(rate_w(Tensor::zeros(2, 3), d), Error);
}

TEST_CASE("rate_w gradients in the density parameters") {
  FactorizedDensity d(2, 10.0, 14);
  randomize(d, 15, 0.1f);
  const Tensor w = Tensor::from({0, 1, -1, 2, 3, 0, -2, 1}, 4, 2);
  d.visit_parameters([&](const std::string& name, Tensor& t) {
    CAPTURE(name);
    const double err = test::param_grad_rel_error(
        t, [&] { return rate_w(w, d); }, 1e-2, 24);
    CHECK(err < 1e-3);
  });
}

// -- gaussian -------------------------------------------------------------------

TEST_CASE("gaussian interval probability") {
  const double oracle = standard_normal_cdf(0.5) - standard_normal_cdf(-0.5);
  CHECK(oracle == doctest::Approx(0.38292).epsilon(1e-4));
  CHECK(gaussian_interval_prob(0, 0, 1) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(-std::log2(gaussian_interval_prob(0, 0, 1)) == doctest::Approx(1.385).epsilon(1e-3));
  CHECK(gaussian_interval_prob(0, 0, 1e-4) == doctest::Approx(1.0));
  CHECK(gaussian_interval_prob(50, 0, 1) == kProbFloor);
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> mu(-5, 5), sg(0.01, 8);
  for (int i = 0; i < 200; ++i) {
    const double m = mu(rng), s = sg(rng);
    const int y = static_cast<int>(i % 11) - 5;
    CHECK(gaussian_interval_prob(y, m, s) ==
          doctest::Approx(gaussian_interval_prob(-y, -m, s)).epsilon(1e-12));
    const double direct = standard_normal_cdf((y + 0.5 - m) / s) -
                          standard_normal_cdf((y - 0.5 - m) / s);
    CHECK(gaussian_interval_prob(y, m, s) ==
          doctest::Approx(std::max(direct, kProbFloor)).epsilon(1e-7));
  }
}

TEST_CASE("rate_y sums per-element bits") {
  const Tensor z = Tensor::zeros(2, 2);
  CHECK(rate_y(z, z, Tensor::full(2, 2, 1.0f)).item() ==
        doctest::Approx(4 * -std::log2(0.382924922548026)).epsilon(1e-6));
  CHECK(rate_y(z, z, Tensor::full(2, 2, 1.0f)).item() == doctest::Approx(5.54).epsilon(1e-3));
  const Tensor mu = Tensor::from({0.2f, -2.9f, 4.4f}, 1, 3);
  const Tensor y = Tensor::from({0.0f, -3.0f, 4.0f}, 1, 3);
  CHECK(rate_y(y, mu, Tensor::full(1, 3, 1e-4f)).item() == doctest::Approx(0.0));
  CHECK_THROWS_AS(rate_y(y, z, z), Error);
}

TEST_CASE("rate_y gradients in mu and sigma") {
  const Tensor y = Tensor::from({0, 1, -2, 3, 0, -1}, 2, 3);
  const Tensor mu = test::random_tensor(2, 3, 17);
  const Tensor sigma = Tensor::from({0.7f, 1.3f, 2.0f, 0.4f, 3.1f, 0.9f}, 2, 3);
  const auto rm = grad_check([&](const Tensor& m) { return rate_y(y, m, sigma); }, mu);
  CAPTURE(rm.max_rel_error);
  CHECK(rm.passed);
  const auto rs = grad_check([&](const Tensor& s) { return rate_y(y, mu, s); }, sigma);
  CAPTURE(rs.max_rel_error);
  CHECK(rs.passed);
  // Stationary point of the symmetric interval.
  Tensor m0 = Tensor::zeros(1, 1, true);
  rate_y(Tensor::zeros(1, 1), m0, Tensor::full(1, 1, 1.0f)).backward();
  CHECK(std::abs(m0.grad()[0]) < 1e-6);
}

// -- fourier --------------------------------------------------------------------

TEST_CASE("fourier density with only c0 is uniform in u") {
  FourierDensity d(1);
  set_single_coefficient(d, 0, 0.8f, 2.0f, 1.5f);
  CHECK(fourier_cdf(d, 0, 1.5) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(fourier_cdf(d, 0, -1e6) == doctest::Approx(0.0));
  CHECK(fourier_cdf(d, 0, 1e6) == doctest::Approx(1.0));
  for (double u : {-0.9, -0.3, 0.0, 0.6}) CHECK(d.pdf_u(0, u) == doctest::Approx(0.5));
  // cdf(y) = (1 + tanh((y - offset) / scale)) / 2 in closed form.
  for (double y : {-3.0, 0.0, 2.0, 7.0})
    CHECK(d.cdf(0, y) == doctest::Approx(0.5 * (1 + std::tanh((y - 1.5) / 2.0))));
}

TEST_CASE("fourier rate on the uniform case") {
  // P(0) = tanh(0.5 / s); s = 0.5 / atanh(1/2) makes it exactly 1/2.
  FourierDensity d(2);
  const float s = static_cast<float>(0.5 / std::atanh(0.5));
  set_single_coefficient(d, 0, 1.0f, s, 0.0f);
  set_single_coefficient(d, 1, 1.0f, s, 0.0f);
  std::vector<float> per;
  const Tensor bits = rate_w_fourier(Tensor::zeros(3, 2), d, &per);
  CHECK(bits.item() == doctest::Approx(6.0).epsilon(1e-5));
  CHECK(d.interval_probability(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
  // Interval probability from quadrature of the density.
  const double q = test::integrate([&](double y) { return d.pdf(0, y); }, 0.5, 1.5);
  CHECK(d.interval_probability(0, 1) == doctest::Approx(q).epsilon(1e-7));
  // A narrow density puts all its mass on symbol 0; far symbols are floored.
  set_single_coefficient(d, 1, 1.0f, 1e-3f, 0.0f);
  CHECK(rate_w_fourier(Tensor::from({0.0f}, 1, 1), [&] {
          FourierDensity one(1);
          set_single_coefficient(one, 0, 1.0f, 1e-3f, 0.0f);
          return one;
        }()).item() == doctest::Approx(0.0));
  const Tensor far = Tensor::from({0.0f, 40.0f}, 1, 2);
  CHECK(rate_w_fourier(far, d).item() ==
        doctest::Approx(-std::log2(0.5) + 24.0).epsilon(1e-5));
}

TEST_CASE("random fourier densities integrate to one and stay non-negative") {
  std::mt19937_64 rng(18);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::uniform_real_distribution<float> sc(0.5f, 5.0f), off(-3.0f, 3.0f);
  double worst = 0.0, min_pdf = 1.0;
  int monotone_violations = 0;
  for (int set = 0; set < 100; ++set) {
    FourierDensity d(1);
    for (auto& v : d.coefficients().mutable_values()) v = n(rng);
    d.log_scale().mutable_values()[0] = std::log(sc(rng));
    d.offset().mutable_values()[0] = off(rng);
    const double total = test::integrate([&](double y) { return d.pdf(0, y); }, -50, 50);
    worst = std::max(worst, std::abs(total - 1.0));
    for (int i = 0; i < 10000; ++i)
      min_pdf = std::min(min_pdf, d.pdf_u(0, -1.0 + (2.0 * i + 1.0) / 10000.0));
    if (set < 10) {
      double prev = 0.0;
      for (int i = 0; i < 1000; ++i) {
        const double c = d.cdf(0, -60.0 + 0.12 * i);
        if (c < prev - 1e-12 || c < 0 || c > 1) ++monotone_violations;
        prev = c;
      }
    }
  }
  CAPTURE(worst);
  CHECK(worst < 1e-3);
  CHECK(min_pdf >= -1e-6);
  CHECK(monotone_violations == 0);
}

TEST_CASE("all-zero fourier coefficients are rejected") {
  FourierDensity d(1);
  for (auto& v : d.coefficients().mutable_values()) v = 0.0f;
  CHECK_THROWS_AS(d.cdf(0, 0.0), Error);
  CHECK_THROWS_AS(rate_w_fourier(Tensor::zeros(1, 1), d), Error);
}

TEST_CASE("fourier rate gradients in coefficients, scale and offset") {
  FourierDensity d(2, 19);
  randomize(d, 20, 0.2f);
  const Tensor w = Tensor::from({0, 1, -1, 2, 3, 0}, 3, 2);
  d.visit_parameters([&](const std::string& name, Tensor& t) {
    CAPTURE(name);
    const double err = test::param_grad_rel_error(
        t, [&] { return rate_w_fourier(w, d); }, 1e-2, 24);
    CHECK(err < 1e-3);
  });
}
