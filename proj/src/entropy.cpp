// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/entropy.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

namespace lmc {

namespace {

constexpr double kLn2 = std::numbers::ln2;

double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus_d(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

double floored_bits(double p) { return -std::log2(std::max(p, kProbFloor)); }

// d(bits)/dp with the floor applied.
double bits_slope(double p) { return p > kProbFloor ? -1.0 / (p * kLn2) : 0.0; }

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

void write_per_element(std::vector<float>* out, std::vector<float> bits) {
  if (out != nullptr) *out = std::move(bits);
}

}  // namespace

double standard_normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

// -- Factorized density ---------------------------------------------------------

FactorizedDensity::FactorizedDensity(std::size_t channels, double init_scale,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> bias_init(-0.5f, 0.5f);
  const double layer_scale =
      std::pow(init_scale, 1.0 / static_cast<double>(kLayers));
  layers_.resize(channels);
  for (auto& channel : layers_) {
    for (std::size_t l = 0; l < kLayers; ++l) {
      const std::size_t in = kWidths[l], out = kWidths[l + 1];
      const float m0 = static_cast<float>(std::log(
          std::expm1(1.0 / layer_scale / static_cast<double>(out))));
      Layer layer;
      layer.matrix = Tensor::full(in, out, m0, true);
      std::vector<float> bias(out);
      for (auto& b : bias) b = bias_init(rng);
      layer.bias = Tensor::from(std::move(bias), 1, out, true);
      if (l + 1 < kLayers) layer.gate = Tensor::zeros(1, out, true);
      channel.push_back(std::move(layer));
    }
  }
}

std::size_t FactorizedDensity::parameters_per_channel() {
  std::size_t total = 0;
  for (std::size_t l = 0; l < kLayers; ++l) {
    total += kWidths[l] * kWidths[l + 1] + kWidths[l + 1];
    if (l + 1 < kLayers) total += kWidths[l + 1];
  }
  return total;
}

Tensor FactorizedDensity::logits(std::size_t channel, const Tensor& x) const {
  if (channel >= layers_.size()) throw Error("FactorizedDensity: bad channel");
  if (x.cols() != 1) throw Error("FactorizedDensity::logits: x must be n x 1");
  Tensor h = x;
  const auto& layers = layers_[channel];
  for (std::size_t l = 0; l < kLayers; ++l) {
    h = add_row(matmul(h, softplus(layers[l].matrix)), layers[l].bias);
    if (l + 1 < kLayers)
      h = add(h, mul_row(lmc::tanh(h), lmc::tanh(layers[l].gate)));
  }
  return h;
}

double FactorizedDensity::logit(std::size_t channel, double x) const {
  if (channel >= layers_.size()) throw Error("FactorizedDensity: bad channel");
  std::array<double, 3> h{x, 0.0, 0.0};
  std::array<double, 3> next{};
  const auto& layers = layers_[channel];
  for (std::size_t l = 0; l < kLayers; ++l) {
    const std::size_t in = kWidths[l], out = kWidths[l + 1];
    const auto m = layers[l].matrix.values();
    const auto b = layers[l].bias.values();
    for (std::size_t j = 0; j < out; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += h[i] * softplus_d(m[i * out + j]);
      next[j] = acc + b[j];
    }
    if (l + 1 < kLayers) {
      const auto a = layers[l].gate.values();
      for (std::size_t j = 0; j < out; ++j)
        next[j] += std::tanh(static_cast<double>(a[j])) * std::tanh(next[j]);
    }
    h = next;
  }
  return h[0];
}

double FactorizedDensity::cdf(std::size_t channel, double x) const {
  return sigmoid_d(logit(channel, x));
}

double FactorizedDensity::interval_probability(std::size_t channel,
                                               std::int32_t symbol) const {
  const double lo = logit(channel, symbol - 0.5);
  const double hi = logit(channel, symbol + 0.5);
  // Work in the tail that is far from 1 to avoid cancellation.
  return lo + hi > 0.0 ? sigmoid_d(-lo) - sigmoid_d(-hi)
                       : sigmoid_d(hi) - sigmoid_d(lo);
}

Tensor FactorizedDensity::rate_bits(const Tensor& w,
                                    std::vector<float>* per_element) const {
  if (w.cols() != channels())
    throw Error("rate_w: tensor has " + std::to_string(w.cols()) +
                " channels, density has " + std::to_string(channels()));
  Tensor total;
  std::vector<float> all(w.size());
  for (std::size_t j = 0; j < channels(); ++j) {
    const Tensor column = slice_cols(w, j, 1);
    std::vector<float> bits;
    Tensor part = interval_bits_from_logits(logits(j, add_scalar(column, -0.5f)),
                                            logits(j, add_scalar(column, 0.5f)),
                                            &bits);
    for (std::size_t r = 0; r < w.rows(); ++r) all[r * w.cols() + j] = bits[r];
    total = total.defined() ? add(total, part) : part;
  }
  if (!total.defined()) total = Tensor::scalar(0.0f);
  write_per_element(per_element, std::move(all));
  return total;
}

void FactorizedDensity::visit_parameters(const ParameterVisitor& visit) {
  for (std::size_t c = 0; c < layers_.size(); ++c) {
    for (std::size_t l = 0; l < kLayers; ++l) {
      const std::string base =
          "c" + std::to_string(c) + ".l" + std::to_string(l) + ".";
      visit(base + "matrix", layers_[c][l].matrix);
      visit(base + "bias", layers_[c][l].bias);
      if (layers_[c][l].gate.defined()) visit(base + "gate", layers_[c][l].gate);
    }
  }
}

double factorized_cdf(const FactorizedDensity& density, std::size_t channel,
                      double x) {
  return density.cdf(channel, x);
}

Tensor interval_bits_from_logits(const Tensor& lower, const Tensor& upper,
                                 std::vector<float>* per_element) {
  if (lower.rows() != upper.rows() || lower.cols() != upper.cols())
    throw Error("interval_bits_from_logits: shape mismatch");
  const std::size_t n = lower.size();
  std::vector<float> bits(n);
  auto slope = std::make_shared<std::vector<double>>(n);  // d bits / d p
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double l = lower.values()[i], u = upper.values()[i];
    const double p =
        l + u > 0.0 ? sigmoid_d(-l) - sigmoid_d(-u) : sigmoid_d(u) - sigmoid_d(l);
    bits[i] = static_cast<float>(floored_bits(p));
    (*slope)[i] = bits_slope(p);
    total += bits[i];
  }
  if (per_element != nullptr) *per_element = bits;
  return make_result(1, 1, {static_cast<float>(total)}, {lower, upper},
                     [slope](detail::Node& self) {
                       auto& ln = *self.parents[0];
                       auto& un = *self.parents[1];
                       const double up = self.grad[0];
                       for (std::size_t i = 0; i < slope->size(); ++i) {
                         const double sl = sigmoid_d(ln.value[i]);
                         const double su = sigmoid_d(un.value[i]);
                         const double g = up * (*slope)[i];
                         if (ln.requires_grad)
                           ln.ensure_grad()[i] +=
                               static_cast<float>(-g * sl * (1.0 - sl));
                         if (un.requires_grad)
                           un.ensure_grad()[i] +=
                               static_cast<float>(g * su * (1.0 - su));
                       }
                     });
}

// -- Fourier density --------------------------------------------------------------

namespace {

using cd = std::complex<double>;

struct FourierChannel {
  std::vector<cd> c;  // coefficients
  std::vector<cd> r;  // autocorrelation r_m = sum_k c_k conj(c_{k-m}), m >= 0
  double z = 0.0;     // normalization 2 * r_0

  FourierChannel(std::span<const float> interleaved) {
    const std::size_t k = interleaved.size() / 2;
    c.resize(k);
    for (std::size_t i = 0; i < k; ++i)
      c[i] = cd(interleaved[2 * i], interleaved[2 * i + 1]);
    r.assign(k, cd(0.0, 0.0));
    for (std::size_t m = 0; m < k; ++m)
      for (std::size_t i = m; i < k; ++i) r[m] += c[i] * std::conj(c[i - m]);
    z = 2.0 * r[0].real();
    if (!(z > 0.0)) throw Error("FourierDensity: all coefficients are zero");
  }

  // Antiderivative from -1 to u, unnormalized. Fills G_m(u) when asked.
  double antiderivative(double u, std::vector<cd>* g = nullptr) const {
    double f = r[0].real() * (u + 1.0);
    if (g != nullptr) g->assign(r.size(), cd(u + 1.0, 0.0));
    const cd step = std::polar(1.0, std::numbers::pi * u);
    cd e = step;
    for (std::size_t m = 1; m < r.size(); ++m) {
      const double sign = (m % 2 == 0) ? 1.0 : -1.0;
      const cd gm = (e - sign) / cd(0.0, std::numbers::pi * m);
      f += 2.0 * (r[m] * gm).real();
      if (g != nullptr) (*g)[m] = gm;
      e *= step;
    }
    return f;
  }

  // Unnormalized |sum_k c_k e^{i pi k u}|^2.
  double density(double u) const {
    double d = r[0].real();
    const cd step = std::polar(1.0, std::numbers::pi * u);
    cd e = step;
    for (std::size_t m = 1; m < r.size(); ++m) {
      d += 2.0 * (r[m] * e).real();
      e *= step;
    }
    return d;
  }
};

}  // namespace

FourierDensity::FourierDensity(std::size_t channels, std::uint64_t seed,
                               float init_scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.01f);
  std::vector<float> coeffs(channels * 2 * kCoefficients);
  for (std::size_t j = 0; j < channels; ++j) {
    float* c = coeffs.data() + j * 2 * kCoefficients;
    for (std::size_t i = 0; i < 2 * kCoefficients; ++i) c[i] = noise(rng);
    c[0] += 1.0f;
  }
  coefficients_ =
      Tensor::from(std::move(coeffs), channels, 2 * kCoefficients, true);
  log_scale_ = Tensor::full(1, channels, std::log(init_scale), true);
  offset_ = Tensor::zeros(1, channels, true);
}

void FourierDensity::check_channel(std::size_t channel) const {
  if (channel >= channels()) throw Error("FourierDensity: bad channel");
}

double FourierDensity::scale(std::size_t channel) const {
  check_channel(channel);
  return std::exp(static_cast<double>(log_scale_.values()[channel]));
}

namespace {
std::span<const float> channel_coeffs(const Tensor& coeffs, std::size_t j) {
  return coeffs.values().subspan(j * coeffs.cols(), coeffs.cols());
}
}  // namespace

double FourierDensity::cdf(std::size_t channel, double y) const {
  check_channel(channel);
  const FourierChannel ch(channel_coeffs(coefficients_, channel));
  const double u =
      std::tanh((y - offset_.values()[channel]) / scale(channel));
  return std::clamp(ch.antiderivative(u) / ch.z, 0.0, 1.0);
}

double FourierDensity::pdf_u(std::size_t channel, double u) const {
  check_channel(channel);
  const FourierChannel ch(channel_coeffs(coefficients_, channel));
  return ch.density(u) / ch.z;
}

double FourierDensity::pdf(std::size_t channel, double y) const {
  const double s = scale(channel);
  const double u = std::tanh((y - offset_.values()[channel]) / s);
  return pdf_u(channel, u) * (1.0 - u * u) / s;
}

double FourierDensity::interval_probability(std::size_t channel,
                                            std::int32_t symbol) const {
  check_channel(channel);
  const FourierChannel ch(channel_coeffs(coefficients_, channel));
  const double s = scale(channel), off = offset_.values()[channel];
  const double hi = ch.antiderivative(std::tanh((symbol + 0.5 - off) / s));
  const double lo = ch.antiderivative(std::tanh((symbol - 0.5 - off) / s));
  return std::max(0.0, (hi - lo) / ch.z);
}

Tensor FourierDensity::rate_bits(const Tensor& w,
                                 std::vector<float>* per_element) const {
  if (w.cols() != channels())
    throw Error("rate_w_fourier: tensor has " + std::to_string(w.cols()) +
                " channels, density has " + std::to_string(channels()));
  const std::size_t rows = w.rows(), channels_n = channels();
  std::vector<FourierChannel> chans;
  chans.reserve(channels_n);
  for (std::size_t j = 0; j < channels_n; ++j)
    chans.emplace_back(channel_coeffs(coefficients_, j));

  std::vector<float> bits(w.size());
  auto probs = std::make_shared<std::vector<double>>(w.size());
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < channels_n; ++j) {
      const double s = std::exp(static_cast<double>(log_scale_.values()[j]));
      const double off = offset_.values()[j];
      const double x = w.values()[i * channels_n + j];
      const double hi = chans[j].antiderivative(std::tanh((x + 0.5 - off) / s));
      const double lo = chans[j].antiderivative(std::tanh((x - 0.5 - off) / s));
      const double p = (hi - lo) / chans[j].z;
      (*probs)[i * channels_n + j] = p;
      bits[i * channels_n + j] = static_cast<float>(floored_bits(p));
      total += bits[i * channels_n + j];
    }
  }
  if (per_element != nullptr) *per_element = bits;

  return make_result(
      1, 1, {static_cast<float>(total)},
      {w, coefficients_, log_scale_, offset_},
      [probs, rows, channels_n](detail::Node& self) {
        auto& wn = *self.parents[0];
        auto& cn = *self.parents[1];
        auto& sn = *self.parents[2];
        auto& on = *self.parents[3];
        const double up = self.grad[0];
        const std::size_t k = cn.cols / 2;
        std::vector<cd> g;
        for (std::size_t j = 0; j < channels_n; ++j) {
          const FourierChannel ch(
              std::span<const float>(cn.value).subspan(j * cn.cols, cn.cols));
          const double s = std::exp(static_cast<double>(sn.value[j]));
          const double off = on.value[j];
          std::vector<cd> grad_r(k, cd(0.0, 0.0));
          double grad_offset = 0.0, grad_log_scale = 0.0;
          for (std::size_t i = 0; i < rows; ++i) {
            const double p = (*probs)[i * channels_n + j];
            const double coef = up * bits_slope(p);
            if (coef == 0.0) continue;
            const double x = wn.value[i * channels_n + j];
            double grad_x = 0.0;
            for (int side = 0; side < 2; ++side) {
              // d bits / d cdf(endpoint): +coef at the upper end, -coef below.
              const double dc = side == 0 ? coef : -coef;
              const double t = (x + (side == 0 ? 0.5 : -0.5) - off) / s;
              const double u = std::tanh(t);
              const double f = ch.antiderivative(u, &g);
              const double cdf = f / ch.z;
              grad_r[0] += cd(dc * ((u + 1.0) - 2.0 * cdf) / ch.z, 0.0);
              for (std::size_t m = 1; m < k; ++m)
                grad_r[m] += dc * 2.0 * std::conj(g[m]) / ch.z;
              const double dt = dc * ch.density(u) / ch.z * (1.0 - u * u);
              grad_x += dt / s;
              grad_offset -= dt / s;
              grad_log_scale -= dt * t;
            }
            if (wn.requires_grad)
              wn.ensure_grad()[i * channels_n + j] +=
                  static_cast<float>(grad_x);
          }
          if (on.requires_grad)
            on.ensure_grad()[j] += static_cast<float>(grad_offset);
          if (sn.requires_grad)
            sn.ensure_grad()[j] += static_cast<float>(grad_log_scale);
          if (cn.requires_grad) {
            auto gc = cn.ensure_grad();
            grad_r[0] = cd(grad_r[0].real(), 0.0);
            for (std::size_t nidx = 0; nidx < k; ++nidx) {
              cd acc(0.0, 0.0);
              for (std::size_t m = 0; m <= nidx; ++m)
                acc += grad_r[m] * ch.c[nidx - m];
              for (std::size_t m = 0; m + nidx < k; ++m)
                acc += std::conj(grad_r[m]) * ch.c[nidx + m];
              gc[j * cn.cols + 2 * nidx] += static_cast<float>(acc.real());
              gc[j * cn.cols + 2 * nidx + 1] += static_cast<float>(acc.imag());
            }
          }
        }
      });
}

void FourierDensity::visit_parameters(const ParameterVisitor& visit) {
  visit("coefficients", coefficients_);
  visit("log_scale", log_scale_);
  visit("offset", offset_);
}

double fourier_cdf(const FourierDensity& density, std::size_t channel,
                   double y) {
  return density.cdf(channel, y);
}

Tensor rate_w(const Tensor& w, const HyperDensity& density,
              std::vector<float>* per_element) {
  return density.rate_bits(w, per_element);
}

Tensor rate_w(const QuantizedLatent& w, const HyperDensity& density,
              std::vector<float>* per_element) {
  return density.rate_bits(w.to_tensor(), per_element);
}

Tensor rate_w_fourier(const Tensor& w, const FourierDensity& density,
                      std::vector<float>* per_element) {
  return density.rate_bits(w, per_element);
}

// -- Gaussian conditional -----------------------------------------------------------

double gaussian_interval_prob(double y, double mu, double sigma) {
  const double d = y - mu;
  const double a = (std::abs(d) + 0.5) / sigma;
  const double b = (std::abs(d) - 0.5) / sigma;
  // Upper-tail form: Q(b) - Q(a) with Q(z) = Phi(-z).
  const double p = standard_normal_cdf(-b) - standard_normal_cdf(-a);
  return std::max(p, kProbFloor);
}

Tensor rate_y(const Tensor& y, const Tensor& mu, const Tensor& sigma,
              std::vector<float>* per_element) {
  if (y.rows() != mu.rows() || y.cols() != mu.cols() ||
      y.rows() != sigma.rows() || y.cols() != sigma.cols())
    throw Error("rate_y: shape mismatch between y, mu and sigma");
  const std::size_t n = y.size();
  std::vector<float> bits(n);
  auto raw = std::make_shared<std::vector<double>>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = sigma.values()[i];
    if (!(s > 0.0)) throw Error("rate_y: non-positive sigma");
    const double d = static_cast<double>(y.values()[i]) - mu.values()[i];
    const double a = (std::abs(d) + 0.5) / s, b = (std::abs(d) - 0.5) / s;
    const double p = standard_normal_cdf(-b) - standard_normal_cdf(-a);
    (*raw)[i] = p;
    bits[i] = static_cast<float>(floored_bits(p));
    total += bits[i];
  }
  if (per_element != nullptr) *per_element = bits;
  return make_result(
      1, 1, {static_cast<float>(total)}, {y, mu, sigma},
      [raw](detail::Node& self) {
        auto& yn = *self.parents[0];
        auto& mn = *self.parents[1];
        auto& sn = *self.parents[2];
        const double up = self.grad[0];
        for (std::size_t i = 0; i < raw->size(); ++i) {
          const double g = up * bits_slope((*raw)[i]);
          if (g == 0.0) continue;
          const double s = sn.value[i];
          const double d = static_cast<double>(yn.value[i]) - mn.value[i];
          const double a = (d + 0.5) / s, b = (d - 0.5) / s;
          const double pa = normal_pdf(a), pb = normal_pdf(b);
          const double dp_dy = (pa - pb) / s;
          const double dp_ds = (-a * pa + b * pb) / s;
          if (yn.requires_grad)
            yn.ensure_grad()[i] += static_cast<float>(g * dp_dy);
          if (mn.requires_grad)
            mn.ensure_grad()[i] += static_cast<float>(-g * dp_dy);
          if (sn.requires_grad)
            sn.ensure_grad()[i] += static_cast<float>(g * dp_ds);
        }
      });
}

}  // namespace lmc
