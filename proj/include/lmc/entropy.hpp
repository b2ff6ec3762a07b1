// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Entropy models: the deep factorized hyper-prior density, the Fourier-series
// baseline density, and the conditional Gaussian for the target latent. Rates
// are in bits and every interval probability is floored at 2^-24.

#ifndef LMC_ENTROPY_HPP_
#define LMC_ENTROPY_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lmc/quantize.hpp"
#include "lmc/tensor.hpp"

namespace lmc {

inline constexpr double kProbFloor = 1.0 / 16777216.0;  // 2^-24
inline constexpr float kSigmaMin = 0.01f;

using ParameterVisitor = std::function<void(const std::string&, Tensor&)>;

// Zero-context density over the hyper-prior channels.
class HyperDensity {
 public:
  virtual ~HyperDensity() = default;
  virtual std::size_t channels() const = 0;
  // Total bits of the integer-valued tensor w [rows x channels]; differentiable
  // in the density parameters and in w. Optionally writes per-element bits.
  virtual Tensor rate_bits(const Tensor& w,
                           std::vector<float>* per_element = nullptr) const = 0;
  // P(symbol - 1/2 < x <= symbol + 1/2), evaluated in double, not floored.
  virtual double interval_probability(std::size_t channel,
                                      std::int32_t symbol) const = 0;
  virtual double cdf(std::size_t channel, double x) const = 0;
  virtual void visit_parameters(const ParameterVisitor& visit) = 0;
};

// Per-channel monotone MLP with widths 1-3-3-3-3-3-3-3-3-1. Matrices pass
// through softplus, hidden layers use the gate x + tanh(a) * tanh(x), and the
// final logit goes through a sigmoid. 69 + 25 + 24 = 118 parameters/channel.
class FactorizedDensity final : public HyperDensity {
 public:
  static constexpr std::array<std::size_t, 10> kWidths{1, 3, 3, 3, 3,
                                                       3, 3, 3, 3, 1};
  static constexpr std::size_t kLayers = kWidths.size() - 1;

  FactorizedDensity() = default;
  explicit FactorizedDensity(std::size_t channels, double init_scale = 10.0,
                             std::uint64_t seed = 1);

  std::size_t channels() const override { return layers_.size(); }
  static std::size_t parameters_per_channel();

  // Differentiable logit of the CDF for column tensor x [n x 1].
  Tensor logits(std::size_t channel, const Tensor& x) const;
  double logit(std::size_t channel, double x) const;
  double cdf(std::size_t channel, double x) const override;

  Tensor rate_bits(const Tensor& w,
                   std::vector<float>* per_element = nullptr) const override;
  double interval_probability(std::size_t channel,
                              std::int32_t symbol) const override;
  void visit_parameters(const ParameterVisitor& visit) override;

 private:
  struct Layer {
    Tensor matrix;  // [in x out], softplus-reparameterized
    Tensor bias;    // [1 x out]
    Tensor gate;    // [1 x out], hidden layers only
  };
  std::vector<std::vector<Layer>> layers_;  // [channel][layer]
};

// Fourier-series density: |sum_k c_k exp(i pi k u)|^2 normalized on (-1, 1),
// with u = tanh((y - offset) / scale). 60 complex coefficients per channel.
class FourierDensity final : public HyperDensity {
 public:
  static constexpr std::size_t kCoefficients = 60;

  FourierDensity() = default;
  explicit FourierDensity(std::size_t channels, std::uint64_t seed = 1,
                          float init_scale = 4.0f);

  std::size_t channels() const override { return offset_.cols(); }

  // Interleaved (re, im) pairs, [channels x 2*kCoefficients].
  Tensor& coefficients() { return coefficients_; }
  Tensor& log_scale() { return log_scale_; }
  Tensor& offset() { return offset_; }
  const Tensor& coefficients() const { return coefficients_; }
  double scale(std::size_t channel) const;

  double cdf(std::size_t channel, double y) const override;
  // Density in y.
  double pdf(std::size_t channel, double y) const;
  // Normalized density on the u-interval (-1, 1).
  double pdf_u(std::size_t channel, double u) const;

  Tensor rate_bits(const Tensor& w,
                   std::vector<float>* per_element = nullptr) const override;
  double interval_probability(std::size_t channel,
                              std::int32_t symbol) const override;
  void visit_parameters(const ParameterVisitor& visit) override;

 private:
  void check_channel(std::size_t channel) const;

  Tensor coefficients_;
  Tensor log_scale_;
  Tensor offset_;
};

double factorized_cdf(const FactorizedDensity& density, std::size_t channel,
                      double x);
double fourier_cdf(const FourierDensity& density, std::size_t channel,
                   double y);

// -- Rates ----------------------------------------------------------------------

Tensor rate_w(const Tensor& w, const HyperDensity& density,
              std::vector<float>* per_element = nullptr);
Tensor rate_w(const QuantizedLatent& w, const HyperDensity& density,
              std::vector<float>* per_element = nullptr);
Tensor rate_w_fourier(const Tensor& w, const FourierDensity& density,
                      std::vector<float>* per_element = nullptr);

// Phi((y+1/2-mu)/sigma) - Phi((y-1/2-mu)/sigma), floored at 2^-24.
double gaussian_interval_prob(double y, double mu, double sigma);

// Sum of -log2 gaussian_interval_prob over all elements; differentiable in y,
// mu and sigma. Shapes must match.
Tensor rate_y(const Tensor& y, const Tensor& mu, const Tensor& sigma,
              std::vector<float>* per_element = nullptr);

// -log2 max(p, 2^-24) summed, where p is the interval mass between two CDF
// logits (computed on whichever tail keeps precision). Differentiable.
Tensor interval_bits_from_logits(const Tensor& lower, const Tensor& upper,
                                 std::vector<float>* per_element = nullptr);

double standard_normal_cdf(double z);

}  // namespace lmc

#endif  // LMC_ENTROPY_HPP_
