// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Complexity estimators for latent datasets and the rate-distortion metrics
// used to compare codecs.

#ifndef LMC_ANALYSIS_HPP_
#define LMC_ANALYSIS_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace lmc {

// N samples of equal dimension D, row-major.
struct SampleMatrix {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  static SampleMatrix from_rows(const std::vector<std::vector<float>>& rows);
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
};

// (1/(M N)) sum over M sign draws a in {-1,+1}^N of max_d |sum_k a_k x_k[d]|.
// Draw m uses its own generator seeded from (seed, m), so the result does not
// depend on how draws are scheduled.
double rademacher_estimate(const SampleMatrix& samples, std::size_t draws,
                           std::uint64_t seed);
double rademacher_estimate_serial(const SampleMatrix& samples,
                                  std::size_t draws, std::uint64_t seed);

struct ArnoldiResult {
  double scaled_logdet = 0.0;        // (1/2D) sum log max(eig, 1e-12)
  std::size_t krylov_dim = 0;        // < iterations on breakdown
  std::vector<double> eigenvalues;   // real parts, descending
};

inline constexpr double kEigenFloor = 1e-12;

// Arnoldi iteration on the implicit covariance operator
// v -> A^T (A v) / (N - 1), A the centered sample matrix. Throws if
// iterations > D or N < 2.
ArnoldiResult arnoldi_cov_logdet(const SampleMatrix& samples,
                                 std::size_t iterations, std::uint64_t seed);

using LinearMap = std::function<std::vector<double>(std::span<const double>)>;

// Largest singular value of J by power iteration on J^T J, using only the
// products jvp(v) = J v and vjp(u) = J^T u. Returns ||J b_K|| for the unit
// iterate b_K.
double power_iteration_norm(std::size_t input_dim, const LinearMap& jvp,
                            const LinearMap& vjp, std::size_t iterations,
                            std::uint64_t seed);

// Sample Pearson correlation; throws on < 2 points or zero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);

struct RdPoint {
  double rate = 0.0;
  double quality = 0.0;  // higher is better
};

// Bjontegaard delta rate in percent of `test` relative to `ref`: cubic
// least-squares fits of ln(rate) against quality, averaged over the shared
// quality interval.
double bd_rate(std::span<const RdPoint> ref, std::span<const RdPoint> test);

}  // namespace lmc

#endif  // LMC_ANALYSIS_HPP_
