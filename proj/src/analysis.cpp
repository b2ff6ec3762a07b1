// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "lmc/tensor.hpp"

namespace lmc {

namespace {

// SplitMix64 finalizer; decorrelates per-draw seeds.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double rademacher_draw(const SampleMatrix& s, std::uint64_t seed,
                       std::size_t draw, std::vector<double>& acc) {
  std::mt19937_64 rng(mix(seed ^ mix(draw)));
  std::fill(acc.begin(), acc.end(), 0.0);
  for (std::size_t k = 0; k < s.count; ++k) {
    const double sign = (rng() >> 63) != 0 ? 1.0 : -1.0;
    const double* x = s.data.data() + k * s.dim;
    for (std::size_t d = 0; d < s.dim; ++d) acc[d] += sign * x[d];
  }
  double best = 0.0;
  for (double v : acc) best = std::max(best, std::abs(v));
  return best;
}

void check_samples(const SampleMatrix& s, const char* who) {
  if (s.count == 0 || s.dim == 0)
    throw Error(std::string(who) + ": empty dataset");
  if (s.data.size() != s.count * s.dim)
    throw Error(std::string(who) + ": sample matrix size mismatch");
}

double finish_rademacher(const std::vector<double>& per_draw,
                         std::size_t count) {
  double total = 0.0;
  for (double v : per_draw) total += v;
  return total / (static_cast<double>(per_draw.size()) *
                  static_cast<double>(count));
}

}  // namespace

SampleMatrix SampleMatrix::from_rows(
    const std::vector<std::vector<float>>& rows) {
  SampleMatrix s;
  s.count = rows.size();
  s.dim = rows.empty() ? 0 : rows.front().size();
  s.data.reserve(s.count * s.dim);
  for (const auto& r : rows) {
    if (r.size() != s.dim) throw Error("SampleMatrix: ragged rows");
    s.data.insert(s.data.end(), r.begin(), r.end());
  }
  return s;
}

double rademacher_estimate_serial(const SampleMatrix& samples,
                                  std::size_t draws, std::uint64_t seed) {
  check_samples(samples, "rademacher_estimate");
  if (draws == 0) throw Error("rademacher_estimate: draws must be positive");
  std::vector<double> per_draw(draws);
  std::vector<double> acc(samples.dim);
  for (std::size_t m = 0; m < draws; ++m)
    per_draw[m] = rademacher_draw(samples, seed, m, acc);
  return finish_rademacher(per_draw, samples.count);
}

double rademacher_estimate(const SampleMatrix& samples, std::size_t draws,
                           std::uint64_t seed) {
  check_samples(samples, "rademacher_estimate");
  if (draws == 0) throw Error("rademacher_estimate: draws must be positive");
  std::vector<double> per_draw(draws);
#pragma omp parallel
  {
    std::vector<double> acc(samples.dim);
#pragma omp for schedule(static)
    for (long m = 0; m < static_cast<long>(draws); ++m)
      per_draw[m] = rademacher_draw(samples, seed, m, acc);
  }
  return finish_rademacher(per_draw, samples.count);
}

ArnoldiResult arnoldi_cov_logdet(const SampleMatrix& samples,
                                 std::size_t iterations, std::uint64_t seed) {
  check_samples(samples, "arnoldi_cov_logdet");
  const std::size_t n = samples.count, d = samples.dim;
  if (n < 2) throw Error("arnoldi_cov_logdet: need at least two samples");
  if (iterations == 0 || iterations > d)
    throw Error("arnoldi_cov_logdet: iterations must be in [1, D]");
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                            Eigen::RowMajor>;
  Mat a = Eigen::Map<const Mat>(samples.data.data(), static_cast<long>(n),
                                static_cast<long>(d));
  a.rowwise() -= a.colwise().mean();
  const double norm = 1.0 / static_cast<double>(n - 1);
  auto apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return norm * (a.transpose() * (a * v));
  };

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  const long k_max = static_cast<long>(iterations);
  Eigen::MatrixXd q(static_cast<long>(d), k_max + 1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(k_max + 1, k_max);
  Eigen::VectorXd v0(static_cast<long>(d));
  for (long i = 0; i < v0.size(); ++i) v0[i] = gauss(rng);
  q.col(0) = v0.normalized();

  long k = 0;
  for (; k < k_max; ++k) {
    Eigen::VectorXd w = apply(q.col(k));
    const double w_norm = w.norm();
    // Classical Gram-Schmidt, applied twice for full reorthogonalization.
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd coeffs = q.leftCols(k + 1).transpose() * w;
      w -= q.leftCols(k + 1) * coeffs;
      h.col(k).head(k + 1) += coeffs;
    }
    const double beta = w.norm();
    h(k + 1, k) = beta;
    if (beta <= 1e-12 * std::max(w_norm, 1e-300) || beta == 0.0) {
      ++k;
      break;
    }
    q.col(k + 1) = w / beta;
  }

  ArnoldiResult r;
  r.krylov_dim = static_cast<std::size_t>(k);
  const Eigen::MatrixXd hk = h.topLeftCorner(k, k);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(hk, false);
  if (solver.info() != Eigen::Success)
    throw Error("arnoldi_cov_logdet: Hessenberg eigensolver failed");
  double total = 0.0;
  for (long i = 0; i < k; ++i) {
    const double lambda = solver.eigenvalues()[i].real();
    r.eigenvalues.push_back(lambda);
    total += std::log(std::max(lambda, kEigenFloor));
  }
  std::sort(r.eigenvalues.rbegin(), r.eigenvalues.rend());
  r.scaled_logdet = total / (2.0 * static_cast<double>(d));
  return r;
}

double power_iteration_norm(std::size_t input_dim, const LinearMap& jvp,
                            const LinearMap& vjp, std::size_t iterations,
                            std::uint64_t seed) {
  if (input_dim == 0) throw Error("power_iteration_norm: zero dimension");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<double> b(input_dim);
  auto normalize = [](std::vector<double>& v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double nrm = std::sqrt(sq);
    if (nrm > 0.0)
      for (double& x : v) x /= nrm;
    return nrm;
  };
  auto check = [](const std::vector<double>& v, const char* what) {
    for (double x : v)
      if (!std::isfinite(x))
        throw Error(std::string("power_iteration_norm: non-finite ") + what);
  };
  for (double& x : b) x = gauss(rng);
  normalize(b);
  for (std::size_t it = 0; it < iterations; ++it) {
    const std::vector<double> jb = jvp(b);
    check(jb, "Jacobian-vector product");
    std::vector<double> w = vjp(jb);
    check(w, "vector-Jacobian product");
    if (w.size() != input_dim)
      throw Error("power_iteration_norm: vjp returned the wrong dimension");
    if (normalize(w) == 0.0) return 0.0;  // b lies in the null space
    b = std::move(w);
  }
  const std::vector<double> jb = jvp(b);
  check(jb, "Jacobian-vector product");
  double sq = 0.0;
  for (double x : jb) sq += x * x;
  return std::sqrt(sq);
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error("pearson: length mismatch");
  if (xs.size() < 2) throw Error("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

// Least-squares cubic coefficients (c0..c3) of ln(rate) in quality.
Eigen::Vector4d fit_log_rate(std::span<const RdPoint> pts) {
  Eigen::MatrixXd v(static_cast<long>(pts.size()), 4);
  Eigen::VectorXd y(static_cast<long>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!(pts[i].rate > 0.0) || !std::isfinite(pts[i].quality))
      throw Error("bd_rate: rates must be positive and qualities finite");
    const double q = pts[i].quality;
    v.row(static_cast<long>(i)) << 1.0, q, q * q, q * q * q;
    y[static_cast<long>(i)] = std::log(pts[i].rate);
  }
  return v.colPivHouseholderQr().solve(y);
}

double integrate_cubic(const Eigen::Vector4d& c, double lo, double hi) {
  auto prim = [&c](double x) {
    return c[0] * x + c[1] * x * x / 2.0 + c[2] * x * x * x / 3.0 +
           c[3] * x * x * x * x / 4.0;
  };
  return prim(hi) - prim(lo);
}

}  // namespace

double bd_rate(std::span<const RdPoint> ref, std::span<const RdPoint> test) {
  if (ref.size() < 4 || test.size() < 4)
    throw Error("bd_rate: need at least four points per curve");
  auto range = [](std::span<const RdPoint> pts) {
    auto [lo, hi] = std::minmax_element(
        pts.begin(), pts.end(),
        [](const RdPoint& a, const RdPoint& b) { return a.quality < b.quality; });
    return std::pair{lo->quality, hi->quality};
  };
  const auto [ref_lo, ref_hi] = range(ref);
  const auto [test_lo, test_hi] = range(test);
  const double lo = std::max(ref_lo, test_lo);
  const double hi = std::min(ref_hi, test_hi);
  if (!(hi > lo)) throw Error("bd_rate: quality ranges do not overlap");
  const Eigen::Vector4d c_ref = fit_log_rate(ref);
  const Eigen::Vector4d c_test = fit_log_rate(test);
  const double avg =
      (integrate_cubic(c_test, lo, hi) - integrate_cubic(c_ref, lo, hi)) /
      (hi - lo);
  return (std::exp(avg) - 1.0) * 100.0;
}

}  // namespace lmc
