#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "csdyn/rng.hpp"

// Random instances of the linear observation model y = A x0 + omega with a
// sparse Gaussian signal, a dense Gaussian sensing matrix (entry variance
// 1/M) and white measurement noise.

namespace csdyn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Bernoulli-Gaussian signal law: a component is 0 with probability 1-rho,
/// otherwise standard normal. Second moment equals rho.
struct SignalPrior {
  double rho = 0.1;

  void validate() const {
    if (!(rho >= 0.0 && rho <= 1.0))
      throw std::invalid_argument("SignalPrior: rho must lie in [0,1]");
  }
};

/// One realization of the observation model, with everything needed to
/// regenerate or audit it.
struct ProblemInstance {
  Matrix A;           // M x N, entries ~ N(0, 1/M)
  Vector x0;          // length N
  Vector omega;       // length M
  Vector y;           // length M, y = A x0 + omega
  double delta = 0;   // M/N, derived from the dimensions
  double sigma_omega = 0;
  double rho = 0;
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;
  bool overdetermined = false;  // flagged when delta >= 1

  Eigen::Index m() const { return A.rows(); }
  Eigen::Index n() const { return A.cols(); }
};

/// Draws n components i.i.d. from the prior. Zero components are exact
/// binary zeros so that zero-support statistics are well defined.
inline Vector sample_signal(Eigen::Index n, const SignalPrior& prior,
                            const RngStream& mask, const RngStream& value) {
  prior.validate();
  if (n < 1) throw std::invalid_argument("sample_signal: n must be >= 1");
  Vector x(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = mask.uniform(static_cast<std::uint64_t>(i)) < prior.rho
               ? value.normal(static_cast<std::uint64_t>(i))
               : 0.0;
  }
  return x;
}

/// Dense sensing matrix with i.i.d. N(0, 1/m) entries, row-major counters.
inline Matrix sample_matrix(Eigen::Index m, Eigen::Index n,
                            const RngStream& rng) {
  if (m < 1 || n < 1)
    throw std::invalid_argument("sample_matrix: dimensions must be >= 1");
  Matrix A(m, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index col = 0; col < n; ++col)
      A(r, col) =
          scale * rng.normal(static_cast<std::uint64_t>(r * n + col));
  return A;
}

/// Assembles y = A x0 + omega with omega ~ N(0, sigma_omega^2 I).
inline ProblemInstance synthesize(Matrix A, Vector x0, double sigma_omega,
                                  const RngStream& noise) {
  if (A.cols() != x0.size())
    throw std::invalid_argument("synthesize: A and x0 dimensions disagree");
  if (sigma_omega < 0)
    throw std::invalid_argument("synthesize: sigma_omega must be >= 0");
  ProblemInstance inst;
  inst.omega = Vector(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    inst.omega[i] = sigma_omega * noise.normal(static_cast<std::uint64_t>(i));
  inst.y = A * x0 + inst.omega;
  inst.delta = static_cast<double>(A.rows()) / static_cast<double>(A.cols());
  inst.overdetermined = inst.delta >= 1.0;
  inst.sigma_omega = sigma_omega;
  inst.A = std::move(A);
  inst.x0 = std::move(x0);
  return inst;
}

/// Full pipeline for one seeded instance; `trial` selects an independent
/// substream family so trials can be generated in parallel.
inline ProblemInstance make_instance(std::uint64_t seed, std::uint64_t trial,
                                     Eigen::Index m, Eigen::Index n,
                                     const SignalPrior& prior,
                                     double sigma_omega) {
  RngStream mat(seed, StreamTag::kMatrix, trial);
  RngStream mask(seed, StreamTag::kSignalMask, trial);
  RngStream value(seed, StreamTag::kSignalValue, trial);
  RngStream noise(seed, StreamTag::kNoise, trial);
  ProblemInstance inst = synthesize(sample_matrix(m, n, mat),
                                    sample_signal(n, prior, mask, value),
                                    sigma_omega, noise);
  inst.rho = prior.rho;
  inst.seed = seed;
  inst.trial = trial;
  return inst;
}

}  // namespace csdyn
