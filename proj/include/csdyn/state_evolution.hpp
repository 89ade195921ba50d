#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "csdyn/model.hpp"
#include "csdyn/quadrature.hpp"
#include "csdyn/shrinkage.hpp"

// Scalar state evolution for the correlation-cancelling iteration (AMP):
//
//   sigma_{t+1}^2 = E[(eta(X0 + tau_t Z; lam_hat_t) - X0)^2],
//   tau_t^2      = sigma_omega^2 + sigma_t^2 / delta,
//
// with X0 from the Bernoulli-Gaussian prior and Z standard normal. The
// recursion also tracks the predicted zero-support error so the threshold
// schedule can be driven exactly like the simulated algorithm's surrogate.

namespace csdyn {

namespace detail {

/// E[(eta(mu + tau Z; lam) - w)^2] over Z ~ N(0,1) by Gauss-Hermite.
template <class Rule>
double shrink_sq_err(const Rule& rule, double mu, double tau, double lam,
                     double w) {
  return rule.expect([&](double z) {
    const double d = soft_threshold(mu + tau * z, lam) - w;
    return d * d;
  });
}

}  // namespace detail

struct SeStepResult {
  double mse = 0;   // E[(eta(X0 + tau Z) - X0)^2]
  double msez = 0;  // E[eta(tau Z)^2], the zero-coordinate error
};

/// One application of the map, node-doubling until stable below 1e-10.
inline SeStepResult se_step_full(double sigma_sq, double delta,
                                 double sigma_omega_sq,
                                 const SignalPrior& prior, double lam_hat) {
  prior.validate();
  if (!(delta > 0)) throw std::invalid_argument("se_step: delta must be > 0");
  if (sigma_sq < 0 || sigma_omega_sq < 0 || lam_hat < 0)
    throw std::invalid_argument("se_step: negative input");
  const double tau = std::sqrt(sigma_omega_sq + sigma_sq / delta);
  const double rho = prior.rho;

  if (tau == 0.0) {
    // Degenerate noiseless map: eta acts directly on X0.
    SeStepResult r;
    r.msez = 0.0;
    const auto& rule = gauss_hermite(63);
    r.mse = rho * rule.expect([&](double x) {
      const double d = soft_threshold(x, lam_hat) - x;
      return d * d;
    });
    return r;
  }

  auto eval = [&](const GaussHermiteRule& rule) {
    SeStepResult r;
    r.msez = detail::shrink_sq_err(rule, 0.0, tau, lam_hat, 0.0);
    const double gauss_part = rule.expect([&](double x) {
      return detail::shrink_sq_err(rule, x, tau, lam_hat, x);
    });
    r.mse = (1.0 - rho) * r.msez + rho * gauss_part;
    return r;
  };

  SeStepResult prev = eval(gauss_hermite(63));
  for (int n = 126; n <= 2048; n *= 2) {
    SeStepResult cur = eval(gauss_hermite(n));
    if (std::abs(cur.mse - prev.mse) < 1e-10 &&
        std::abs(cur.msez - prev.msez) < 1e-10)
      return cur;
    prev = cur;
  }
  return prev;
}

inline double se_step(double sigma_sq, double delta, double sigma_omega_sq,
                      const SignalPrior& prior, double lam_hat) {
  return se_step_full(sigma_sq, delta, sigma_omega_sq, prior, lam_hat).mse;
}

struct SeStage {
  int t = 0;
  double sigma_sq = 0;  // predicted MSE
  double tau_sq = 0;    // sigma_omega^2 + sigma_sq / delta
  double msez = 0;      // predicted zero-coordinate error
  double lam_hat = 0;   // threshold held at this stage
};

struct SeTrajectory {
  std::vector<SeStage> stages;
};

/// Iterates the map for T stages starting from sigma_0^2 = rho, with
/// lam_hat_t = lambda * sigma_hat_t / c and sigma_hat updated per `mode`
/// (surrogate: predicted MSEZ; oracle: predicted MSE).
inline SeTrajectory se_run(const SignalPrior& prior, double delta,
                           double sigma_omega_sq, double lambda, double c,
                           int T,
                           ScheduleMode mode = ScheduleMode::kMsezSurrogate) {
  if (T < 1) throw std::invalid_argument("se_run: T must be >= 1");
  if (!(lambda > 0) || !(c >= 1))
    throw std::invalid_argument("se_run: need lambda > 0 and c >= 1");
  SeTrajectory traj;
  double sigma_sq = prior.rho;
  double sigma_hat_sq = prior.rho;
  double msez_pred = 0.0;
  for (int t = 0; t <= T; ++t) {
    SeStage stage;
    stage.t = t;
    stage.sigma_sq = sigma_sq;
    stage.tau_sq = sigma_omega_sq + sigma_sq / delta;
    stage.msez = msez_pred;
    stage.lam_hat = lambda * std::sqrt(sigma_hat_sq) / c;
    traj.stages.push_back(stage);
    if (t == T) break;
    SeStepResult next = se_step_full(sigma_sq, delta, sigma_omega_sq, prior,
                                     stage.lam_hat);
    sigma_sq = next.mse;
    msez_pred = next.msez;
    sigma_hat_sq = std::max(
        mode == ScheduleMode::kMsezSurrogate ? next.msez : next.mse,
        ThresholdSchedule::kSigmaFloor);
  }
  return traj;
}

}  // namespace csdyn
