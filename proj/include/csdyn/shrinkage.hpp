#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

// Soft-threshold nonlinearity and the threshold schedule
// lam_hat_t = lambda * sigma_hat_t / c driven by a running estimate of the
// squared error. The practical estimate is the mean square of the current
// estimate over the true zero coordinates (MSEZ); an oracle mode using the
// true MSE is available so theory and simulation can be driven identically.

namespace csdyn {

inline double soft_threshold(double u, double lam_hat) {
  if (u > lam_hat) return u - lam_hat;
  if (u < -lam_hat) return u + lam_hat;
  return 0.0;
}

/// Derivative of soft_threshold in u. At the kinks |u| == lam_hat the value
/// is fixed to 0.
inline double soft_threshold_deriv(double u, double lam_hat) {
  return std::abs(u) > lam_hat ? 1.0 : 0.0;
}

/// Mean of x_est^2 over the exact zero support of x0.
inline double msez(const Eigen::VectorXd& x_est, const Eigen::VectorXd& x0) {
  if (x_est.size() != x0.size())
    throw std::invalid_argument("msez: length mismatch");
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    if (x0[i] == 0.0) {
      sum += x_est[i] * x_est[i];
      ++count;
    }
  }
  if (count == 0)
    throw std::domain_error("msez: x0 has no zero component");
  return sum / static_cast<double>(count);
}

enum class ScheduleMode {
  kMsezSurrogate,  // update sigma_hat^2 from the estimate's zero support
  kTrueMseOracle,  // update from ||x0 - x||^2 / N (simulation-only luxury)
};

/// Threshold schedule state. sigma_hat_sq starts at rho and is updated by
/// the caller after every iteration.
struct ThresholdSchedule {
  double lambda = 1.0;   // control parameter, > 0
  double c = 1.0;        // relaxation, >= 1
  double sigma_hat_sq = 0.0;
  ScheduleMode mode = ScheduleMode::kMsezSurrogate;

  static constexpr double kSigmaFloor = 1e-18;  // keeps lam_hat > 0

  static ThresholdSchedule make(double lambda, double c, double rho,
                                ScheduleMode mode = ScheduleMode::kMsezSurrogate) {
    if (!(lambda > 0))
      throw std::invalid_argument("ThresholdSchedule: lambda must be > 0");
    if (!(c >= 1))
      throw std::invalid_argument("ThresholdSchedule: c must be >= 1");
    if (!(rho >= 0))
      throw std::invalid_argument("ThresholdSchedule: rho must be >= 0");
    return ThresholdSchedule{lambda, c, rho, mode};
  }

  /// Feed the estimate produced by the last iteration. If the zero support
  /// is empty in surrogate mode, the previous sigma_hat_sq is kept.
  void update(const Eigen::VectorXd& x_est, const Eigen::VectorXd& x0) {
    double s = sigma_hat_sq;
    if (mode == ScheduleMode::kMsezSurrogate) {
      if ((x0.array() == 0.0).any()) s = msez(x_est, x0);
    } else {
      s = (x0 - x_est).squaredNorm() / static_cast<double>(x0.size());
    }
    set_sigma_hat_sq(s);
  }

  void set_sigma_hat_sq(double s) {
    sigma_hat_sq = std::max(s, kSigmaFloor);
  }
};

inline double current_threshold(const ThresholdSchedule& schedule) {
  return schedule.lambda * std::sqrt(schedule.sigma_hat_sq) / schedule.c;
}

}  // namespace csdyn
