#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "csdyn/model.hpp"
#include "csdyn/shrinkage.hpp"

// The three reconstruction iterations on a concrete instance:
//
//   IST:  x <- eta( (1/c) A^T z + x ),  z = y - A x
//   ITA:  IST with c = 1
//   AMP:  x <- eta( A^T z + x ),
//         z = y - A x + (1/delta) z_prev <eta'(u_prev)>
//
// all starting from x = 0, z = y.

namespace csdyn {

enum class Algorithm { kAmp, kIst, kIta };

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kAmp: return "AMP";
    case Algorithm::kIst: return "IST";
    case Algorithm::kIta: return "ITA";
  }
  return "?";
}

inline Algorithm algorithm_from_name(const std::string& s) {
  if (s == "AMP" || s == "amp") return Algorithm::kAmp;
  if (s == "IST" || s == "ist") return Algorithm::kIst;
  if (s == "ITA" || s == "ita") return Algorithm::kIta;
  throw std::invalid_argument("unknown algorithm: " + s);
}

struct AlgoState {
  Vector x;   // current estimate, length N
  Vector z;   // residual of the step that produced x (z = y initially)
  int t = 0;
  double eta_prime_mean = 0.0;  // <eta'> at the previous pre-threshold point

  static AlgoState init(const ProblemInstance& inst) {
    AlgoState s;
    s.x = Vector::Zero(inst.n());
    s.z = inst.y;
    return s;
  }
};

/// One IST update. The residual is recomputed from scratch each step.
inline AlgoState ist_step(const AlgoState& state,
                          const ProblemInstance& inst, double c,
                          double lam_hat) {
  if (state.x.size() != inst.n())
    throw std::invalid_argument("ist_step: state does not match instance");
  if (!(c >= 1)) throw std::invalid_argument("ist_step: c must be >= 1");
  AlgoState next;
  next.z = inst.y - inst.A * state.x;
  Vector u = (1.0 / c) * (inst.A.transpose() * next.z) + state.x;
  next.x = u.unaryExpr(
      [lam_hat](double v) { return soft_threshold(v, lam_hat); });
  next.eta_prime_mean =
      u.unaryExpr([lam_hat](double v) {
         return soft_threshold_deriv(v, lam_hat);
       }).mean();
  next.t = state.t + 1;
  return next;
}

/// One AMP update. At t = 0 the correction term vanishes because
/// eta_prime_mean starts at 0, giving z = y as required.
inline AlgoState amp_step(const AlgoState& state,
                          const ProblemInstance& inst, double delta,
                          double lam_hat) {
  if (state.x.size() != inst.n())
    throw std::invalid_argument("amp_step: state does not match instance");
  AlgoState next;
  next.z = inst.y - inst.A * state.x +
           (state.eta_prime_mean / delta) * state.z;
  Vector u = inst.A.transpose() * next.z + state.x;
  next.x = u.unaryExpr(
      [lam_hat](double v) { return soft_threshold(v, lam_hat); });
  next.eta_prime_mean =
      u.unaryExpr([lam_hat](double v) {
         return soft_threshold_deriv(v, lam_hat);
       }).mean();
  next.t = state.t + 1;
  return next;
}

struct TrajectoryPoint {
  int t = 0;
  double mse = 0;       // ||x0 - x||^2 / N
  double msez = 0;      // mean x^2 over the zero support of x0
  double lam_hat = 0;   // threshold the schedule holds at this iteration
  double nonzero_fraction = 0;
};

struct Trajectory {
  Algorithm algorithm = Algorithm::kIst;
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  std::vector<TrajectoryPoint> points;
  bool diverged = false;
  int last_finite_t = 0;
};

namespace detail {

inline TrajectoryPoint observe(int t, const Vector& x, const Vector& x0,
                               double lam_hat) {
  TrajectoryPoint p;
  p.t = t;
  p.mse = (x0 - x).squaredNorm() / static_cast<double>(x0.size());
  bool has_zero = (x0.array() == 0.0).any();
  p.msez = has_zero ? msez(x, x0) : std::numeric_limits<double>::quiet_NaN();
  p.lam_hat = lam_hat;
  p.nonzero_fraction = static_cast<double>((x.array() != 0.0).count()) /
                       static_cast<double>(x.size());
  return p;
}

}  // namespace detail

/// Runs `algo` for T iterations, recording one point per iteration 0..T.
/// A non-finite update or mse above 1e6*rho stops the run early with the
/// diverged flag set; divergence is data here, not an error.
inline Trajectory run(Algorithm algo, const ProblemInstance& inst, int T,
                      ThresholdSchedule schedule) {
  if (T < 1) throw std::invalid_argument("run: T must be >= 1");
  if (algo == Algorithm::kIta && schedule.c != 1.0)
    throw std::invalid_argument("run: ITA requires c == 1");

  Trajectory traj;
  traj.algorithm = algo;
  traj.n = inst.n();
  traj.m = inst.m();

  AlgoState state = AlgoState::init(inst);
  traj.points.push_back(
      detail::observe(0, state.x, inst.x0, current_threshold(schedule)));

  const double blowup = 1e6 * inst.rho;
  for (int t = 0; t < T; ++t) {
    const double lam_hat = current_threshold(schedule);
    state = (algo == Algorithm::kAmp)
                ? amp_step(state, inst, inst.delta, lam_hat)
                : ist_step(state, inst, schedule.c, lam_hat);
    if (!state.x.allFinite()) {
      traj.diverged = true;
      break;
    }
    schedule.update(state.x, inst.x0);
    traj.points.push_back(detail::observe(state.t, state.x, inst.x0,
                                          current_threshold(schedule)));
    traj.last_finite_t = state.t;
    if (traj.points.back().mse > blowup) {
      traj.diverged = true;
      break;
    }
  }
  return traj;
}

}  // namespace csdyn
