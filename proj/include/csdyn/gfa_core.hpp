#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

// Order parameters of the effective single-site process and the kernels
// derived from them.
//
// With a = 1/(c*delta) and L = (I + a G)^{-1} (unit lower triangular, G
// strictly lower triangular):
//
//   D(s,s')  = sigma_omega^2 + (rho - m(s) - m(s') + C(s,s')) / delta
//   R        = c^{-2} L D L^T              (noise covariance, causal)
//   Gamma    = I - L / c                   (retarded self-interaction)
//   khat(s)  = det(Lambda_[s]) / c         (effective signal gain)
//
// Gamma's closed form above equals c^{-1}(c-1) I + c^{-1} L a G because
// L (I + a G) = I. Only rows/columns up to the current stage ever enter the
// dynamics, and extending the horizon leaves earlier entries of R and Gamma
// unchanged; that is what makes stage-by-stage sampling consistent.

namespace csdyn {

/// Overlap m(s) = <<x0 x(s)>>, correlation C(s,s') = <<x(s) x(s')>> and
/// response G(s,s') = <<x(s) (R^{-1} v)(s')>> for s > s', stored densely up
/// to the current horizon.
struct OrderParams {
  int horizon = 0;     // stages 0..horizon are populated
  Eigen::VectorXd m;   // (horizon+1)
  Eigen::MatrixXd C;   // (horizon+1)^2, symmetric
  Eigen::MatrixXd G;   // (horizon+1)^2, strictly lower triangular

  static OrderParams initial() {
    OrderParams p;
    p.horizon = 0;
    p.m = Eigen::VectorXd::Zero(1);
    p.C = Eigen::MatrixXd::Zero(1, 1);
    p.G = Eigen::MatrixXd::Zero(1, 1);
    return p;
  }

  /// Number of entries not pinned by the initial condition x(0) = 0:
  /// m(1..t), the symmetric block C(s,s') with 1 <= s' <= s <= t, and the
  /// strictly lower triangle of G. Totals t + t(t+1).
  int free_parameter_count() const {
    int count = 0;
    for (int s = 1; s <= horizon; ++s) ++count;            // m
    for (int s = 1; s <= horizon; ++s)
      for (int s2 = 1; s2 <= s; ++s2) ++count;             // C
    for (int s = 1; s <= horizon; ++s)
      for (int s2 = 0; s2 < s; ++s2) ++count;              // G
    return count;
  }
};

enum class LambdaInterpretation {
  kOnesRow,  // "A": row s of Lambda_[s] is all ones
  kUnitDet,  // "B": row s is the unit vector e_s, so each gain is 1/c
};

inline LambdaInterpretation lambda_interpretation_from_name(
    const std::string& s) {
  if (s == "A" || s == "a") return LambdaInterpretation::kOnesRow;
  if (s == "B" || s == "b") return LambdaInterpretation::kUnitDet;
  throw std::invalid_argument("lambda interpretation must be A or B");
}

inline const char* lambda_interpretation_name(LambdaInterpretation li) {
  return li == LambdaInterpretation::kOnesRow ? "A" : "B";
}

namespace detail {

/// Causality is structural: anything on or above the diagonal of G is a bug
/// in the caller, not a numerical artifact.
inline void require_strictly_lower(const Eigen::MatrixXd& G,
                                   const char* who) {
  if (G.rows() != G.cols())
    throw std::invalid_argument(std::string(who) + ": G must be square");
  for (Eigen::Index r = 0; r < G.rows(); ++r)
    for (Eigen::Index c = r; c < G.cols(); ++c)
      if (G(r, c) != 0.0)
        throw std::invalid_argument(
            std::string(who) + ": G must be strictly lower triangular");
}

/// L = (I + a G)^{-1} by forward substitution on unit-triangular columns;
/// no general inversion anywhere.
inline Eigen::MatrixXd unit_lower_inverse(const Eigen::MatrixXd& G,
                                          double a) {
  const Eigen::Index n = G.rows();
  Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n) + a * G;
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index col = 0; col < n; ++col)
    for (Eigen::Index r = col + 1; r < n; ++r) {
      double acc = B(r, col);  // solving B * L = I, column by column
      for (Eigen::Index k = col + 1; k < r; ++k) acc += B(r, k) * L(k, col);
      L(r, col) = -acc;
    }
  return L;
}

}  // namespace detail

/// D(s,s') = sigma_omega^2 + (rho - m(s) - m(s') + C(s,s')) / delta.
inline Eigen::MatrixXd build_D(const OrderParams& params, double rho,
                               double delta, double sigma_omega_sq) {
  const Eigen::Index n = params.m.size();
  Eigen::MatrixXd D(n, n);
  for (Eigen::Index s = 0; s < n; ++s)
    for (Eigen::Index s2 = 0; s2 < n; ++s2)
      D(s, s2) = sigma_omega_sq +
                 (rho - params.m[s] - params.m[s2] + params.C(s, s2)) / delta;
  return D;
}

/// Noise covariance R = c^{-2} L D L^T with L = (I + a G)^{-1}. The result
/// is symmetrized; a skew part above 1e-10 (relative) indicates an
/// inconsistent D and raises.
inline Eigen::MatrixXd build_R(const Eigen::MatrixXd& D,
                               const Eigen::MatrixXd& G, double c,
                               double delta) {
  detail::require_strictly_lower(G, "build_R");
  if (D.rows() != G.rows())
    throw std::invalid_argument("build_R: D and G sizes disagree");
  const double skew_d = (D - D.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, D.cwiseAbs().maxCoeff());
  if (skew_d > 1e-10 * scale)
    throw std::runtime_error("build_R: D is not symmetric");
  const Eigen::MatrixXd L = detail::unit_lower_inverse(G, 1.0 / (c * delta));
  Eigen::MatrixXd R = (L * D * L.transpose()) / (c * c);
  const double skew_r = (R - R.transpose()).cwiseAbs().maxCoeff();
  if (skew_r > 1e-10 * std::max(1.0, R.cwiseAbs().maxCoeff()))
    throw std::runtime_error("build_R: result lost symmetry");
  return ((R + R.transpose()) / 2.0).eval();
}

/// Retarded self-interaction Gamma = c^{-1}(c-1) I + c^{-1} L a G, returned
/// via the equivalent closed form I - L/c.
inline Eigen::MatrixXd build_Gamma(const Eigen::MatrixXd& G, double c,
                                   double delta) {
  detail::require_strictly_lower(G, "build_Gamma");
  const Eigen::Index n = G.rows();
  const Eigen::MatrixXd L = detail::unit_lower_inverse(G, 1.0 / (c * delta));
  return Eigen::MatrixXd::Identity(n, n) - L / c;
}

/// Gain matrix for stage s over indices 0..s: row s' != s is row s' of
/// I + a G^T; row s is all ones (kOnesRow) or e_s (kUnitDet).
inline Eigen::MatrixXd build_gain_matrix(
    const Eigen::MatrixXd& G, double c, double delta, int s,
    LambdaInterpretation interp = LambdaInterpretation::kOnesRow) {
  detail::require_strictly_lower(G, "effective_gain");
  if (s < 0 || s >= G.rows())
    throw std::invalid_argument("effective_gain: stage out of range");
  const double a = 1.0 / (c * delta);
  Eigen::MatrixXd lam = Eigen::MatrixXd::Identity(s + 1, s + 1);
  for (Eigen::Index r = 0; r < s; ++r)
    for (Eigen::Index col = 0; col <= s; ++col)
      lam(r, col) += a * G(col, r);
  if (interp == LambdaInterpretation::kOnesRow)
    lam.row(s).setOnes();
  return lam;
}

/// khat(s) = det(Lambda_[s]) / c.
inline double effective_gain(
    const Eigen::MatrixXd& G, double c, double delta, int s,
    LambdaInterpretation interp = LambdaInterpretation::kOnesRow) {
  if (interp == LambdaInterpretation::kUnitDet) {
    detail::require_strictly_lower(G, "effective_gain");
    return 1.0 / c;  // unit upper triangular determinant
  }
  const Eigen::MatrixXd lam = build_gain_matrix(G, c, delta, s, interp);
  if (s == 0) return 1.0 / c;
  return lam.determinant() / c;
}

/// Predicted squared error rho - 2 m(t) + C(t,t), clamped at zero (sample
/// noise can push the raw combination slightly negative).
inline double mse_from_order_params(const OrderParams& params, double rho,
                                    int t) {
  if (t < 0 || t > params.horizon)
    throw std::invalid_argument("mse_from_order_params: t out of range");
  return std::max(0.0, rho - 2.0 * params.m[t] + params.C(t, t));
}

inline double mse_from_order_params_raw(const OrderParams& params, double rho,
                                        int t) {
  if (t < 0 || t > params.horizon)
    throw std::invalid_argument("mse_from_order_params: t out of range");
  return rho - 2.0 * params.m[t] + params.C(t, t);
}

// ---- snapshots ----

/// Kernels derived from one set of order parameters, kept for diagnostics
/// and golden tests.
struct GfaKernel {
  Eigen::MatrixXd D;
  Eigen::MatrixXd R;
  Eigen::MatrixXd Gamma;
  Eigen::VectorXd k_hat;

  static GfaKernel build(const OrderParams& params, double rho, double delta,
                         double sigma_omega_sq, double c,
                         LambdaInterpretation interp) {
    GfaKernel k;
    k.D = build_D(params, rho, delta, sigma_omega_sq);
    k.R = build_R(k.D, params.G, c, delta);
    k.Gamma = build_Gamma(params.G, c, delta);
    k.k_hat.resize(params.horizon + 1);
    for (int s = 0; s <= params.horizon; ++s)
      k.k_hat[s] = effective_gain(params.G, c, delta, s, interp);
    return k;
  }
};

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline nlohmann::json kernel_snapshot(const OrderParams& params,
                                      const GfaKernel& kernel) {
  nlohmann::json j;
  j["horizon"] = params.horizon;
  j["m"] = std::vector<double>(params.m.data(),
                               params.m.data() + params.m.size());
  j["C"] = detail::matrix_to_json(params.C);
  j["G"] = detail::matrix_to_json(params.G);
  j["D"] = detail::matrix_to_json(kernel.D);
  j["R"] = detail::matrix_to_json(kernel.R);
  j["Gamma"] = detail::matrix_to_json(kernel.Gamma);
  j["k_hat"] = std::vector<double>(
      kernel.k_hat.data(), kernel.k_hat.data() + kernel.k_hat.size());
  return j;
}

}  // namespace csdyn
