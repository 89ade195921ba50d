#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

// Gauss-Hermite rules in probabilists' normalization: nodes x_i and weights
// w_i with sum(w) = 1 such that sum_i w_i f(x_i) ~ E[f(Z)], Z ~ N(0,1).
//
// Nodes are eigenvalues of the Jacobi matrix (Golub-Welsch); weights come
// from the orthonormal-polynomial identity w_i = 1 / sum_k p_k(x_i)^2 with a
// scaled three-term recurrence, so no eigenvectors are needed.

namespace csdyn {

struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  template <class F>
  double expect(F&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

namespace detail {

inline GaussHermiteRule make_gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max(n - 1, 1));
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub.head(std::max(n - 1, 0)),
                                Eigen::EigenvaluesOnly);
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) rule.nodes[i] = solver.eigenvalues()[i];

  // w_i = 1 / sum_{k<n} p_k(x_i)^2, orthonormal probabilists' Hermite:
  //   sqrt(k+1) p_{k+1} = x p_k - sqrt(k) p_{k-1},  p_0 = 1.
  // The recurrence is rescaled on the fly; once the running scale shows the
  // sum exceeds ~1e300 the weight underflows to zero, which is the correct
  // contribution of such extreme nodes.
  for (int i = 0; i < n; ++i) {
    const double x = rule.nodes[i];
    double pm = 0.0, p = 1.0, sum = 1.0;
    double log_scale = 0.0;
    for (int k = 0; k + 1 < n; ++k) {
      double pn = (x * p - std::sqrt(static_cast<double>(k)) * pm) /
                  std::sqrt(static_cast<double>(k + 1));
      pm = p;
      p = pn;
      if (std::abs(p) > 1e120) {
        const double s = 1e-120;
        p *= s;
        pm *= s;
        sum *= s * s;
        log_scale += 2.0 * std::log(1e120);
        if (log_scale > 1400.0) {  // weight below double range already
          sum = std::numeric_limits<double>::infinity();
          break;
        }
      }
      sum += p * p;
    }
    rule.weights[i] =
        std::isinf(sum) ? 0.0 : std::exp(-log_scale) / sum;
  }
  return rule;
}

}  // namespace detail

/// Cached rule lookup; thread-safe.
inline const GaussHermiteRule& gauss_hermite(int n) {
  static std::mutex mu;
  static std::map<int, GaussHermiteRule> cache;
  std::scoped_lock lock(mu);
  auto it = cache.find(n);
  if (it == cache.end())
    it = cache.emplace(n, detail::make_gauss_hermite(n)).first;
  return it->second;
}

/// E[f(Z)] evaluated on doubling node counts until two successive levels
/// agree below `tol` (or the cap is reached). Starts at 63 nodes.
template <class F>
double gauss_hermite_expect(F&& f, double tol = 1e-10, int start = 63,
                            int max_nodes = 2048) {
  double prev = gauss_hermite(start).expect(f);
  for (int n = 2 * start; n <= max_nodes; n *= 2) {
    const double cur = gauss_hermite(n).expect(f);
    if (std::abs(cur - prev) < tol) return cur;
    prev = cur;
  }
  return prev;
}

}  // namespace csdyn
