#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "csdyn/gfa_core.hpp"
#include "csdyn/model.hpp"
#include "csdyn/parallel.hpp"
#include "csdyn/rng.hpp"
#include "csdyn/shrinkage.hpp"

// Monte Carlo ensemble of the effective single-site process
//
//   x(s+1) = eta_s( x0 khat(s) + v(s) + (Gamma x)(s) ),   x(0) = 0,
//
// with v jointly Gaussian across stages, covariance R. Stage s draws v(s)
// conditionally on each sample's past noise via the growing Cholesky factor,
// advances all paths, and re-estimates the order parameters; the exact
// multi-integral this replaces grows exponentially with the horizon.
//
// Every mean is accumulated in fixed 4096-sample blocks and reduced in
// block order, so predictions are bitwise reproducible for a given seed
// regardless of the shard count.

namespace csdyn {

/// Raised when a stage cannot continue (non-finite path values or an
/// unfactorizable noise covariance). Carries the stage for diagnostics.
struct StageAbort : std::runtime_error {
  int stage;
  StageAbort(int stage_, const std::string& what)
      : std::runtime_error(what), stage(stage_) {}
};

class EffectiveEnsemble {
 public:
  /// Samples x0 i.i.d. from the prior and pins every path at x(0) = 0.
  /// Blocks whose index equals `masked_block` are excluded from the
  /// ensemble (used for jackknife re-runs); SIZE_MAX masks nothing.
  EffectiveEnsemble(std::size_t S, const SignalPrior& prior,
                    std::uint64_t seed, int shard_count = 1,
                    std::size_t masked_block = SIZE_MAX)
      : S_(S),
        shard_count_(shard_count),
        masked_block_(masked_block),
        xi_stream_(seed, StreamTag::kEnsembleXi) {
    if (S < 1)
      throw std::invalid_argument("EffectiveEnsemble: need S >= 1");
    prior.validate();
    x0_.resize(S);
    x_.assign(S, 0.0);  // stage-0 block
    RngStream mask(seed, StreamTag::kEnsembleMask);
    RngStream value(seed, StreamTag::kEnsembleValue);
    const std::size_t nblocks = block_count(S);
    block_zero_count_.assign(nblocks, 0);
    parallel_for_blocks(S, shard_count_, [&](std::size_t b, std::size_t lo,
                                             std::size_t hi) {
      std::int64_t zeros = 0;
      for (std::size_t i = lo; i < hi; ++i) {
        const bool on = mask.uniform(i) < prior.rho;
        x0_[i] = on ? value.normal(i) : 0.0;
        if (!on) ++zeros;
      }
      block_zero_count_[b] = zeros;
    });
    included_ = 0;
    zero_count_ = 0;
    for (std::size_t b = 0; b < nblocks; ++b) {
      if (b == masked_block_) continue;
      included_ += block_size(b);
      zero_count_ += block_zero_count_[b];
    }
    if (included_ == 0)
      throw std::invalid_argument("EffectiveEnsemble: mask removed all samples");
  }

  std::size_t size() const { return S_; }
  std::size_t included() const { return included_; }
  int horizon() const { return horizon_; }
  int noise_stages() const { return static_cast<int>(chol_.rows()); }
  int jitter_events() const { return jitter_events_; }
  const std::vector<int>& jitter_stages() const { return jitter_stages_; }
  const Eigen::MatrixXd& covariance() const { return R_; }
  const Eigen::MatrixXd& cholesky() const { return chol_; }
  const double* x0() const { return x0_.data(); }
  const double* stage(int s) const { return x_.data() + s * S_; }
  const double* noise(int s) const { return v_.data() + s * S_; }

  /// Accepts the covariance extended by one stage and draws v(s) for every
  /// sample from its conditional law given that sample's noise history.
  void extend_noise(const Eigen::MatrixXd& R_next) {
    const int s = noise_stages();
    if (R_next.rows() != s + 1 || R_next.cols() != s + 1)
      throw std::invalid_argument("extend_noise: covariance must grow by one stage");
    if (s > 0) {
      const double drift =
          (R_next.topLeftCorner(s, s) - R_).cwiseAbs().maxCoeff();
      if (drift > 1e-12 * std::max(1.0, R_.cwiseAbs().maxCoeff()))
        throw std::invalid_argument(
            "extend_noise: existing covariance block changed");
    }

    // Grow the Cholesky factor by one row. A non-positive pivot gets one
    // jitter on the new diagonal entry (earlier rows are already fixed by
    // the noise drawn from them); the event is recorded.
    Eigen::MatrixXd chol_next = Eigen::MatrixXd::Zero(s + 1, s + 1);
    chol_next.topLeftCorner(s, s) = chol_;
    Eigen::VectorXd row(s);
    for (int k = 0; k < s; ++k) {
      double acc = R_next(s, k);
      for (int j = 0; j < k; ++j) acc -= row[j] * chol_(k, j);
      row[k] = acc / chol_(k, k);
    }
    double pivot_sq = R_next(s, s) - row.squaredNorm();
    const double floor = 1e-10 * R_next.trace() / (s + 1);
    if (!(pivot_sq > 0.0)) {
      pivot_sq += std::max(floor, 1e-300);
      ++jitter_events_;
      jitter_stages_.push_back(s);
      if (!(pivot_sq > 0.0))
        throw StageAbort(s, "extend_noise: covariance not factorizable");
    }
    chol_next.row(s).head(s) = row;
    chol_next(s, s) = std::sqrt(pivot_sq);
    chol_ = std::move(chol_next);
    R_ = R_next;

    xi_.resize((s + 1) * S_);
    v_.resize((s + 1) * S_);
    double* xi_s = xi_.data() + s * S_;
    double* v_s = v_.data() + s * S_;
    parallel_for_blocks(S_, shard_count_, [&](std::size_t b, std::size_t lo,
                                              std::size_t hi) {
      if (b == masked_block_) return;
      for (std::size_t i = lo; i < hi; ++i) {
        xi_s[i] = xi_stream_.normal(static_cast<std::uint64_t>(s) * S_ + i);
        double acc = chol_(s, s) * xi_s[i];
        for (int k = 0; k < s; ++k) acc += chol_(s, k) * xi_[k * S_ + i];
        v_s[i] = acc;
      }
    });
  }

  /// x(s+1) = eta(x0 khat + v(s) + sum_r gamma_row[r] x(r); lam_hat).
  void advance_paths(const Eigen::VectorXd& gamma_row, double k_hat_s,
                     double lam_hat) {
    const int s = horizon_;
    if (noise_stages() != s + 1)
      throw std::logic_error("advance_paths: draw v(s) first");
    if (gamma_row.size() != s + 1)
      throw std::invalid_argument("advance_paths: gamma row length mismatch");
    x_.resize((s + 2) * S_);
    const double* v_s = v_.data() + s * S_;
    double* x_next = x_.data() + (s + 1) * S_;
    std::vector<char> bad(block_count(S_), 0);
    parallel_for_blocks(S_, shard_count_, [&](std::size_t b, std::size_t lo,
                                              std::size_t hi) {
      if (b == masked_block_) return;
      for (std::size_t i = lo; i < hi; ++i) {
        double u = x0_[i] * k_hat_s + v_s[i];
        for (int r = 0; r <= s; ++r) u += gamma_row[r] * x_[r * S_ + i];
        if (!std::isfinite(u)) {
          bad[b] = 1;
          return;
        }
        x_next[i] = soft_threshold(u, lam_hat);
      }
    });
    for (char flag : bad)
      if (flag) throw StageAbort(s, "advance_paths: non-finite update");
    ++horizon_;
  }

  /// Extends (m, C, G) to the newest stage. The whitened noise
  /// w = R^{-1} v is recovered per sample by back substitution on the
  /// transposed factor (the forward solve would just return xi).
  void update_order_params(OrderParams& params) const {
    const int p = horizon_;
    if (params.horizon != p - 1)
      throw std::invalid_argument("update_order_params: params lag mismatch");
    if (noise_stages() != p)
      throw std::logic_error("update_order_params: factor out of date");

    const std::size_t nblocks = block_count(S_);
    const int ncols = p + 1;         // C(p, 0..p)
    const int ngs = p;               // G(p, 0..p-1)
    std::vector<double> sums(nblocks * (1 + ncols + ngs), 0.0);
    const double* x_p = stage(p);
    parallel_for_blocks(S_, shard_count_, [&](std::size_t b, std::size_t lo,
                                              std::size_t hi) {
      if (b == masked_block_) return;
      double* out = sums.data() + b * (1 + ncols + ngs);
      Eigen::VectorXd w(p);
      for (std::size_t i = lo; i < hi; ++i) {
        const double xp = x_p[i];
        out[0] += x0_[i] * xp;
        for (int r = 0; r <= p; ++r) out[1 + r] += xp * x_[r * S_ + i];
        for (int r = p - 1; r >= 0; --r) {
          double acc = xi_[r * S_ + i];
          for (int k = r + 1; k < p; ++k) acc -= chol_(k, r) * w[k];
          w[r] = acc / chol_(r, r);
        }
        for (int r = 0; r < ngs; ++r) out[1 + ncols + r] += xp * w[r];
      }
    });

    Eigen::VectorXd total = Eigen::VectorXd::Zero(1 + ncols + ngs);
    for (std::size_t b = 0; b < nblocks; ++b) {
      if (b == masked_block_) continue;
      for (int k = 0; k < total.size(); ++k)
        total[k] += sums[b * (1 + ncols + ngs) + k];
    }
    total /= static_cast<double>(included_);

    OrderParams next;
    next.horizon = p;
    next.m = Eigen::VectorXd::Zero(p + 1);
    next.C = Eigen::MatrixXd::Zero(p + 1, p + 1);
    next.G = Eigen::MatrixXd::Zero(p + 1, p + 1);
    next.m.head(p) = params.m;
    next.C.topLeftCorner(p, p) = params.C;
    next.G.topLeftCorner(p, p) = params.G;
    next.m[p] = total[0];
    for (int r = 0; r <= p; ++r) {
      next.C(p, r) = total[1 + r];
      next.C(r, p) = total[1 + r];
    }
    for (int r = 0; r < ngs; ++r) next.G(p, r) = total[1 + ncols + r];
    params = std::move(next);
  }

  struct StageStats {
    double mse = 0, mse_stderr = 0;
    double msez = 0, msez_stderr = 0;
    std::size_t zero_count = 0;
  };

  /// Direct per-sample error statistics of stage s (block-ordered sums).
  StageStats stage_stats(int s) const {
    const std::size_t nblocks = block_count(S_);
    std::vector<double> sums(nblocks * 4, 0.0);
    const double* xs = stage(s);
    parallel_for_blocks(S_, shard_count_, [&](std::size_t b, std::size_t lo,
                                              std::size_t hi) {
      if (b == masked_block_) return;
      double* out = sums.data() + b * 4;
      for (std::size_t i = lo; i < hi; ++i) {
        const double e = x0_[i] - xs[i];
        out[0] += e * e;
        out[1] += e * e * e * e;
        if (x0_[i] == 0.0) {
          out[2] += xs[i] * xs[i];
          out[3] += xs[i] * xs[i] * xs[i] * xs[i];
        }
      }
    });
    double se = 0, se2 = 0, sz = 0, sz2 = 0;
    for (std::size_t b = 0; b < nblocks; ++b) {
      if (b == masked_block_) continue;
      se += sums[b * 4 + 0];
      se2 += sums[b * 4 + 1];
      sz += sums[b * 4 + 2];
      sz2 += sums[b * 4 + 3];
    }
    StageStats st;
    const auto n = static_cast<double>(included_);
    st.mse = se / n;
    st.mse_stderr = std::sqrt(std::max(0.0, se2 / n - st.mse * st.mse) / n);
    st.zero_count = zero_count_;
    if (zero_count_ > 0) {
      const auto nz = static_cast<double>(zero_count_);
      st.msez = sz / nz;
      st.msez_stderr =
          std::sqrt(std::max(0.0, sz2 / nz - st.msez * st.msez) / nz);
    }
    return st;
  }

  std::size_t block_size(std::size_t b) const {
    const std::size_t lo = b * kReductionBlock;
    return std::min(lo + kReductionBlock, S_) - lo;
  }

 private:
  std::size_t S_;
  int shard_count_;
  std::size_t masked_block_;
  std::size_t included_ = 0;
  int horizon_ = 0;
  std::vector<double> x0_;
  std::vector<double> x_;   // stage-major: x_[s*S + i]
  std::vector<double> xi_;  // standard normals behind v, stage-major
  std::vector<double> v_;   // correlated noise, stage-major
  Eigen::MatrixXd R_ = Eigen::MatrixXd::Zero(0, 0);
  Eigen::MatrixXd chol_ = Eigen::MatrixXd::Zero(0, 0);
  RngStream xi_stream_;
  int jitter_events_ = 0;
  std::vector<int> jitter_stages_;
  std::vector<std::int64_t> block_zero_count_;
  std::size_t zero_count_ = 0;
};

struct GfaOptions {
  SignalPrior prior;
  double delta = 0.5;
  double sigma_omega_sq = 0.0;
  double lambda = 1.0;
  double c = 1.0;
  int T = 1;
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  LambdaInterpretation interpretation = LambdaInterpretation::kOnesRow;
  ScheduleMode mode = ScheduleMode::kMsezSurrogate;
  int shard_count = 1;

  void validate() const {
    prior.validate();
    if (!(delta > 0)) throw std::invalid_argument("gfa: delta must be > 0");
    if (sigma_omega_sq < 0)
      throw std::invalid_argument("gfa: sigma_omega_sq must be >= 0");
    if (!(lambda > 0)) throw std::invalid_argument("gfa: lambda must be > 0");
    if (!(c >= 1)) throw std::invalid_argument("gfa: c must be >= 1");
    if (T < 1) throw std::invalid_argument("gfa: T must be >= 1");
    if (samples < 1) throw std::invalid_argument("gfa: samples must be >= 1");
    if (shard_count < 1)
      throw std::invalid_argument("gfa: shard_count must be >= 1");
  }
};

struct GfaStage {
  int t = 0;
  double sigma_sq = 0;        // rho - 2 m(t) + C(t,t), clamped at 0
  double sigma_sq_raw = 0;    // unclamped value
  double sigma_sq_stderr = 0;
  double msez = 0;
  double msez_stderr = 0;
  double lam_hat = 0;
};

struct GfaPrediction {
  std::vector<GfaStage> stages;
  OrderParams params;
  LambdaInterpretation interpretation = LambdaInterpretation::kOnesRow;
  std::size_t samples = 0;
  int jitter_events = 0;
  std::vector<int> jitter_stages;
  bool aborted = false;
  int aborted_stage = -1;
  std::string abort_reason;
};

namespace detail {

inline GfaPrediction gfa_predict_masked(const GfaOptions& opt,
                                        std::size_t masked_block) {
  opt.validate();
  const double rho = opt.prior.rho;
  EffectiveEnsemble ens(opt.samples, opt.prior, opt.seed, opt.shard_count,
                        masked_block);
  OrderParams params = OrderParams::initial();

  GfaPrediction pred;
  pred.interpretation = opt.interpretation;
  pred.samples = ens.included();

  double sigma_hat_sq = std::max(rho, ThresholdSchedule::kSigmaFloor);
  GfaStage row0;
  row0.t = 0;
  row0.sigma_sq = row0.sigma_sq_raw = rho;  // x(0) = 0 exactly
  row0.lam_hat = opt.lambda * std::sqrt(sigma_hat_sq) / opt.c;
  pred.stages.push_back(row0);

  try {
    for (int s = 0; s < opt.T; ++s) {
      const Eigen::MatrixXd D =
          build_D(params, rho, opt.delta, opt.sigma_omega_sq);
      const Eigen::MatrixXd R = build_R(D, params.G, opt.c, opt.delta);
      ens.extend_noise(R);
      const Eigen::MatrixXd Gamma = build_Gamma(params.G, opt.c, opt.delta);
      const double k_hat =
          effective_gain(params.G, opt.c, opt.delta, s, opt.interpretation);
      const double lam_hat = opt.lambda * std::sqrt(sigma_hat_sq) / opt.c;
      ens.advance_paths(Gamma.row(s).head(s + 1).transpose(), k_hat, lam_hat);
      ens.update_order_params(params);

      const auto st = ens.stage_stats(s + 1);
      GfaStage row;
      row.t = s + 1;
      row.sigma_sq_raw = mse_from_order_params_raw(params, rho, s + 1);
      row.sigma_sq = std::max(0.0, row.sigma_sq_raw);
      row.sigma_sq_stderr = st.mse_stderr;
      row.msez = st.msez;
      row.msez_stderr = st.msez_stderr;
      if (opt.mode == ScheduleMode::kMsezSurrogate) {
        if (st.zero_count > 0) sigma_hat_sq = st.msez;  // else keep previous
      } else {
        sigma_hat_sq = st.mse;
      }
      sigma_hat_sq = std::max(sigma_hat_sq, ThresholdSchedule::kSigmaFloor);
      row.lam_hat = opt.lambda * std::sqrt(sigma_hat_sq) / opt.c;
      pred.stages.push_back(row);
    }
  } catch (const StageAbort& abort) {
    pred.aborted = true;
    pred.aborted_stage = abort.stage;
    pred.abort_reason = abort.what();
  }
  pred.params = params;
  pred.jitter_events = ens.jitter_events();
  pred.jitter_stages = ens.jitter_stages();
  return pred;
}

}  // namespace detail

/// One pass of the stage loop over the full ensemble. Stage stderr fields
/// are the direct per-sample ones; they ignore the feedback of Monte Carlo
/// noise through the kernels and the threshold schedule (see
/// gfa_predict_jackknife for the honest version).
inline GfaPrediction gfa_predict(const GfaOptions& opt) {
  return detail::gfa_predict_masked(opt, SIZE_MAX);
}

/// gfa_predict plus delete-one-block jackknife standard errors, which do
/// capture schedule and kernel feedback. Costs one extra full pass per
/// reduction block.
inline GfaPrediction gfa_predict_jackknife(const GfaOptions& opt) {
  GfaPrediction base = gfa_predict(opt);
  const std::size_t nblocks = block_count(opt.samples);
  if (nblocks < 2 || base.aborted) return base;

  std::vector<GfaPrediction> reps(nblocks);
  std::vector<int> stage_count(nblocks, 0);
  for (std::size_t b = 0; b < nblocks; ++b) {
    reps[b] = detail::gfa_predict_masked(opt, b);
    stage_count[b] = static_cast<int>(reps[b].stages.size());
  }
  for (std::size_t t = 1; t < base.stages.size(); ++t) {
    double mean_s = 0, mean_z = 0;
    int n = 0;
    for (std::size_t b = 0; b < nblocks; ++b) {
      if (stage_count[b] <= static_cast<int>(t)) continue;
      mean_s += reps[b].stages[t].sigma_sq_raw;
      mean_z += reps[b].stages[t].msez;
      ++n;
    }
    if (n < 2) continue;
    mean_s /= n;
    mean_z /= n;
    double var_s = 0, var_z = 0;
    for (std::size_t b = 0; b < nblocks; ++b) {
      if (stage_count[b] <= static_cast<int>(t)) continue;
      var_s += (reps[b].stages[t].sigma_sq_raw - mean_s) *
               (reps[b].stages[t].sigma_sq_raw - mean_s);
      var_z += (reps[b].stages[t].msez - mean_z) *
               (reps[b].stages[t].msez - mean_z);
    }
    const double factor = static_cast<double>(n - 1) / n;
    base.stages[t].sigma_sq_stderr = std::sqrt(factor * var_s);
    base.stages[t].msez_stderr = std::sqrt(factor * var_z);
  }
  return base;
}

}  // namespace csdyn
