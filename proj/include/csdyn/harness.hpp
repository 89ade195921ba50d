#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csdyn/effective_process.hpp"
#include "csdyn/iterative.hpp"
#include "csdyn/model.hpp"
#include "csdyn/parallel.hpp"
#include "csdyn/state_evolution.hpp"
#include "csdyn/svg.hpp"

// Experiment orchestration: run an ensemble of finite-size simulations next
// to the theory predictors and emit CSV / JSON / SVG comparisons.

namespace csdyn {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kCsvSchemaVersion = 1;

struct ExperimentConfig {
  double rho = 0.1;
  double delta = 0.5;
  double lambda = 3.0;
  double c = 3.0;
  double sigma_omega = 0.0;
  int n = 2000;
  int t_max = 8;                         // horizon T
  Algorithm algorithm = Algorithm::kIst;
  int trials = 20;
  std::size_t mc_samples = 100000;
  std::uint64_t seed = 42;
  ScheduleMode schedule_mode = ScheduleMode::kMsezSurrogate;
  LambdaInterpretation lambda_interpretation = LambdaInterpretation::kOnesRow;
  int shard_count = 2;

  int m() const { return static_cast<int>(std::lround(n * delta)); }
  bool rounding_adjusted() const {
    return std::abs(n * delta - m()) > 1e-9;
  }

  void validate() const {
    if (!(rho >= 0 && rho <= 1))
      throw std::invalid_argument("config: rho must lie in [0,1]");
    if (!(delta > 0)) throw std::invalid_argument("config: delta must be > 0");
    if (!(lambda > 0))
      throw std::invalid_argument("config: lambda must be > 0");
    if (!(c >= 1)) throw std::invalid_argument("config: c must be >= 1");
    if (algorithm == Algorithm::kIta && c != 1.0)
      throw std::invalid_argument("config: ITA requires c == 1");
    if (sigma_omega < 0)
      throw std::invalid_argument("config: sigma_omega must be >= 0");
    if (n < 1) throw std::invalid_argument("config: N must be >= 1");
    if (m() < 1) throw std::invalid_argument("config: N*delta must round to >= 1");
    if (t_max < 1) throw std::invalid_argument("config: T must be >= 1");
    if (trials < 1) throw std::invalid_argument("config: trials must be >= 1");
    if (mc_samples < 1)
      throw std::invalid_argument("config: mc_samples must be >= 1");
    if (shard_count < 1)
      throw std::invalid_argument("config: shard_count must be >= 1");
  }
};

inline const char* schedule_mode_name(ScheduleMode m) {
  return m == ScheduleMode::kMsezSurrogate ? "msez" : "true-mse";
}

inline ScheduleMode schedule_mode_from_name(const std::string& s) {
  if (s == "msez") return ScheduleMode::kMsezSurrogate;
  if (s == "true-mse") return ScheduleMode::kTrueMseOracle;
  throw std::invalid_argument("schedule_mode must be msez or true-mse: " + s);
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["rho"] = cfg.rho;
  j["delta"] = cfg.delta;
  j["lambda"] = cfg.lambda;
  j["c"] = cfg.c;
  j["sigma_omega"] = cfg.sigma_omega;
  j["N"] = cfg.n;
  j["T"] = cfg.t_max;
  j["algorithm"] = algorithm_name(cfg.algorithm);
  j["trials"] = cfg.trials;
  j["mc_samples"] = cfg.mc_samples;
  j["seed"] = cfg.seed;
  j["schedule_mode"] = schedule_mode_name(cfg.schedule_mode);
  j["lambda_interpretation"] =
      lambda_interpretation_name(cfg.lambda_interpretation);
  j["shard_count"] = cfg.shard_count;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key == "rho") cfg.rho = it->get<double>();
    else if (key == "delta") cfg.delta = it->get<double>();
    else if (key == "lambda") cfg.lambda = it->get<double>();
    else if (key == "c") cfg.c = it->get<double>();
    else if (key == "sigma_omega") cfg.sigma_omega = it->get<double>();
    else if (key == "N") cfg.n = it->get<int>();
    else if (key == "T") cfg.t_max = it->get<int>();
    else if (key == "algorithm")
      cfg.algorithm = algorithm_from_name(it->get<std::string>());
    else if (key == "trials") cfg.trials = it->get<int>();
    else if (key == "mc_samples") cfg.mc_samples = it->get<std::size_t>();
    else if (key == "seed") cfg.seed = it->get<std::uint64_t>();
    else if (key == "schedule_mode")
      cfg.schedule_mode = schedule_mode_from_name(it->get<std::string>());
    else if (key == "lambda_interpretation")
      cfg.lambda_interpretation =
          lambda_interpretation_from_name(it->get<std::string>());
    else if (key == "shard_count") cfg.shard_count = it->get<int>();
    else
      throw std::invalid_argument("config: unknown key \"" + key + "\"");
  }
  return cfg;
}

// ---- regime classification ----

enum class Regime { kSuccess, kOscillation, kDivergence, kIndeterminate };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::kSuccess: return "success";
    case Regime::kOscillation: return "oscillation";
    case Regime::kDivergence: return "divergence";
    case Regime::kIndeterminate: return "indeterminate";
  }
  return "?";
}

/// Qualitative tag for an error trajectory: divergence if the last finite
/// value exceeds 10x the first, else oscillation if the discrete difference
/// flips sign at least twice, else success if the final value dropped below
/// a tenth of the initial one.
inline Regime classify_regime(const std::vector<double>& mse_series) {
  std::vector<double> s;
  for (double v : mse_series)
    if (std::isfinite(v)) s.push_back(v);
  if (s.size() < 4)
    throw std::invalid_argument("classify_regime: need >= 4 finite entries");
  if (s.back() > 10.0 * s.front()) return Regime::kDivergence;
  int flips = 0;
  int prev_sign = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double d = s[i] - s[i - 1];
    const int sign = d > 0 ? 1 : (d < 0 ? -1 : 0);
    if (sign != 0) {
      if (prev_sign != 0 && sign != prev_sign) ++flips;
      prev_sign = sign;
    }
  }
  if (flips >= 2) return Regime::kOscillation;
  if (s.back() < 0.1 * s.front()) return Regime::kSuccess;
  return Regime::kIndeterminate;
}

// ---- comparison report ----

struct ComparisonRow {
  int t = 0;
  double mse_sim_mean = 0;
  double mse_sim_stderr = 0;
  double msez_sim_mean = 0;
  double msez_sim_stderr = 0;  // not a CSV column; used by tolerance checks
  double mse_gfa = 0;
  double mse_gfa_stderr = 0;
  double msez_gfa = 0;
  double msez_gfa_stderr = 0;  // not a CSV column
  double mse_se = std::numeric_limits<double>::quiet_NaN();  // AMP only
  double lam_hat = 0;  // trial mean of the simulated threshold
};

struct ComparisonReport {
  ExperimentConfig config;
  std::vector<ComparisonRow> rows;
  Regime regime = Regime::kIndeterminate;  // majority over trials
  std::vector<Regime> trial_regimes;
  Regime regime_gfa = Regime::kIndeterminate;
  bool truncated = false;
  int diverged_trials = 0;
  bool gfa_aborted = false;
  int gfa_jitter_events = 0;
  std::vector<int> gfa_jitter_stages;
  double runtime_seconds = 0;
};

/// Simulates `trials` independent instances, runs the effective-process
/// predictor once (jackknife standard errors) and, for AMP, the scalar map;
/// aggregates everything with a fixed reduction order.
inline ComparisonReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();

  std::vector<Trajectory> trajectories(cfg.trials);
  const SignalPrior prior{cfg.rho};
  parallel_for_each(static_cast<std::size_t>(cfg.trials), cfg.shard_count,
                    [&](std::size_t k) {
                      ProblemInstance inst =
                          make_instance(cfg.seed, k, cfg.m(), cfg.n, prior,
                                        cfg.sigma_omega);
                      auto schedule = ThresholdSchedule::make(
                          cfg.lambda, cfg.c, cfg.rho, cfg.schedule_mode);
                      trajectories[k] =
                          run(cfg.algorithm, inst, cfg.t_max, schedule);
                    });

  GfaOptions gfa;
  gfa.prior = prior;
  gfa.delta = cfg.delta;
  gfa.sigma_omega_sq = cfg.sigma_omega * cfg.sigma_omega;
  gfa.lambda = cfg.lambda;
  gfa.c = cfg.c;
  gfa.T = cfg.t_max;
  gfa.samples = cfg.mc_samples;
  gfa.seed = cfg.seed;
  gfa.interpretation = cfg.lambda_interpretation;
  gfa.mode = cfg.schedule_mode;
  gfa.shard_count = cfg.shard_count;
  const GfaPrediction pred = gfa_predict_jackknife(gfa);

  std::optional<SeTrajectory> se;
  if (cfg.algorithm == Algorithm::kAmp)
    se = se_run(prior, cfg.delta, cfg.sigma_omega * cfg.sigma_omega,
                cfg.lambda, cfg.c, cfg.t_max, cfg.schedule_mode);

  ComparisonReport report;
  report.config = cfg;

  int available = cfg.t_max;
  for (const auto& traj : trajectories) {
    available = std::min(available, static_cast<int>(traj.points.size()) - 1);
    if (traj.diverged) ++report.diverged_trials;
  }
  available = std::min(available, static_cast<int>(pred.stages.size()) - 1);
  report.truncated = available < cfg.t_max;

  for (int t = 0; t <= available; ++t) {
    ComparisonRow row;
    row.t = t;
    double sum = 0, sum2 = 0, zsum = 0, zsum2 = 0, lsum = 0;
    for (const auto& traj : trajectories) {
      const auto& p = traj.points[t];
      sum += p.mse;
      sum2 += p.mse * p.mse;
      zsum += p.msez;
      zsum2 += p.msez * p.msez;
      lsum += p.lam_hat;
    }
    const double nt = cfg.trials;
    row.mse_sim_mean = sum / nt;
    row.msez_sim_mean = zsum / nt;
    row.lam_hat = lsum / nt;
    if (cfg.trials > 1) {
      row.mse_sim_stderr = std::sqrt(
          std::max(0.0, (sum2 - sum * sum / nt) / (nt - 1)) / nt);
      row.msez_sim_stderr = std::sqrt(
          std::max(0.0, (zsum2 - zsum * zsum / nt) / (nt - 1)) / nt);
    }
    row.mse_gfa = pred.stages[t].sigma_sq;
    row.mse_gfa_stderr = pred.stages[t].sigma_sq_stderr;
    row.msez_gfa = pred.stages[t].msez;
    row.msez_gfa_stderr = pred.stages[t].msez_stderr;
    if (se) row.mse_se = se->stages[t].sigma_sq;
    report.rows.push_back(row);
  }

  for (const auto& traj : trajectories) {
    std::vector<double> series;
    for (const auto& p : traj.points) series.push_back(p.mse);
    Regime r = Regime::kIndeterminate;
    if (traj.diverged)
      r = Regime::kDivergence;
    else if (series.size() >= 4)
      r = classify_regime(series);
    report.trial_regimes.push_back(r);
  }
  int counts[4] = {0, 0, 0, 0};
  for (Regime r : report.trial_regimes) ++counts[static_cast<int>(r)];
  int best = 3;
  for (int i = 0; i < 4; ++i)
    if (counts[i] > counts[best]) best = i;
  report.regime = static_cast<Regime>(best);

  std::vector<double> gfa_series;
  for (const auto& st : pred.stages) gfa_series.push_back(st.sigma_sq);
  if (pred.aborted)
    report.regime_gfa = Regime::kDivergence;
  else if (gfa_series.size() >= 4)
    report.regime_gfa = classify_regime(gfa_series);
  report.gfa_aborted = pred.aborted;
  report.gfa_jitter_events = pred.jitter_events;
  report.gfa_jitter_stages = pred.jitter_stages;

  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

// ---- emission ----

namespace detail {

/// Shortest round-trip decimal form; keeps CSV output byte-stable.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline constexpr const char* kCsvHeader =
    "t,mse_sim_mean,mse_sim_stderr,msez_sim_mean,mse_gfa,mse_gfa_stderr,"
    "msez_gfa,mse_se,lam_hat";

inline std::string report_to_csv(const ComparisonReport& report) {
  std::string out = std::string(kCsvHeader) + "\n";
  const bool with_se = report.config.algorithm == Algorithm::kAmp;
  for (const auto& r : report.rows) {
    out += std::to_string(r.t);
    out += ',';
    out += detail::format_double(r.mse_sim_mean);
    out += ',';
    out += detail::format_double(r.mse_sim_stderr);
    out += ',';
    out += detail::format_double(r.msez_sim_mean);
    out += ',';
    out += detail::format_double(r.mse_gfa);
    out += ',';
    out += detail::format_double(r.mse_gfa_stderr);
    out += ',';
    out += detail::format_double(r.msez_gfa);
    out += ',';
    if (with_se) out += detail::format_double(r.mse_se);
    out += ',';
    out += detail::format_double(r.lam_hat);
    out += '\n';
  }
  return out;
}

/// Parses a CSV produced by report_to_csv back into rows (inverse of the
/// serializer for the columns it carries).
inline std::vector<ComparisonRow> parse_report_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("csv: empty input");
  if (line != kCsvHeader)
    throw std::runtime_error("csv: unexpected header: " + line);
  std::vector<ComparisonRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 9)
      throw std::runtime_error("csv: bad row: " + line);
    auto num = [](const std::string& f) {
      if (f.empty()) return std::numeric_limits<double>::quiet_NaN();
      if (f == "nan") return std::numeric_limits<double>::quiet_NaN();
      return std::stod(f);
    };
    ComparisonRow r;
    r.t = std::stoi(fields[0]);
    r.mse_sim_mean = num(fields[1]);
    r.mse_sim_stderr = num(fields[2]);
    r.msez_sim_mean = num(fields[3]);
    r.mse_gfa = num(fields[4]);
    r.mse_gfa_stderr = num(fields[5]);
    r.msez_gfa = num(fields[6]);
    r.mse_se = num(fields[7]);
    r.lam_hat = num(fields[8]);
    rows.push_back(r);
  }
  return rows;
}

inline nlohmann::json report_to_json(const ComparisonReport& report) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["csv_schema_version"] = kCsvSchemaVersion;
  j["config"] = config_to_json(report.config);
  j["config"]["M"] = report.config.m();
  j["config"]["rounding_adjusted"] = report.config.rounding_adjusted();
  j["regime"] = regime_name(report.regime);
  j["regime_gfa"] = regime_name(report.regime_gfa);
  nlohmann::json trials = nlohmann::json::array();
  for (Regime r : report.trial_regimes) trials.push_back(regime_name(r));
  j["trial_regimes"] = trials;
  j["truncated"] = report.truncated;
  j["diverged_trials"] = report.diverged_trials;
  j["gfa_aborted"] = report.gfa_aborted;
  j["gfa_jitter_events"] = report.gfa_jitter_events;
  j["gfa_jitter_stages"] = report.gfa_jitter_stages;
  j["lambda_interpretation"] =
      lambda_interpretation_name(report.config.lambda_interpretation);
  j["runtime_seconds"] = report.runtime_seconds;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row;
    row["t"] = r.t;
    row["mse_sim_mean"] = r.mse_sim_mean;
    row["mse_sim_stderr"] = r.mse_sim_stderr;
    row["msez_sim_mean"] = r.msez_sim_mean;
    row["msez_sim_stderr"] = r.msez_sim_stderr;
    row["mse_gfa"] = r.mse_gfa;
    row["mse_gfa_stderr"] = r.mse_gfa_stderr;
    row["msez_gfa"] = r.msez_gfa;
    row["msez_gfa_stderr"] = r.msez_gfa_stderr;
    if (report.config.algorithm == Algorithm::kAmp) row["mse_se"] = r.mse_se;
    row["lam_hat"] = r.lam_hat;
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j;
}

struct EmitOptions {
  bool log_y = false;
  std::string basename = "compare";
};

struct EmittedFiles {
  std::string csv;
  std::string json;
  std::string svg;
};

inline std::string report_to_svg(const ComparisonReport& report,
                                 bool log_y = false) {
  ChartSeries mse_sim{"MSE (sim)", "#d62728", {}, {}};
  ChartSeries msez_sim{"MSEZ (sim)", "#ff9896", {}, {}};
  ChartSeries mse_gfa{"MSE (theory)", "#1f77b4", {}, {}};
  ChartSeries msez_gfa{"MSEZ (theory)", "#aec7e8", {}, {}};
  ChartSeries mse_se{"MSE (scalar map)", "#2ca02c", {}, {}};
  for (const auto& r : report.rows) {
    mse_sim.x.push_back(r.t);
    mse_sim.y.push_back(r.mse_sim_mean);
    msez_sim.x.push_back(r.t);
    msez_sim.y.push_back(r.msez_sim_mean);
    mse_gfa.x.push_back(r.t);
    mse_gfa.y.push_back(r.mse_gfa);
    msez_gfa.x.push_back(r.t);
    msez_gfa.y.push_back(r.msez_gfa);
    mse_se.x.push_back(r.t);
    mse_se.y.push_back(r.mse_se);
  }
  std::vector<ChartSeries> series{mse_sim, msez_sim, mse_gfa, msez_gfa};
  if (report.config.algorithm == Algorithm::kAmp) series.push_back(mse_se);
  ChartOptions opt;
  std::ostringstream title;
  title << algorithm_name(report.config.algorithm) << "  rho="
        << report.config.rho << " delta=" << report.config.delta
        << " lambda=" << report.config.lambda << " c=" << report.config.c;
  opt.title = title.str();
  opt.y_label = log_y ? "error (log)" : "error";
  opt.log_y = log_y;
  return svg_line_chart(series, opt);
}

/// Writes <basename>.csv/.json/.svg under `dir` and returns the paths.
inline EmittedFiles emit_report(const ComparisonReport& report,
                                const std::string& dir,
                                const EmitOptions& opt = {}) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw std::runtime_error("emit_report: cannot create " + dir + ": " +
                             ec.message());
  EmittedFiles files;
  auto write = [&](const std::string& name, const std::string& content) {
    const std::string path = (fs::path(dir) / name).string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("emit_report: cannot open " + path);
    os << content;
    if (!os) throw std::runtime_error("emit_report: write failed: " + path);
    return path;
  };
  files.csv = write(opt.basename + ".csv", report_to_csv(report));
  files.json = write(opt.basename + ".json", report_to_json(report).dump(2) + "\n");
  files.svg = write(opt.basename + ".svg", report_to_svg(report, opt.log_y));
  return files;
}

}  // namespace csdyn
