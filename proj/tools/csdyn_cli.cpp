// Command-line front end: simulate / predict-gfa / predict-se / compare /
// plot. All numeric work lives in the headers under include/csdyn; this file
// only wires configuration to library calls and files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "csdyn/harness.hpp"
#include "csdyn/instance_io.hpp"

namespace {

struct Flags {
  std::optional<std::string> config_path;
  std::optional<double> rho, delta, lambda, c, sigma_omega;
  std::optional<int> n, t, trials, shards;
  std::optional<std::size_t> mc_samples;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> algorithm, schedule_mode, lambda_interpretation;
  std::string out = "out";
  bool log_y = false;
};

void add_config_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path,
                  "JSON config file; explicit flags override its values");
  cmd->add_option("--rho", f.rho, "signal density in [0,1]");
  cmd->add_option("--delta", f.delta, "compression rate M/N");
  cmd->add_option("--lambda", f.lambda, "threshold control parameter");
  cmd->add_option("--c", f.c, "relaxation parameter, >= 1");
  cmd->add_option("--sigma-omega", f.sigma_omega,
                  "measurement noise standard deviation");
  cmd->add_option("--n", f.n, "signal dimension N");
  cmd->add_option("--t", f.t, "number of iterations T");
  cmd->add_option("--algorithm", f.algorithm, "AMP | IST | ITA");
  cmd->add_option("--trials", f.trials, "number of simulated instances");
  cmd->add_option("--mc-samples", f.mc_samples,
                  "effective-process sample count");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--schedule-mode", f.schedule_mode, "msez | true-mse");
  cmd->add_option("--lambda-interpretation", f.lambda_interpretation,
                  "gain-determinant reading, A | B");
  cmd->add_option("--shards", f.shards,
                  "worker threads (never changes results)");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_flag("--log-y", f.log_y, "log-scale SVG y axis");
}

csdyn::ExperimentConfig build_config(const Flags& f) {
  csdyn::ExperimentConfig cfg;
  if (f.config_path) {
    std::ifstream is(*f.config_path);
    if (!is)
      throw std::invalid_argument("cannot open config file: " + *f.config_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument(std::string("config parse error: ") +
                                  e.what());
    }
    cfg = csdyn::config_from_json(j);
  }
  if (f.rho) cfg.rho = *f.rho;
  if (f.delta) cfg.delta = *f.delta;
  if (f.lambda) cfg.lambda = *f.lambda;
  if (f.c) cfg.c = *f.c;
  if (f.sigma_omega) cfg.sigma_omega = *f.sigma_omega;
  if (f.n) cfg.n = *f.n;
  if (f.t) cfg.t_max = *f.t;
  if (f.algorithm) cfg.algorithm = csdyn::algorithm_from_name(*f.algorithm);
  if (f.trials) cfg.trials = *f.trials;
  if (f.mc_samples) cfg.mc_samples = *f.mc_samples;
  if (f.seed) cfg.seed = *f.seed;
  if (f.schedule_mode)
    cfg.schedule_mode = csdyn::schedule_mode_from_name(*f.schedule_mode);
  if (f.lambda_interpretation)
    cfg.lambda_interpretation =
        csdyn::lambda_interpretation_from_name(*f.lambda_interpretation);
  if (f.shards) cfg.shard_count = *f.shards;
  cfg.validate();
  return cfg;
}

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

int cmd_compare(const Flags& flags) {
  const auto cfg = build_config(flags);
  const auto report = csdyn::run_experiment(cfg);
  csdyn::EmitOptions opt;
  opt.log_y = flags.log_y;
  const auto files = csdyn::emit_report(report, flags.out, opt);
  std::cout << "regime: " << csdyn::regime_name(report.regime)
            << "  (theory: " << csdyn::regime_name(report.regime_gfa)
            << ")\n"
            << "wrote " << files.csv << ", " << files.json << ", "
            << files.svg << "\n";
  return 0;
}

int cmd_simulate(const Flags& flags) {
  auto cfg = build_config(flags);
  csdyn::ComparisonReport report;
  report.config = cfg;
  std::vector<csdyn::Trajectory> trajectories(cfg.trials);
  const csdyn::SignalPrior prior{cfg.rho};
  csdyn::parallel_for_each(
      static_cast<std::size_t>(cfg.trials), cfg.shard_count,
      [&](std::size_t k) {
        auto inst = csdyn::make_instance(cfg.seed, k, cfg.m(), cfg.n, prior,
                                         cfg.sigma_omega);
        auto schedule = csdyn::ThresholdSchedule::make(
            cfg.lambda, cfg.c, cfg.rho, cfg.schedule_mode);
        trajectories[k] = csdyn::run(cfg.algorithm, inst, cfg.t_max, schedule);
      });
  int available = cfg.t_max;
  for (const auto& traj : trajectories)
    available = std::min(available, static_cast<int>(traj.points.size()) - 1);
  report.truncated = available < cfg.t_max;
  for (int t = 0; t <= available; ++t) {
    csdyn::ComparisonRow row;
    row.t = t;
    double sum = 0, sum2 = 0, zsum = 0, lsum = 0;
    for (const auto& traj : trajectories) {
      sum += traj.points[t].mse;
      sum2 += traj.points[t].mse * traj.points[t].mse;
      zsum += traj.points[t].msez;
      lsum += traj.points[t].lam_hat;
    }
    const double nt = cfg.trials;
    row.mse_sim_mean = sum / nt;
    row.msez_sim_mean = zsum / nt;
    row.lam_hat = lsum / nt;
    if (cfg.trials > 1)
      row.mse_sim_stderr = std::sqrt(
          std::max(0.0, (sum2 - sum * sum / nt) / (nt - 1)) / nt);
    row.mse_gfa = row.mse_gfa_stderr = row.msez_gfa = kNan;
    report.rows.push_back(row);
  }
  for (const auto& traj : trajectories) {
    std::vector<double> series;
    for (const auto& p : traj.points) series.push_back(p.mse);
    report.trial_regimes.push_back(
        traj.diverged ? csdyn::Regime::kDivergence
        : series.size() >= 4 ? csdyn::classify_regime(series)
                             : csdyn::Regime::kIndeterminate);
    if (traj.diverged) ++report.diverged_trials;
  }
  csdyn::EmitOptions opt;
  opt.log_y = flags.log_y;
  opt.basename = "simulate";
  const auto files = csdyn::emit_report(report, flags.out, opt);
  std::cout << "wrote " << files.csv << "\n";
  return 0;
}

int cmd_predict_gfa(const Flags& flags) {
  const auto cfg = build_config(flags);
  csdyn::GfaOptions gfa;
  gfa.prior = csdyn::SignalPrior{cfg.rho};
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
  const auto pred = csdyn::gfa_predict_jackknife(gfa);

  csdyn::ComparisonReport report;
  report.config = cfg;
  for (const auto& st : pred.stages) {
    csdyn::ComparisonRow row;
    row.t = st.t;
    row.mse_sim_mean = row.mse_sim_stderr = row.msez_sim_mean = kNan;
    row.mse_gfa = st.sigma_sq;
    row.mse_gfa_stderr = st.sigma_sq_stderr;
    row.msez_gfa = st.msez;
    row.msez_gfa_stderr = st.msez_stderr;
    row.lam_hat = st.lam_hat;
    report.rows.push_back(row);
  }
  report.gfa_aborted = pred.aborted;
  report.gfa_jitter_events = pred.jitter_events;
  report.gfa_jitter_stages = pred.jitter_stages;
  if (pred.stages.size() >= 4) {
    std::vector<double> series;
    for (const auto& st : pred.stages) series.push_back(st.sigma_sq);
    report.regime_gfa = pred.aborted ? csdyn::Regime::kDivergence
                                     : csdyn::classify_regime(series);
  }
  csdyn::EmitOptions opt;
  opt.log_y = flags.log_y;
  opt.basename = "gfa";
  const auto files = csdyn::emit_report(report, flags.out, opt);

  // Kernel snapshot alongside the report for debugging and golden tests.
  const auto kernel = csdyn::GfaKernel::build(
      pred.params, cfg.rho, cfg.delta, cfg.sigma_omega * cfg.sigma_omega,
      cfg.c, cfg.lambda_interpretation);
  const std::string kpath =
      (std::filesystem::path(flags.out) / "gfa_kernel.json").string();
  std::ofstream os(kpath);
  os << csdyn::kernel_snapshot(pred.params, kernel).dump(2) << "\n";
  if (!os) throw std::runtime_error("cannot write " + kpath);
  std::cout << "wrote " << files.csv << ", " << kpath << "\n";
  return pred.aborted ? 2 : 0;
}

int cmd_predict_se(const Flags& flags) {
  auto cfg = build_config(flags);
  cfg.algorithm = csdyn::Algorithm::kAmp;  // the scalar map models AMP
  const auto se = csdyn::se_run(csdyn::SignalPrior{cfg.rho}, cfg.delta,
                                cfg.sigma_omega * cfg.sigma_omega, cfg.lambda,
                                cfg.c, cfg.t_max, cfg.schedule_mode);
  csdyn::ComparisonReport report;
  report.config = cfg;
  for (const auto& st : se.stages) {
    csdyn::ComparisonRow row;
    row.t = st.t;
    row.mse_sim_mean = row.mse_sim_stderr = row.msez_sim_mean = kNan;
    row.mse_gfa = row.mse_gfa_stderr = row.msez_gfa = kNan;
    row.mse_se = st.sigma_sq;
    row.lam_hat = st.lam_hat;
    report.rows.push_back(row);
  }
  csdyn::EmitOptions opt;
  opt.log_y = flags.log_y;
  opt.basename = "se";
  const auto files = csdyn::emit_report(report, flags.out, opt);
  std::cout << "wrote " << files.csv << "\n";
  return 0;
}

int cmd_plot(const std::string& csv_path, const std::string& out_path,
             bool log_y) {
  std::ifstream is(csv_path);
  if (!is) throw std::invalid_argument("cannot open " + csv_path);
  std::stringstream buf;
  buf << is.rdbuf();
  csdyn::ComparisonReport report;
  report.rows = csdyn::parse_report_csv(buf.str());
  bool any_se = false;
  for (const auto& r : report.rows) any_se |= std::isfinite(r.mse_se);
  report.config.algorithm =
      any_se ? csdyn::Algorithm::kAmp : csdyn::Algorithm::kIst;
  std::ofstream os(out_path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + out_path);
  os << csdyn::report_to_svg(report, log_y);
  if (!os) throw std::runtime_error("write failed: " + out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reconstruction-dynamics lab: simulate AMP/IST/ITA on random "
               "instances and compare against theory predictions"};
  app.require_subcommand(1);

  Flags flags;
  auto* simulate = app.add_subcommand("simulate", "finite-size trials only");
  add_config_flags(simulate, flags);
  auto* gfa = app.add_subcommand(
      "predict-gfa", "effective-process Monte Carlo prediction");
  add_config_flags(gfa, flags);
  auto* se = app.add_subcommand("predict-se", "scalar-map prediction");
  add_config_flags(se, flags);
  auto* compare = app.add_subcommand(
      "compare", "simulation vs predictions, with CSV/JSON/SVG output");
  add_config_flags(compare, flags);

  std::string plot_csv, plot_out = "plot.svg";
  bool plot_logy = false;
  auto* plot = app.add_subcommand("plot", "re-render an emitted CSV as SVG");
  plot->add_option("--csv", plot_csv, "input CSV")->required();
  plot->add_option("--out", plot_out, "output SVG path");
  plot->add_flag("--log-y", plot_logy, "log-scale y axis");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(flags);
    if (gfa->parsed()) return cmd_predict_gfa(flags);
    if (se->parsed()) return cmd_predict_se(flags);
    if (compare->parsed()) return cmd_compare(flags);
    if (plot->parsed()) return cmd_plot(plot_csv, plot_out, plot_logy);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const csdyn::StageAbort& e) {
    std::cerr << "numerical abort at stage " << e.stage << ": " << e.what()
              << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
