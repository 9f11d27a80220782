#include "pod2c/harness.hpp"

#include "pod2c/svg.hpp"

#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <sstream>

namespace pod2c {

namespace {

namespace fs = std::filesystem;

Matrix parse_matrix_text(const std::string& text, const std::string& what) {
  std::vector<std::vector<double>> rows;
  std::istringstream row_stream(text);
  std::string row;
  while (std::getline(row_stream, row, ';')) {
    std::istringstream in(row);
    std::vector<double> vals;
    double v;
    while (in >> v) vals.push_back(v);
    if (!vals.empty()) rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ConfigError(what + ": empty matrix");
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw ConfigError(what + ": ragged matrix rows");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

// A single value scales the identity, n values form a diagonal, n*n values a
// full matrix.
Matrix weight_matrix(const std::vector<double>& vals, int n, const std::string& what) {
  if (vals.empty()) return Matrix::Identity(n, n);
  if (vals.size() == 1) return vals[0] * Matrix::Identity(n, n);
  if (static_cast<int>(vals.size()) == n) {
    Matrix m = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = vals[i];
    return m;
  }
  if (static_cast<int>(vals.size()) == n * n) {
    Matrix m(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = vals[r * n + c];
    return m;
  }
  throw ConfigError(what + ": expected 1, " + std::to_string(n) + " or " +
                    std::to_string(n * n) + " values, got " + std::to_string(vals.size()));
}

Vector to_vector(const std::vector<double>& vals) {
  Vector v(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
  return v;
}

bool terminal_success(const BlackboxSystem& sys, const CostModel& cost,
                      const ExperimentConfig& cfg, const EpisodeResult& episode) {
  if (episode.diverged) return false;
  if (cfg.success_tolerances.empty()) return true;
  const int T = episode.traj.horizon();
  const Vector z = sys.output(episode.traj.states.back(), T);
  for (int i = 0; i < sys.output_dim && i < static_cast<int>(cfg.success_tolerances.size()); ++i) {
    const double tol = cfg.success_tolerances[i];
    if (tol > 0.0 && std::abs(z[i] - cost.z_target[i]) > tol) return false;
  }
  return true;
}

std::string sweep_csv(const EvalSweep& sweep) {
  std::ostringstream out;
  out << "level,open_mean,open_var,open_success,closed_mean,closed_var,closed_success,episodes\n";
  for (const auto& p : sweep.points)
    out << fmt17(p.level) << "," << fmt17(p.open_mean) << "," << fmt17(p.open_var) << ","
        << fmt17(p.open_success) << "," << fmt17(p.closed_mean) << "," << fmt17(p.closed_var)
        << "," << fmt17(p.closed_success) << "," << p.episodes << "\n";
  return out.str();
}

void write_sweep_svg(const std::string& path, const EvalSweep& sweep, const std::string& title,
                     const std::string& x_label) {
  SvgSeries open{"open-loop", "#c0392b", {}, {}, {}};
  SvgSeries closed{"closed-loop", "#2471a3", {}, {}, {}};
  for (const auto& p : sweep.points) {
    open.x.push_back(p.level);
    open.mean.push_back(p.open_mean);
    open.std_dev.push_back(std::sqrt(std::max(p.open_var, 0.0)));
    closed.x.push_back(p.level);
    closed.mean.push_back(p.closed_mean);
    closed.std_dev.push_back(std::sqrt(std::max(p.closed_var, 0.0)));
  }
  write_svg_chart(path, title, x_label, "episodic cost", {open, closed});
}

}  // namespace

ExperimentConfig load_experiment(const Config& cfg) {
  ExperimentConfig e;
  e.system_name = cfg.get_string("system", "name", "");
  if (e.system_name.empty()) throw ConfigError("missing system.name");
  e.system_dt = cfg.get_double("system", "dt", 0.0);
  if (cfg.has("system", "x0")) e.x0 = to_vector(cfg.get_list("system", "x0"));

  if (cfg.has("system", "A")) {
    e.has_linear_spec = true;
    e.linear_spec.A = parse_matrix_text(cfg.get_string("system", "A", ""), "system.A");
    e.linear_spec.B = parse_matrix_text(cfg.get_string("system", "B", ""), "system.B");
    e.linear_spec.C = parse_matrix_text(cfg.get_string("system", "C", ""), "system.C");
    e.linear_spec.validate();
  }
  auto sit = cfg.sections().find("system");
  if (sit != cfg.sections().end()) {
    for (const auto& [key, value] : sit->second) {
      if (key == "name" || key == "x0" || key == "A" || key == "B" || key == "C") continue;
      try {
        e.system_params[key] = std::stod(value);
      } catch (const std::exception&) {
        throw ConfigError("system." + key + " is not a number: '" + value + "'");
      }
    }
  }

  e.horizon = cfg.get_int("experiment", "horizon", 0);
  if (e.horizon < 1) throw ConfigError("experiment.horizon must be >= 1");
  e.seed = static_cast<std::uint64_t>(cfg.get_double("experiment", "seed", 0));
  e.output_dir = cfg.get_string("experiment", "output_dir", "out");

  e.cost_q = cfg.get_list("cost", "q");
  e.cost_r = cfg.get_list("cost", "r");
  e.cost_q_terminal = cfg.get_list("cost", "q_terminal");
  e.cost_target = cfg.get_list("cost", "target");

  e.solver.alpha_init = cfg.get_double("solver", "alpha_init", e.solver.alpha_init);
  e.solver.alpha_factor = cfg.get_double("solver", "alpha_factor", e.solver.alpha_factor);
  e.solver.alpha_floor = cfg.get_double("solver", "alpha_floor", e.solver.alpha_floor);
  e.solver.mu_init = cfg.get_double("solver", "mu_init", e.solver.mu_init);
  e.solver.mu_increase = cfg.get_double("solver", "mu_increase", e.solver.mu_increase);
  e.solver.mu_decrease = cfg.get_double("solver", "mu_decrease", e.solver.mu_decrease);
  e.solver.epsilon = cfg.get_double("solver", "epsilon", e.solver.epsilon);
  e.solver.max_iterations = cfg.get_int("solver", "max_iterations", e.solver.max_iterations);
  require(e.solver.alpha_init > 0.0 && e.solver.alpha_init <= 1.0,
          "solver.alpha_init must be in (0, 1]");
  require(e.solver.mu_init > 0.0 && e.solver.epsilon > 0.0,
          "solver.mu_init and solver.epsilon must be positive");

  const std::string q_str = cfg.get_string("sysid", "q", "auto");
  e.q = q_str == "auto" ? 0 : cfg.get_int("sysid", "q", 0);
  e.q_max = cfg.get_int("sysid", "q_max", e.q_max);
  e.sysid.rollouts = cfg.get_int("sysid", "rollouts", 0);
  e.sysid.sigma_frac = cfg.get_double("sysid", "sigma_frac", e.sysid.sigma_frac);
  e.sysid.sigma_min = cfg.get_double("sysid", "sigma_min", e.sysid.sigma_min);
  e.sysid.refit_every = cfg.get_int("sysid", "refit_every", 1);

  e.lqg.design_process_frac =
      cfg.get_double("lqg", "design_process_noise", e.lqg.design_process_frac);
  e.lqg.design_measurement_frac =
      cfg.get_double("lqg", "design_measurement_noise", e.lqg.design_measurement_frac);
  e.lqg.v_floor = cfg.get_double("lqg", "v_floor", e.lqg.v_floor);

  e.episodes = cfg.get_int("eval", "episodes", e.episodes);
  e.measurement_levels = cfg.get_list("eval", "measurement_levels", e.measurement_levels);
  e.process_levels = cfg.get_list("eval", "process_levels", e.process_levels);
  e.fixed_process = cfg.get_double("eval", "fixed_process", e.fixed_process);
  e.fixed_measurement = cfg.get_double("eval", "fixed_measurement", e.fixed_measurement);
  e.success_tolerances = cfg.get_list("eval", "success_tolerances", e.success_tolerances);
  require(!e.measurement_levels.empty() && !e.process_levels.empty(),
          "eval sweep grids must be non-empty");
  return e;
}

BlackboxSystem build_system(const ExperimentConfig& cfg) {
  BlackboxSystem sys;
  if (cfg.has_linear_spec) {
    sys = make_linear_system(cfg.linear_spec, cfg.system_dt > 0 ? cfg.system_dt : 1.0);
  } else {
    ParamMap params = cfg.system_params;
    if (cfg.system_dt > 0) params["dt"] = cfg.system_dt;
    sys = make_builtin(cfg.system_name, params);
  }
  if (cfg.x0.size() > 0) {
    require(cfg.x0.size() == sys.state_dim, "system.x0 dimension mismatch");
    sys.initial_state = cfg.x0;
  }
  return sys;
}

CostModel build_cost(const ExperimentConfig& cfg, const BlackboxSystem& sys) {
  CostModel cost;
  cost.Qz = weight_matrix(cfg.cost_q, sys.output_dim, "cost.q");
  cost.Ru = weight_matrix(cfg.cost_r, sys.control_dim, "cost.r");
  cost.QzT = weight_matrix(cfg.cost_q_terminal, sys.output_dim, "cost.q_terminal");
  cost.z_target = cfg.cost_target.empty() ? Vector::Zero(sys.output_dim).eval()
                                          : to_vector(cfg.cost_target);
  require(cost.z_target.size() == sys.output_dim, "cost.target dimension mismatch");
  cost.validate(sys.output_dim, sys.control_dim);
  return cost;
}

Trajectory initial_trajectory(const ExperimentConfig& cfg, const BlackboxSystem& sys) {
  std::vector<Vector> controls(cfg.horizon, Vector::Zero(sys.control_dim));
  return rollout(sys, sys.initial_state, controls);
}

int resolve_order(const ExperimentConfig& cfg, const BlackboxSystem& sys) {
  if (cfg.q > 0) return cfg.q;
  if (cfg.has_linear_spec) {
    for (int q = 1; q <= cfg.q_max; ++q)
      if (check_order(cfg.linear_spec, q).sufficient) return q;
    return cfg.q_max;
  }
  SysidBudget budget = cfg.sysid;
  budget.seed = mix_seed(cfg.seed, 101);
  return select_order(sys, initial_trajectory(cfg, sys), cfg.q_max, budget).q;
}

std::string resolve_output_dir(const ExperimentConfig& cfg, const std::string& cli_override) {
  if (!cli_override.empty()) return cli_override;
  if (const char* env = std::getenv("POD2C_OUTPUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

TrainResult run_train(const ExperimentConfig& cfg) {
  const BlackboxSystem sys = build_system(cfg);
  const CostModel cost = build_cost(cfg, sys);
  const Trajectory init = initial_trajectory(cfg, sys);

  TrainResult result;
  result.q = resolve_order(cfg, sys);
  SysidBudget budget = cfg.sysid;
  budget.seed = mix_seed(cfg.seed, 11);
  OptimizeResult opt = optimize(sys, init, cost, result.q, cfg.solver, budget);
  result.trajectory = std::move(opt.trajectory);
  result.log = std::move(opt.log);

  fs::create_directories(cfg.output_dir);
  result.trajectory_path = (fs::path(cfg.output_dir) / "trajectory.txt").string();
  save_trajectory(result.trajectory, sys.dt, result.trajectory_path);

  std::ostringstream csv;
  csv << "iteration,cost,alpha,mu,arma_residual\n";
  for (const auto& rec : result.log.records)
    csv << rec.iteration << "," << fmt17(rec.cost) << "," << fmt17(rec.alpha) << ","
        << fmt17(rec.mu) << "," << fmt17(rec.arma_residual) << "\n";
  result.convergence_path = (fs::path(cfg.output_dir) / "convergence.csv").string();
  write_text_file(result.convergence_path, csv.str());
  return result;
}

SynthesizeResult run_synthesize(const ExperimentConfig& cfg, const std::string& trajectory_path) {
  const BlackboxSystem sys = build_system(cfg);
  const CostModel cost = build_cost(cfg, sys);
  Trajectory nominal = load_trajectory(trajectory_path);

  const int q = resolve_order(cfg, sys);
  SysidBudget budget = cfg.sysid;
  budget.seed = mix_seed(cfg.seed, 22);
  const int rollouts = budget.rollouts > 0
                           ? budget.rollouts
                           : default_rollouts(q, sys.output_dim, sys.control_dim);
  const double sigma = perturbation_sigma(budget, nominal.controls);
  const PerturbationDataset data =
      collect_perturbations(sys, nominal, rollouts, sigma, budget.seed);
  const ArmaModel model = fit_arma_model(data, q);
  const InfoStateLtv ltv = assemble(model);

  SynthesizeResult result;
  result.policy = make_policy(nominal, ltv, cost, cfg.lqg);
  result.policy.dt = sys.dt;
  fs::create_directories(cfg.output_dir);
  result.policy_path = (fs::path(cfg.output_dir) / "policy.txt").string();
  save_policy(result.policy, result.policy_path);
  return result;
}

EvalReport run_evaluate(const ExperimentConfig& cfg, const std::string& policy_path,
                        bool write_svg) {
  const BlackboxSystem sys = build_system(cfg);
  const CostModel cost = build_cost(cfg, sys);
  const Policy policy = load_policy(policy_path);
  require(policy.dims.n_z == sys.output_dim && policy.dims.n_u == sys.control_dim,
          "policy dimensions do not match the configured system");

  double max_u = 0.0, max_z = 0.0;
  for (const auto& u : policy.nominal_controls) max_u = std::max(max_u, u.cwiseAbs().maxCoeff());
  for (const auto& z : policy.nominal_outputs) max_z = std::max(max_z, z.cwiseAbs().maxCoeff());

  EvalReport report;
  auto run_point = [&](const std::string& sweep, double level, double meas_frac,
                       double proc_frac) {
    EvalPoint point;
    point.level = level;
    point.episodes = cfg.episodes;
    double open_sum = 0, open_sq = 0, closed_sum = 0, closed_sq = 0;
    int open_ok = 0, closed_ok = 0;
    for (int e = 0; e < cfg.episodes; ++e) {
      // One stream per episode index, shared across policies and noise
      // levels: paired comparisons, and the open-loop cost depends only on
      // the process-noise realization.
      NoiseScales noise{proc_frac * max_u, meas_frac * max_z,
                        mix_seed(cfg.seed, 0x0eb00000ULL + e)};
      const EpisodeResult open = run_open_loop(sys, policy, cost, noise);
      const EpisodeResult closed = run_closed_loop(sys, policy, cost, noise);
      const bool open_success = terminal_success(sys, cost, cfg, open);
      const bool closed_success = terminal_success(sys, cost, cfg, closed);
      open_sum += open.cost;
      open_sq += open.cost * open.cost;
      closed_sum += closed.cost;
      closed_sq += closed.cost * closed.cost;
      open_ok += open_success;
      closed_ok += closed_success;
      report.episodes.push_back({sweep, level, "open", e, open.cost, open_success, open.diverged});
      report.episodes.push_back(
          {sweep, level, "closed", e, closed.cost, closed_success, closed.diverged});
    }
    const double n = cfg.episodes;
    point.open_mean = open_sum / n;
    point.closed_mean = closed_sum / n;
    point.open_var = n > 1 ? (open_sq - open_sum * open_sum / n) / (n - 1) : 0.0;
    point.closed_var = n > 1 ? (closed_sq - closed_sum * closed_sum / n) / (n - 1) : 0.0;
    point.open_success = open_ok / n;
    point.closed_success = closed_ok / n;
    return point;
  };

  report.measurement_sweep.swept = "measurement";
  report.measurement_sweep.fixed_level = cfg.fixed_process;
  for (double level : cfg.measurement_levels)
    report.measurement_sweep.points.push_back(
        run_point("measurement", level, level, cfg.fixed_process));

  report.process_sweep.swept = "process";
  report.process_sweep.fixed_level = cfg.fixed_measurement;
  for (double level : cfg.process_levels)
    report.process_sweep.points.push_back(
        run_point("process", level, cfg.fixed_measurement, level));

  fs::create_directories(cfg.output_dir);
  report.measurement_csv = (fs::path(cfg.output_dir) / "eval_measurement_sweep.csv").string();
  report.process_csv = (fs::path(cfg.output_dir) / "eval_process_sweep.csv").string();
  report.episodes_csv = (fs::path(cfg.output_dir) / "episodes.csv").string();
  write_text_file(report.measurement_csv, sweep_csv(report.measurement_sweep));
  write_text_file(report.process_csv, sweep_csv(report.process_sweep));
  std::ostringstream rows;
  rows << "sweep,level,policy,episode,cost,success,diverged\n";
  for (const auto& r : report.episodes)
    rows << r.sweep << "," << fmt17(r.level) << "," << r.policy << "," << r.episode << ","
         << fmt17(r.cost) << "," << (r.success ? 1 : 0) << "," << (r.diverged ? 1 : 0) << "\n";
  write_text_file(report.episodes_csv, rows.str());

  if (write_svg) {
    write_sweep_svg((fs::path(cfg.output_dir) / "eval_measurement_sweep.svg").string(),
                    report.measurement_sweep, "Episodic cost vs measurement noise",
                    "measurement noise fraction");
    write_sweep_svg((fs::path(cfg.output_dir) / "eval_process_sweep.svg").string(),
                    report.process_sweep, "Episodic cost vs process noise",
                    "process noise fraction");
  }
  return report;
}

SysidCheckResult run_sysid_check(const ExperimentConfig& cfg, std::ostream& out) {
  const BlackboxSystem sys = build_system(cfg);
  SysidCheckResult result;
  std::ostringstream csv;
  if (cfg.has_linear_spec) {
    result.analytic = true;
    out << "analytic observability check (state dim " << cfg.linear_spec.state_dim() << ")\n";
    out << "q  rank  sufficient\n";
    csv << "q,rank,state_dim,sufficient\n";
    result.recommended_q = cfg.q_max;
    bool found = false;
    for (int q = 1; q <= cfg.q_max; ++q) {
      const OrderReport report = check_order(cfg.linear_spec, q);
      result.reports.push_back(report);
      out << q << "  " << report.rank << "  " << (report.sufficient ? "yes" : "no") << "\n";
      csv << q << "," << report.rank << "," << report.state_dim << ","
          << (report.sufficient ? 1 : 0) << "\n";
      if (report.sufficient && !found) {
        result.recommended_q = q;
        found = true;
      }
    }
  } else {
    SysidBudget budget = cfg.sysid;
    budget.seed = mix_seed(cfg.seed, 101);
    result.selection = select_order(sys, initial_trajectory(cfg, sys), cfg.q_max, budget);
    result.recommended_q = result.selection.q;
    out << "empirical order selection (residual vs q)\n";
    out << "q  residual\n";
    csv << "q,residual\n";
    for (std::size_t i = 0; i < result.selection.residuals.size(); ++i) {
      out << (i + 1) << "  " << result.selection.residuals[i] << "\n";
      csv << (i + 1) << "," << fmt17(result.selection.residuals[i]) << "\n";
    }
    if (result.selection.fallback)
      out << "warning: no order below q_max satisfied the residual test\n";
  }
  out << "recommended q = " << result.recommended_q << "\n";
  fs::create_directories(cfg.output_dir);
  write_text_file((fs::path(cfg.output_dir) / "sysid_check.csv").string(), csv.str());
  return result;
}

}  // namespace pod2c
