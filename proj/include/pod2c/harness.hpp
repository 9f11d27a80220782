#pragma once

#include "pod2c/artifacts.hpp"
#include "pod2c/config.hpp"

#include <iosfwd>

namespace pod2c {

// Typed view of the experiment configuration file.
struct ExperimentConfig {
  // [system]
  std::string system_name;
  ParamMap system_params;
  bool has_linear_spec = false;
  LinearSystemSpec linear_spec;
  double system_dt = 0.0;
  Vector x0;  // empty = system default

  // [experiment]
  int horizon = 0;
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  // [cost] is resolved against the built system's dimensions.
  std::vector<double> cost_q, cost_r, cost_q_terminal, cost_target;

  // [solver], [sysid], [lqg]
  SolverConfig solver;
  SysidBudget sysid;
  int q = 0;  // 0 = select automatically
  int q_max = 4;
  LqgConfig lqg;

  // [eval]
  int episodes = 200;
  std::vector<double> measurement_levels{0.0, 0.05, 0.10, 0.15, 0.20};
  std::vector<double> process_levels{0.0, 0.05, 0.10, 0.15, 0.20};
  double fixed_process = 0.10;
  double fixed_measurement = 0.10;
  std::vector<double> success_tolerances;  // per output channel, <= 0 disables
};

ExperimentConfig load_experiment(const Config& cfg);

BlackboxSystem build_system(const ExperimentConfig& cfg);
CostModel build_cost(const ExperimentConfig& cfg, const BlackboxSystem& sys);

// Initial trajectory for training: zero controls rolled from x0.
Trajectory initial_trajectory(const ExperimentConfig& cfg, const BlackboxSystem& sys);

// ARMA order from config, or selected from data around the initial nominal.
int resolve_order(const ExperimentConfig& cfg, const BlackboxSystem& sys);

struct TrainResult {
  Trajectory trajectory;
  ConvergenceLog log;
  int q = 0;
  std::string trajectory_path;
  std::string convergence_path;
};
TrainResult run_train(const ExperimentConfig& cfg);

struct SynthesizeResult {
  Policy policy;
  std::string policy_path;
};
SynthesizeResult run_synthesize(const ExperimentConfig& cfg, const std::string& trajectory_path);

struct EvalPoint {
  double level = 0.0;
  double open_mean = 0.0, open_var = 0.0, open_success = 0.0;
  double closed_mean = 0.0, closed_var = 0.0, closed_success = 0.0;
  int episodes = 0;
};

struct EpisodeRow {
  std::string sweep;
  double level = 0.0;
  std::string policy;  // "open" or "closed"
  int episode = 0;
  double cost = 0.0;
  bool success = false;
  bool diverged = false;
};

struct EvalSweep {
  std::string swept;  // "measurement" or "process"
  double fixed_level = 0.0;
  std::vector<EvalPoint> points;
};

struct EvalReport {
  EvalSweep measurement_sweep;
  EvalSweep process_sweep;
  std::vector<EpisodeRow> episodes;
  std::string measurement_csv, process_csv, episodes_csv;
};

EvalReport run_evaluate(const ExperimentConfig& cfg, const std::string& policy_path,
                        bool write_svg);

struct SysidCheckResult {
  bool analytic = false;
  std::vector<OrderReport> reports;  // analytic path, q = 1..q_max
  OrderSelection selection;          // empirical path
  int recommended_q = 0;
};
SysidCheckResult run_sysid_check(const ExperimentConfig& cfg, std::ostream& out);

// Output directory precedence: explicit override > POD2C_OUTPUT_DIR > config.
std::string resolve_output_dir(const ExperimentConfig& cfg, const std::string& cli_override);

}  // namespace pod2c
