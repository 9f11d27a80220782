#include "pod2c/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

// Exit codes: 0 ok, 1 usage/config/artifact error, 2 numerical failure.
constexpr int kUsageError = 1;
constexpr int kNumericalFailure = 2;

pod2c::ExperimentConfig load(const std::string& config_path,
                             const std::vector<std::string>& overrides,
                             const std::string& output_dir) {
  pod2c::Config cfg = pod2c::Config::parse_file(config_path);
  for (const auto& assignment : overrides) cfg.set(assignment);
  pod2c::ExperimentConfig experiment = pod2c::load_experiment(cfg);
  experiment.output_dir = pod2c::resolve_output_dir(experiment, output_dir);
  return experiment;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"POD2C: data-based output-feedback trajectory optimization"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::string trajectory_path;
  std::string policy_path;
  bool svg = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "experiment configuration file")->required();
    sub->add_option("--set", overrides, "override a config key: section.key=value");
    sub->add_option("-o,--output-dir", output_dir,
                    "output directory (overrides POD2C_OUTPUT_DIR and the config)");
  };

  CLI::App* check = app.add_subcommand("sysid-check", "report ARMA order / observability rank");
  add_common(check);

  CLI::App* train = app.add_subcommand("train", "optimize the open-loop trajectory");
  add_common(train);

  CLI::App* synth = app.add_subcommand("synthesize", "fit the LTV model and LQG gains");
  add_common(synth);
  synth->add_option("--trajectory", trajectory_path,
                    "trajectory artifact (default: <output-dir>/trajectory.txt)");

  CLI::App* eval = app.add_subcommand("evaluate", "Monte-Carlo noise sweeps");
  add_common(eval);
  eval->add_option("--policy", policy_path, "policy artifact (default: <output-dir>/policy.txt)");
  eval->add_flag("--svg", svg, "also write SVG line charts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    const pod2c::ExperimentConfig cfg = load(config_path, overrides, output_dir);

    if (check->parsed()) {
      pod2c::run_sysid_check(cfg, std::cout);
      return 0;
    }
    if (train->parsed()) {
      const pod2c::TrainResult result = pod2c::run_train(cfg);
      std::cout << "order q = " << result.q << "\n";
      std::cout << "iterations = " << result.log.iterations
                << (result.log.converged ? " (converged: " : " (not converged: ")
                << result.log.reason << ")\n";
      std::cout << "final cost = " << result.trajectory.cost << "\n";
      std::cout << "wrote " << result.trajectory_path << "\n";
      std::cout << "wrote " << result.convergence_path << "\n";
      if (!result.log.converged) return kNumericalFailure;
      return 0;
    }
    if (synth->parsed()) {
      if (trajectory_path.empty()) trajectory_path = cfg.output_dir + "/trajectory.txt";
      const pod2c::SynthesizeResult result = pod2c::run_synthesize(cfg, trajectory_path);
      std::cout << "policy horizon = " << result.policy.horizon()
                << ", info-state dim = " << result.policy.dims.d() << "\n";
      std::cout << "wrote " << result.policy_path << "\n";
      return 0;
    }
    if (eval->parsed()) {
      if (policy_path.empty()) policy_path = cfg.output_dir + "/policy.txt";
      const pod2c::EvalReport report = pod2c::run_evaluate(cfg, policy_path, svg);
      auto show = [](const pod2c::EvalSweep& sweep) {
        std::cout << sweep.swept << " sweep (fixed " << sweep.fixed_level << "):\n";
        std::cout << "  level  open_mean  closed_mean\n";
        for (const auto& p : sweep.points)
          std::cout << "  " << p.level << "  " << p.open_mean << "  " << p.closed_mean << "\n";
      };
      show(report.measurement_sweep);
      show(report.process_sweep);
      std::cout << "wrote " << report.measurement_csv << "\n";
      std::cout << "wrote " << report.process_csv << "\n";
      std::cout << "wrote " << report.episodes_csv << "\n";
      return 0;
    }
    return kUsageError;
  } catch (const pod2c::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const pod2c::ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return kUsageError;
  } catch (const pod2c::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
}
