#pragma once

#include "pod2c/infostate.hpp"

#include <string>

namespace pod2c {

// Quadratic tracking cost on the observed outputs and controls:
//   c(z, u) = (z - z*)' Qz (z - z*) + u' Ru u,   phi(z) = (z - z*)' QzT (z - z*).
// In the information state the weight sits on the newest output block only.
struct CostModel {
  Matrix Qz;
  Matrix Ru;
  Matrix QzT;
  Vector z_target;

  double incremental(const Vector& z, const Vector& u) const {
    const Vector e = z - z_target;
    return e.dot(Qz * e) + u.dot(Ru * u);
  }
  double terminal(const Vector& z) const {
    const Vector e = z - z_target;
    return e.dot(QzT * e);
  }
  Vector grad_z(const Vector& z) const { return 2.0 * Qz * (z - z_target); }
  Matrix hess_zz() const { return 2.0 * Qz; }
  Vector grad_u(const Vector& u) const { return 2.0 * Ru * u; }
  Matrix hess_uu() const { return 2.0 * Ru; }
  Vector grad_terminal(const Vector& z) const { return 2.0 * QzT * (z - z_target); }
  Matrix hess_terminal() const { return 2.0 * QzT; }
  void validate(int n_z, int n_u) const;
};

double episodic_cost(const Trajectory& traj, const CostModel& cost);

struct SolverConfig {
  double alpha_init = 0.3;
  double alpha_factor = 0.5;
  double alpha_floor = 1e-3;
  double mu_init = 1e-6;
  double mu_increase = 10.0;
  double mu_decrease = 0.5;
  double mu_min = 1e-12;
  double mu_max = 1e10;
  double epsilon = 1e-3;  // outer-loop cost-ratio convergence coefficient
  int max_iterations = 100;
};

struct IlqrGains {
  InfoDims dims;
  std::vector<Vector> k;    // T feedforwards
  std::vector<Matrix> K;    // T feedback gains, n_u x d
  std::vector<Vector> Jz;   // T+1 value gradients
  std::vector<Matrix> Jzz;  // T+1 value Hessians
};

struct BackwardResult {
  IlqrGains gains;
  double mu = 0.0;  // regularization after the pass (decreased on success)
};

// Value recursion over the identified information-state LTV. If any Q_uu is
// not positive definite the current timestep is retried with a larger mu.
BackwardResult backward_pass(const InfoStateLtv& ltv, const Trajectory& traj,
                             const CostModel& cost, double mu, const SolverConfig& cfg = {});

struct ForwardResult {
  Trajectory traj;
  bool finite = true;
};

// Rolls the true system forward under
//   u_t = u_t_prev + alpha k_t + K_t (Z_t - Z_t_prev)
// where Z_t stacks the outputs observed so far. simulate-one-step is the
// only system access.
ForwardResult forward_pass(const BlackboxSystem& sys, const Trajectory& prev,
                           const IlqrGains& gains, double alpha, const CostModel& cost);

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double alpha = 0.0;
  double mu = 0.0;
  double arma_residual = 0.0;  // mean fit residual over the horizon
};

struct ConvergenceLog {
  std::vector<IterationRecord> records;  // records[0] is the initial trajectory
  bool converged = false;
  std::string reason;
  int iterations = 0;  // accepted outer iterations
};

struct OptimizeResult {
  Trajectory trajectory;
  ConvergenceLog log;
};

// The full loop: {collect perturbations, fit ARMA, assemble LTV, backward
// pass, line-searched forward pass} until the cost-ratio test passes.
OptimizeResult optimize(const BlackboxSystem& sys, const Trajectory& init, const CostModel& cost,
                        int q, const SolverConfig& cfg, const SysidBudget& budget);

}  // namespace pod2c
