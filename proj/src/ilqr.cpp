#include "pod2c/ilqr.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace pod2c {

namespace {

Vector lift_gradient(const Vector& gz, const InfoDims& dims) {
  Vector g = Vector::Zero(dims.d());
  g.head(dims.n_z) = gz;
  return g;
}

Matrix lift_hessian(const Matrix& hzz, const InfoDims& dims) {
  Matrix h = Matrix::Zero(dims.d(), dims.d());
  h.topLeftCorner(dims.n_z, dims.n_z) = hzz;
  return h;
}

bool sane(const Vector& x) { return x.allFinite() && x.cwiseAbs().maxCoeff() < 1e12; }

}  // namespace

void CostModel::validate(int n_z, int n_u) const {
  require(Qz.rows() == n_z && Qz.cols() == n_z, "CostModel: Qz must be n_z x n_z");
  require(QzT.rows() == n_z && QzT.cols() == n_z, "CostModel: QzT must be n_z x n_z");
  require(Ru.rows() == n_u && Ru.cols() == n_u, "CostModel: Ru must be n_u x n_u");
  require(z_target.size() == n_z, "CostModel: target dimension mismatch");
  require((Qz - Qz.transpose()).cwiseAbs().maxCoeff() < 1e-12 &&
              (Ru - Ru.transpose()).cwiseAbs().maxCoeff() < 1e-12,
          "CostModel: weights must be symmetric");
}

double episodic_cost(const Trajectory& traj, const CostModel& cost) {
  double total = 0.0;
  const int T = traj.horizon();
  for (int t = 0; t < T; ++t) total += cost.incremental(traj.outputs[t], traj.controls[t]);
  return total + cost.terminal(traj.outputs[T]);
}

BackwardResult backward_pass(const InfoStateLtv& ltv, const Trajectory& traj,
                             const CostModel& cost, double mu, const SolverConfig& cfg) {
  const int T = traj.horizon();
  require(ltv.horizon >= T, "backward_pass: model does not cover the horizon");
  const InfoDims dims = ltv.dims;
  const int d = dims.d();
  cost.validate(dims.n_z, dims.n_u);

  BackwardResult result;
  IlqrGains& gains = result.gains;
  gains.dims = dims;
  gains.k.resize(T);
  gains.K.resize(T);
  gains.Jz.resize(T + 1);
  gains.Jzz.resize(T + 1);

  gains.Jz[T] = lift_gradient(cost.grad_terminal(traj.outputs[T]), dims);
  gains.Jzz[T] = lift_hessian(cost.hess_terminal(), dims);

  const Matrix c_uu = cost.hess_uu();
  const Matrix c_zz = lift_hessian(cost.hess_zz(), dims);
  const Matrix eye = Matrix::Identity(d, d);

  for (int t = T - 1; t >= 0; --t) {
    const Matrix& A = ltv.A[t];
    const Matrix& B = ltv.B[t];
    const Vector c_z = lift_gradient(cost.grad_z(traj.outputs[t]), dims);
    const Vector c_u = cost.grad_u(traj.controls[t]);
    const Vector& Jz1 = gains.Jz[t + 1];
    const Matrix& Jzz1 = gains.Jzz[t + 1];

    for (;;) {
      const Matrix Jreg = Jzz1 + mu * eye;
      const Matrix Quu = c_uu + B.transpose() * Jreg * B;
      Eigen::LLT<Matrix> llt(0.5 * (Quu + Quu.transpose()));
      if (llt.info() != Eigen::Success) {
        mu *= cfg.mu_increase;
        if (mu > cfg.mu_max)
          throw NumericalError("backward pass irrecoverably ill-conditioned (mu > " +
                               std::to_string(cfg.mu_max) + ")");
        continue;  // restart the current timestep with more regularization
      }
      const Vector Qz = c_z + A.transpose() * Jz1;
      const Vector Qu = c_u + B.transpose() * Jz1;
      const Matrix Qzz = c_zz + A.transpose() * Jzz1 * A;
      const Matrix Quz = B.transpose() * Jreg * A;

      gains.k[t] = -llt.solve(Qu);
      gains.K[t] = -llt.solve(Quz);

      const Matrix& K = gains.K[t];
      const Vector& kff = gains.k[t];
      gains.Jz[t] = Qz + K.transpose() * Quu * kff + K.transpose() * Qu + Quz.transpose() * kff;
      Matrix Jzz = Qzz + K.transpose() * Quu * K + K.transpose() * Quz + Quz.transpose() * K;
      gains.Jzz[t] = 0.5 * (Jzz + Jzz.transpose());
      break;
    }
  }

  result.mu = std::clamp(mu * cfg.mu_decrease, cfg.mu_min, cfg.mu_max);
  return result;
}

ForwardResult forward_pass(const BlackboxSystem& sys, const Trajectory& prev,
                           const IlqrGains& gains, double alpha, const CostModel& cost) {
  const int T = prev.horizon();
  require(static_cast<int>(gains.k.size()) == T, "forward_pass: gain horizon mismatch");
  require(alpha >= 0.0 && alpha <= 1.0, "forward_pass: alpha must be in [0, 1]");
  const InfoDims dims = gains.dims;

  ForwardResult result;
  Trajectory& traj = result.traj;
  traj.states.reserve(T + 1);
  traj.outputs.reserve(T + 1);
  traj.controls.reserve(T);

  Vector x = prev.states[0];
  double total = 0.0;
  for (int t = 0; t < T; ++t) {
    traj.states.push_back(x);
    traj.outputs.push_back(sys.output(x, t));
    const Vector Z = stack_info_state(traj.outputs, traj.controls, t, dims);
    const Vector Zprev = stack_info_state(prev.outputs, prev.controls, t, dims);
    const Vector u = prev.controls[t] + alpha * gains.k[t] + gains.K[t] * (Z - Zprev);
    total += cost.incremental(traj.outputs[t], u);
    traj.controls.push_back(u);
    x = sys.step(x, u, t);
    if (!sane(x) || !std::isfinite(total)) {
      result.finite = false;
      traj.cost = std::numeric_limits<double>::infinity();
      return result;
    }
  }
  traj.states.push_back(x);
  traj.outputs.push_back(sys.output(x, T));
  total += cost.terminal(traj.outputs[T]);
  traj.cost = total;
  result.finite = std::isfinite(total);
  return result;
}

OptimizeResult optimize(const BlackboxSystem& sys, const Trajectory& init, const CostModel& cost,
                        int q, const SolverConfig& cfg, const SysidBudget& budget) {
  const int T = init.horizon();
  require(q >= 1 && q <= T, "optimize: need 1 <= q <= horizon");
  cost.validate(sys.output_dim, sys.control_dim);

  OptimizeResult result;
  result.trajectory = init;
  result.trajectory.cost = episodic_cost(init, cost);
  ConvergenceLog& log = result.log;
  log.records.push_back({0, result.trajectory.cost, 0.0, cfg.mu_init, 0.0});

  const int rollouts =
      budget.rollouts > 0 ? budget.rollouts : default_rollouts(q, sys.output_dim, sys.control_dim);
  double mu = cfg.mu_init;
  InfoStateLtv ltv;
  double model_residual = 0.0;

  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    const Trajectory& nominal = result.trajectory;

    if ((iter - 1) % std::max(budget.refit_every, 1) == 0) {
      const double sigma = perturbation_sigma(budget, nominal.controls);
      const PerturbationDataset data = collect_perturbations(
          sys, nominal, rollouts, sigma, mix_seed(budget.seed, static_cast<std::uint64_t>(iter)));
      const ArmaModel model = fit_arma_model(data, q);
      ltv = assemble(model);
      model_residual = 0.0;
      for (double r : model.residual) model_residual += r;
      model_residual /= model.residual.size();
    }

    BackwardResult bwd = backward_pass(ltv, nominal, cost, mu, cfg);
    mu = bwd.mu;

    const double prev_cost = nominal.cost;
    double alpha = cfg.alpha_init;
    bool accepted = false;
    while (alpha >= cfg.alpha_floor) {
      ForwardResult fwd = forward_pass(sys, nominal, bwd.gains, alpha, cost);
      if (fwd.finite && fwd.traj.cost < prev_cost) {
        result.trajectory = std::move(fwd.traj);
        accepted = true;
        break;
      }
      alpha *= cfg.alpha_factor;
    }

    if (!accepted) {
      log.converged = true;
      log.reason = "line search exhausted: no further cost reduction";
      return result;
    }

    log.iterations = iter;
    log.records.push_back({iter, result.trajectory.cost, alpha, mu, model_residual});

    if (prev_cost <= 0.0 || prev_cost / result.trajectory.cost < 1.0 + cfg.epsilon) {
      log.converged = true;
      log.reason = "cost ratio below 1 + epsilon";
      return result;
    }
  }

  log.converged = false;
  log.reason = "maximum iterations reached";
  return result;
}

}  // namespace pod2c
