#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "pod2c/ilqr.hpp"
#include "pod2c/lqg.hpp"

#include <cmath>

using namespace pod2c;

namespace {

Trajectory zero_nominal(const BlackboxSystem& sys, int T) {
  return rollout(sys, sys.initial_state, std::vector<Vector>(T, Vector::Zero(sys.control_dim)));
}

CostModel scalar_cost(double qz, double ru, double qt, double target = 0.0) {
  CostModel cost;
  cost.Qz = Matrix::Constant(1, 1, qz);
  cost.Ru = Matrix::Constant(1, 1, ru);
  cost.QzT = Matrix::Constant(1, 1, qt);
  cost.z_target = Vector::Constant(1, target);
  return cost;
}

InfoStateLtv scalar_ltv(double a, double b, int T) {
  InfoStateLtv ltv;
  ltv.dims = InfoDims{1, 1, 1};
  ltv.horizon = T;
  ltv.A.assign(T, Matrix::Constant(1, 1, a));
  ltv.B.assign(T, Matrix::Constant(1, 1, b));
  ltv.D.assign(T, Matrix::Constant(1, 1, b));
  return ltv;
}

Trajectory resting_trajectory(int T) {
  Trajectory traj;
  traj.states.assign(T + 1, Vector::Zero(1));
  traj.outputs.assign(T + 1, Vector::Zero(1));
  traj.controls.assign(T, Vector::Zero(1));
  return traj;
}

// State-space LQ optimum for regulation to zero outputs.
double lq_optimal_cost(const LinearSystemSpec& spec, const Vector& x0, const CostModel& cost,
                       int T) {
  const Matrix Qx = spec.C.transpose() * cost.Qz * spec.C;
  const Matrix QxT = spec.C.transpose() * cost.QzT * spec.C;
  const auto ric = oracle::riccati_lqr(std::vector<Matrix>(T, spec.A),
                                       std::vector<Matrix>(T, spec.B), Qx, cost.Ru, QxT);
  return x0.dot(ric.S[0] * x0);
}

}  // namespace

TEST_CASE("episodic cost sums increments plus the terminal term") {
  CostModel cost = scalar_cost(2.0, 3.0, 5.0, 1.0);
  Trajectory traj;
  traj.states.assign(3, Vector::Zero(1));
  traj.outputs = {Vector::Constant(1, 1.0), Vector::Constant(1, 2.0), Vector::Constant(1, 0.0)};
  traj.controls = {Vector::Constant(1, 1.0), Vector::Constant(1, -1.0)};
  // t=0: 2*(0)^2 + 3*1 = 3; t=1: 2*1 + 3*1 = 5; terminal: 5*1 = 5.
  CHECK(episodic_cost(traj, cost) == doctest::Approx(13.0).epsilon(1e-14));
}

TEST_CASE("backward pass reproduces the hand-evaluated scalar gain") {
  // One step from the terminal with A=B=1, Q=R=S=1: the recursion gives a
  // feedback gain of magnitude (1+1)^-1 (1*1*1) = 0.5.
  const InfoStateLtv ltv = scalar_ltv(1.0, 1.0, 1);
  const Trajectory traj = resting_trajectory(1);
  const BackwardResult res = backward_pass(ltv, traj, scalar_cost(1.0, 1.0, 1.0), 1e-9);
  CHECK(res.gains.k[0].cwiseAbs().maxCoeff() < 1e-12);
  CHECK(res.gains.K[0](0, 0) == doctest::Approx(-0.5).epsilon(1e-8));
  CHECK(res.mu < 1e-9);  // decreased on success
}

TEST_CASE("zero cost yields zero feedforward and an inert update") {
  const InfoStateLtv ltv = scalar_ltv(0.9, 0.5, 6);
  Trajectory traj = resting_trajectory(6);
  for (auto& z : traj.outputs) z.setConstant(1.7);  // arbitrary nominal
  CostModel cost = scalar_cost(0.0, 0.0, 0.0);
  const BackwardResult res = backward_pass(ltv, traj, cost, 1e-6);
  for (int t = 0; t < 6; ++t) CHECK(res.gains.k[t].cwiseAbs().maxCoeff() == 0.0);
  // The feedback gain is the regularization pseudo-gain -(B'B)^-1 B'A (mu
  // appears in both Q_uz and Q_uu and cancels); it multiplies on-nominal
  // deviations, which are zero, so the update law leaves the trajectory
  // unchanged.
  const BlackboxSystem sys = make_builtin("double-integrator");
  const Trajectory prev =
      rollout(sys, Vector::Zero(2), std::vector<Vector>(6, Vector::Constant(1, 0.3)));
  CostModel zero2;
  zero2.Qz = Matrix::Zero(1, 1);
  zero2.Ru = Matrix::Zero(1, 1);
  zero2.QzT = Matrix::Zero(1, 1);
  zero2.z_target = Vector::Zero(1);
  IlqrGains gains = res.gains;
  gains.dims = InfoDims{1, 1, 1};
  const ForwardResult fwd = forward_pass(sys, prev, gains, 1.0, zero2);
  for (int t = 0; t < 6; ++t)
    CHECK((fwd.traj.controls[t] - prev.controls[t]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward pass equals the Riccati recursion on exact LQ models") {
  RngStream rng(5);
  const LinearSystemSpec spec = oracle::random_observable_system(rng, 2, 2, 1);
  const int T = 12;
  const InfoStateLtv ltv = assemble(exact_arma_model(spec, 2, T));

  CostModel cost;
  cost.Qz = (Matrix(2, 2) << 1.0, 0.0, 0.0, 0.5).finished();
  cost.Ru = Matrix::Constant(1, 1, 0.3);
  cost.QzT = 4.0 * Matrix::Identity(2, 2);
  cost.z_target = Vector::Zero(2);

  Trajectory traj;
  traj.states.assign(T + 1, Vector::Zero(4));
  traj.outputs.assign(T + 1, Vector::Zero(2));
  traj.controls.assign(T, Vector::Zero(1));

  const BackwardResult res = backward_pass(ltv, traj, cost, 1e-10);
  const auto ric = oracle::riccati_lqr(ltv.A, ltv.B, lift_output_weight(cost.Qz, ltv.dims),
                                       cost.Ru, lift_output_weight(cost.QzT, ltv.dims));
  for (int t = 0; t < T; ++t)
    CHECK((res.gains.K[t] + ric.K[t]).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("regularization recovers from an indefinite Hessian, fails at the ceiling") {
  const InfoStateLtv ltv = scalar_ltv(1.0, 1.0, 2);
  const Trajectory traj = resting_trajectory(2);
  // A negative control weight makes Q_uu indefinite until mu grows.
  const BackwardResult res = backward_pass(ltv, traj, scalar_cost(1.0, -10.0, 1.0), 1e-6);
  CHECK(res.gains.K[0].allFinite());
  CHECK(res.mu > 1e-6);

  CHECK_THROWS_AS(backward_pass(ltv, traj, scalar_cost(1.0, -1e12, 1.0), 1e-6), NumericalError);
}

TEST_CASE("forward pass with zero gains reproduces the nominal bitwise") {
  const BlackboxSystem sys = make_builtin("cartpole");
  const Trajectory prev =
      rollout(sys, sys.initial_state, std::vector<Vector>(15, Vector::Constant(1, 0.7)));
  IlqrGains gains;
  gains.dims = InfoDims{2, 2, 1};
  gains.k.assign(15, Vector::Zero(1));
  gains.K.assign(15, Matrix::Zero(1, 5));
  CostModel cost;
  cost.Qz = Matrix::Identity(2, 2);
  cost.Ru = Matrix::Identity(1, 1);
  cost.QzT = Matrix::Identity(2, 2);
  cost.z_target = Vector::Zero(2);

  const ForwardResult fwd = forward_pass(sys, prev, gains, 0.5, cost);
  REQUIRE(fwd.finite);
  for (std::size_t t = 0; t < prev.states.size(); ++t)
    CHECK((fwd.traj.states[t] - prev.states[t]).cwiseAbs().maxCoeff() == 0.0);
  for (int t = 0; t < 15; ++t)
    CHECK((fwd.traj.controls[t] - prev.controls[t]).cwiseAbs().maxCoeff() == 0.0);

  // alpha = 0 suppresses the feedforward entirely; on-nominal deviations are
  // zero so feedback contributes nothing either.
  gains.k.assign(15, Vector::Constant(1, 3.0));
  const ForwardResult frozen = forward_pass(sys, prev, gains, 0.0, cost);
  for (int t = 0; t < 15; ++t)
    CHECK((frozen.traj.controls[t] - prev.controls[t]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one full-step forward pass solves an LQ problem") {
  RngStream rng(15);
  const LinearSystemSpec spec = oracle::random_observable_system(rng, 2, 2, 1);
  const Vector x0 = rng.gaussian_vector(4);
  const BlackboxSystem sys = make_linear_system(spec, 1.0, x0);
  const int T = 15;

  CostModel cost;
  cost.Qz = Matrix::Identity(2, 2);
  cost.Ru = Matrix::Constant(1, 1, 0.5);
  cost.QzT = 3.0 * Matrix::Identity(2, 2);
  cost.z_target = Vector::Zero(2);

  Trajectory init = zero_nominal(sys, T);
  init.cost = episodic_cost(init, cost);

  const InfoStateLtv ltv = assemble(exact_arma_model(spec, 2, T));
  const BackwardResult bwd = backward_pass(ltv, init, cost, 1e-9);
  const ForwardResult fwd = forward_pass(sys, init, bwd.gains, 1.0, cost);
  REQUIRE(fwd.finite);

  const double optimal = lq_optimal_cost(spec, x0, cost, T);
  CHECK(fwd.traj.cost == doctest::Approx(optimal).epsilon(1e-8));
}

TEST_CASE("optimizer reaches the LQ optimum in at most three iterations") {
  LinearSystemSpec spec;
  spec.A = (Matrix(2, 2) << 1.0, 0.1, 0.0, 1.0).finished();
  spec.B = (Matrix(2, 1) << 0.0, 0.1).finished();
  spec.C = (Matrix(1, 2) << 1.0, 0.0).finished();

  const int T = 20;
  CostModel cost = scalar_cost(1.0, 0.2, 50.0);
  BlackboxSystem sys = make_builtin("double-integrator", {{"dt", 0.1}});
  sys.initial_state = (Vector(2) << 1.0, 0.0).finished();
  Trajectory init = zero_nominal(sys, T);

  SolverConfig cfg;
  cfg.alpha_init = 1.0;  // full Newton steps; LQ needs no backtracking
  SysidBudget budget;
  budget.rollouts = 60;
  budget.sigma_min = 1e-3;
  budget.seed = 77;

  const OptimizeResult res = optimize(sys, init, cost, 2, cfg, budget);
  CHECK(res.log.converged);
  CHECK(res.log.iterations <= 3);
  const double optimal = lq_optimal_cost(spec, sys.initial_state, cost, T);
  CHECK(std::abs(res.trajectory.cost - optimal) / optimal <= 1e-6);
}

TEST_CASE("feedforward is a descent direction for the episodic cost") {
  const BlackboxSystem sys = make_builtin("cartpole");
  const int T = 20;
  const Trajectory nominal =
      rollout(sys, sys.initial_state, std::vector<Vector>(T, Vector::Constant(1, 0.5)));
  CostModel cost;
  cost.Qz = Matrix::Identity(2, 2);
  cost.Ru = 0.01 * Matrix::Identity(1, 1);
  cost.QzT = 20.0 * Matrix::Identity(2, 2);
  cost.z_target = Vector::Zero(2);

  const PerturbationDataset data = collect_perturbations(sys, nominal, 90, 1e-3, 19);
  const InfoStateLtv ltv = assemble(fit_arma_model(data, 2));
  Trajectory traj = nominal;
  traj.cost = episodic_cost(traj, cost);
  const BackwardResult bwd = backward_pass(ltv, traj, cost, 1e-6);

  const double h = 1e-5;
  auto bump = [&](double s) {
    std::vector<Vector> controls = nominal.controls;
    controls[0][0] += s;
    Trajectory t2 = rollout(sys, sys.initial_state, controls);
    return episodic_cost(t2, cost);
  };
  const double grad = (bump(h) - bump(-h)) / (2.0 * h);
  CHECK(bwd.gains.k[0][0] * grad < 0.0);
}

TEST_CASE("accepted iterations decrease the cost monotonically") {
  const BlackboxSystem sys = make_builtin("pendulum", {{"dt", 0.1}});
  CostModel cost;
  cost.Qz = Matrix::Identity(1, 1);
  cost.Ru = 0.01 * Matrix::Identity(1, 1);
  cost.QzT = 30.0 * Matrix::Identity(1, 1);
  cost.z_target = Vector::Zero(1);

  Trajectory init = zero_nominal(sys, 30);
  init.cost = episodic_cost(init, cost);
  SolverConfig cfg;
  cfg.max_iterations = 40;
  SysidBudget budget;
  budget.seed = 21;

  const OptimizeResult res = optimize(sys, init, cost, 2, cfg, budget);
  REQUIRE(res.log.records.size() >= 2);
  for (std::size_t i = 1; i < res.log.records.size(); ++i)
    CHECK(res.log.records[i].cost < res.log.records[i - 1].cost);
  CHECK(res.trajectory.cost < init.cost);
}

TEST_CASE("single-step horizon returns the greedy control") {
  LinearSystemSpec spec;
  const double a = 0.8, b = 0.5;
  spec.A = Matrix::Constant(1, 1, a);
  spec.B = Matrix::Constant(1, 1, b);
  spec.C = Matrix::Identity(1, 1);
  const Vector x0 = Vector::Constant(1, 2.0);
  const BlackboxSystem sys = make_linear_system(spec, 1.0, x0);

  const double qz = 1.0, ru = 0.4, qt = 6.0;
  CostModel cost = scalar_cost(qz, ru, qt);
  Trajectory init = zero_nominal(sys, 1);

  SolverConfig cfg;
  cfg.alpha_init = 1.0;
  SysidBudget budget;
  budget.rollouts = 30;
  budget.sigma_min = 1e-3;
  budget.seed = 5;

  const OptimizeResult res = optimize(sys, init, cost, 1, cfg, budget);
  // minimize ru u^2 + qt (a x0 + b u)^2.
  const double u_star = -qt * a * b * x0[0] / (ru + qt * b * b);
  CHECK(res.trajectory.controls[0][0] == doctest::Approx(u_star).epsilon(1e-6));
}

TEST_CASE("optimize validates its inputs") {
  const BlackboxSystem sys = make_builtin("double-integrator");
  Trajectory init = zero_nominal(sys, 5);
  CostModel cost = scalar_cost(1.0, 1.0, 1.0);
  SolverConfig cfg;
  SysidBudget budget;
  CHECK_THROWS_AS(optimize(sys, init, cost, 0, cfg, budget), std::invalid_argument);
  CHECK_THROWS_AS(optimize(sys, init, cost, 6, cfg, budget), std::invalid_argument);
}
