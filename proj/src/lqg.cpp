#include "pod2c/lqg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace pod2c {

namespace {

void check_symmetric_psd(const Matrix& m, const char* what) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw NumericalError(std::string(what) + ": lost symmetry beyond tolerance");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
    throw NumericalError(std::string(what) + ": lost positive semidefiniteness");
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

bool sane_state(const Vector& x) { return x.allFinite() && x.cwiseAbs().maxCoeff() < 1e12; }

double divergence_cap(const Policy& policy) {
  return 10.0 * std::max(policy.nominal_cost, 1e-6);
}

double max_abs(const std::vector<Vector>& seq) {
  double m = 0.0;
  for (const auto& v : seq) m = std::max(m, v.cwiseAbs().maxCoeff());
  return m;
}

// Measured deviation of the information state: noisy outputs stacked against
// the nominal, applied-control deviations known exactly.
Vector measured_deviation(const std::vector<Vector>& measured,
                          const std::vector<Vector>& applied, const Policy& policy, int t) {
  const Vector Y = stack_info_state(measured, applied, t, policy.dims);
  const Vector Zbar =
      stack_info_state(policy.nominal_outputs, policy.nominal_controls, t, policy.dims);
  return Y - Zbar;
}

EpisodeResult run_feedback(const BlackboxSystem& sys, const Policy& policy,
                           const CostModel& cost, const NoiseScales& noise,
                           bool use_estimator) {
  policy.validate();
  const int T = policy.horizon();
  RngStream rng_w(noise.seed, 1);
  RngStream rng_v(noise.seed, 2);

  EpisodeResult result;
  Trajectory& traj = result.traj;
  traj.states.reserve(T + 1);
  traj.outputs.reserve(T + 1);
  traj.controls.reserve(T);

  std::vector<Vector> measured;
  measured.reserve(T + 1);
  Vector x = policy.x0;
  Vector dZhat = Vector::Zero(policy.dims.d());
  Vector du_prev;
  double total = 0.0;

  for (int t = 0; t < T; ++t) {
    traj.states.push_back(x);
    Vector z = sys.output(x, t);
    traj.outputs.push_back(z);
    Vector z_meas = z;
    if (noise.output_std > 0.0)
      z_meas += noise.output_std * rng_v.gaussian_vector(sys.output_dim);
    measured.push_back(std::move(z_meas));

    const Vector dY = measured_deviation(measured, traj.controls, policy, t);
    Vector feedback_state;
    if (use_estimator) {
      Vector pred = Vector::Zero(policy.dims.d());
      if (t > 0) pred = policy.ltv.A[t - 1] * dZhat + policy.ltv.B[t - 1] * du_prev;
      dZhat = pred + policy.L[t] * (dY - pred);
      feedback_state = dZhat;
    } else {
      feedback_state = dY;
    }

    const Vector u = policy.nominal_controls[t] - policy.K[t] * feedback_state;
    total += cost.incremental(z, u);
    traj.controls.push_back(u);
    du_prev = u - policy.nominal_controls[t];

    Vector u_applied = u;
    if (noise.control_std > 0.0)
      u_applied += noise.control_std * rng_w.gaussian_vector(sys.control_dim);
    x = sys.step(x, u_applied, t);
    if (!sane_state(x) || !std::isfinite(total)) {
      result.diverged = true;
      result.cost = divergence_cap(policy);
      traj.cost = result.cost;
      return result;
    }
  }
  traj.states.push_back(x);
  traj.outputs.push_back(sys.output(x, T));
  total += cost.terminal(traj.outputs.back());
  if (!std::isfinite(total)) {
    result.diverged = true;
    total = divergence_cap(policy);
  }
  traj.cost = total;
  result.cost = total;
  return result;
}

}  // namespace

void Policy::validate() const {
  const int T = horizon();
  require(T >= 1, "Policy: empty horizon");
  require(static_cast<int>(nominal_outputs.size()) == T + 1, "Policy: outputs != horizon + 1");
  require(static_cast<int>(K.size()) == T, "Policy: feedback gain horizon mismatch");
  require(static_cast<int>(L.size()) >= T, "Policy: observer gain horizon mismatch");
  require(ltv.horizon >= T, "Policy: model horizon mismatch");
  for (const auto& m : K)
    require(m.rows() == dims.n_u && m.cols() == dims.d() && m.allFinite(),
            "Policy: bad feedback gain");
  for (const auto& m : L)
    require(m.rows() == dims.d() && m.cols() == dims.d() && m.allFinite(),
            "Policy: bad observer gain");
}

ObserverGains observer_gains(const InfoStateLtv& ltv, const Matrix& W, const Matrix& V,
                             const Matrix& P0) {
  const int d = ltv.dims.d();
  require(V.rows() == d && V.cols() == d, "observer_gains: V must be d x d");
  require(W.rows() == ltv.D[0].cols() && W.cols() == W.rows(),
          "observer_gains: W must match the noise channel width");
  require(P0.rows() == d && P0.cols() == d, "observer_gains: P0 must be d x d");
  {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(V, Eigen::EigenvaluesOnly);
    require(eig.eigenvalues().minCoeff() > 0.0, "observer_gains: V must be positive definite");
  }
  check_symmetric_psd(P0, "observer P0");

  const int T = ltv.horizon;
  ObserverGains out;
  out.P.reserve(T + 1);
  out.L.reserve(T + 1);
  Matrix P = symmetrized(P0);
  for (int t = 0; t <= T; ++t) {
    const Matrix gain = P * (P + V).ldlt().solve(Matrix::Identity(d, d));
    out.P.push_back(P);
    out.L.push_back(gain);
    if (t == T) break;
    Matrix next = ltv.A[t] * (P - gain * P) * ltv.A[t].transpose() +
                  ltv.D[t] * W * ltv.D[t].transpose();
    P = symmetrized(next);
    check_symmetric_psd(P, "observer covariance");
  }
  return out;
}

FeedbackGains feedback_gains(const InfoStateLtv& ltv, const std::vector<Matrix>& Q,
                             const std::vector<Matrix>& R, const Matrix& QT) {
  const int T = ltv.horizon;
  const int d = ltv.dims.d();
  require(static_cast<int>(Q.size()) == T && static_cast<int>(R.size()) == T,
          "feedback_gains: weight sequences must cover the horizon");
  require(QT.rows() == d && QT.cols() == d, "feedback_gains: QT must be d x d");

  FeedbackGains out;
  out.K.resize(T);
  out.S.resize(T + 1);
  out.S[T] = symmetrized(QT);
  check_symmetric_psd(out.S[T], "terminal value matrix");
  for (int t = T - 1; t >= 0; --t) {
    const Matrix& A = ltv.A[t];
    const Matrix& B = ltv.B[t];
    const Matrix& S1 = out.S[t + 1];
    Eigen::LDLT<Matrix> ridge((R[t] + B.transpose() * S1 * B).eval());
    if (ridge.info() != Eigen::Success)
      throw NumericalError("feedback_gains: R + B'SB not factorizable");
    const Matrix gain = ridge.solve(B.transpose() * S1);  // (R + B'SB)^-1 B'S
    out.K[t] = gain * A;
    Matrix S = A.transpose() * S1 * (Matrix::Identity(d, d) - B * gain) * A + Q[t];
    out.S[t] = symmetrized(S);
    if ((S - S.transpose()).cwiseAbs().maxCoeff() >
        1e-8 * std::max(1.0, S.cwiseAbs().maxCoeff()))
      throw NumericalError("feedback_gains: value matrix lost symmetry");
    check_symmetric_psd(out.S[t], "value matrix");
  }
  return out;
}

FeedbackGains feedback_gains(const InfoStateLtv& ltv, const Matrix& Q, const Matrix& R,
                             const Matrix& QT) {
  return feedback_gains(ltv, std::vector<Matrix>(ltv.horizon, Q),
                        std::vector<Matrix>(ltv.horizon, R), QT);
}

Matrix lift_output_weight(const Matrix& Qz, const InfoDims& dims) {
  Matrix Q = Matrix::Zero(dims.d(), dims.d());
  Q.topLeftCorner(dims.n_z, dims.n_z) = Qz;
  return Q;
}

Policy make_policy(const Trajectory& nominal, const InfoStateLtv& ltv, const CostModel& cost,
                   const LqgConfig& cfg) {
  const InfoDims dims = ltv.dims;
  const int d = dims.d();
  const int T = nominal.horizon();
  require(ltv.horizon >= T, "make_policy: model does not cover the horizon");

  Policy policy;
  policy.dims = dims;
  policy.x0 = nominal.states[0];
  policy.nominal_controls = nominal.controls;
  policy.nominal_outputs = nominal.outputs;
  policy.ltv = ltv;
  policy.nominal_cost = episodic_cost(nominal, cost);

  const Matrix Q = lift_output_weight(cost.Qz, dims);
  const Matrix QT = lift_output_weight(cost.QzT, dims);
  policy.K = feedback_gains(ltv, Q, cost.Ru, QT).K;

  const double sigma_w = cfg.design_process_frac * max_abs(nominal.controls);
  const double sigma_v = cfg.design_measurement_frac * max_abs(nominal.outputs);
  const Matrix W =
      sigma_w * sigma_w * Matrix::Identity(ltv.D[0].cols(), ltv.D[0].cols());
  // Measurement noise enters the output blocks only; the control blocks of
  // the measured information state are known exactly, so they get just the
  // invertibility floor.
  Matrix V = cfg.v_floor * Matrix::Identity(d, d);
  V.topLeftCorner(dims.q * dims.n_z, dims.q * dims.n_z) +=
      sigma_v * sigma_v * Matrix::Identity(dims.q * dims.n_z, dims.q * dims.n_z);
  const Matrix P0 = sigma_v * sigma_v * Matrix::Identity(d, d);
  policy.L = observer_gains(ltv, W, V, P0).L;
  return policy;
}

EpisodeResult run_closed_loop(const BlackboxSystem& sys, const Policy& policy,
                              const CostModel& cost, const NoiseScales& noise) {
  return run_feedback(sys, policy, cost, noise, true);
}

EpisodeResult run_lqr_only(const BlackboxSystem& sys, const Policy& policy,
                           const CostModel& cost, const NoiseScales& noise) {
  return run_feedback(sys, policy, cost, noise, false);
}

EpisodeResult run_open_loop(const BlackboxSystem& sys, const Policy& policy,
                            const CostModel& cost, const NoiseScales& noise) {
  EpisodeResult result;
  result.traj = rollout(sys, policy.x0, policy.nominal_controls, noise);
  bool finite = true;
  for (const auto& x : result.traj.states)
    if (!sane_state(x)) finite = false;
  if (!finite) {
    result.diverged = true;
    result.cost = divergence_cap(policy);
  } else {
    // Score on the true (noiseless) outputs, like the feedback runs.
    Trajectory clean = result.traj;
    for (std::size_t t = 0; t < clean.states.size(); ++t)
      clean.outputs[t] = sys.output(clean.states[t], static_cast<int>(t));
    result.cost = episodic_cost(clean, cost);
    if (!std::isfinite(result.cost)) {
      result.diverged = true;
      result.cost = divergence_cap(policy);
    }
  }
  result.traj.cost = result.cost;
  return result;
}

}  // namespace pod2c
