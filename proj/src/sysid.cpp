#include "pod2c/sysid.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace pod2c {

namespace {

// Regressor layout at timestep t: [dz_{t-1}; ...; dz_{t-q}; du_{t-1}; ...; du_{t-q}].
int regressor_dim(int q, int n_z, int n_u) { return q * (n_z + n_u); }

Vector regressor(const PerturbationDataset& data, int j, int t, int q) {
  const int n_z = data.output_dim();
  const int n_u = data.control_dim();
  Vector x(regressor_dim(q, n_z, n_u));
  for (int i = 1; i <= q; ++i) x.segment((i - 1) * n_z, n_z) = data.dz[j][t - i];
  for (int i = 1; i <= q; ++i)
    x.segment(q * n_z + (i - 1) * n_u, n_u) = data.du[j][t - i];
  return x;
}

ArmaFit split_coefficients(const Matrix& theta, int q, int n_z, int n_u) {
  ArmaFit fit;
  fit.alpha.reserve(q);
  fit.beta.reserve(q);
  for (int i = 1; i <= q; ++i) fit.alpha.push_back(theta.middleCols((i - 1) * n_z, n_z));
  for (int i = 1; i <= q; ++i)
    fit.beta.push_back(theta.middleCols(q * n_z + (i - 1) * n_u, n_u));
  return fit;
}

double fit_residual(const PerturbationDataset& data, const Matrix& theta, int t, int q) {
  double sq = 0.0;
  for (int j = 0; j < data.rollouts(); ++j) {
    const Vector r = data.dz[j][t] - theta * regressor(data, j, t, q);
    sq += r.squaredNorm();
  }
  return std::sqrt(sq / data.rollouts());
}

double gram_condition(const Matrix& X) {
  const Matrix gram = X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (hi <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / std::max(lo, hi * 1e-18);
}

void check_fit_preconditions(const PerturbationDataset& data, int t, int q) {
  require(q >= 1, "ARMA order must be >= 1");
  require(t >= q, "insufficient history: t < q");
  require(t <= data.horizon(), "timestep beyond dataset horizon");
  require(data.rollouts() > 0, "empty dataset");
}

// Transition product A_{a-1} ... A_b mapping states at time b to time a.
Matrix transition(const LinearSystemSpec& spec, int a, int b) {
  Matrix phi = Matrix::Identity(spec.state_dim(), spec.state_dim());
  for (int s = b; s < a; ++s) phi = spec.a(s) * phi;
  return phi;
}

struct ExactBlocks {
  Matrix obs_stack;   // q*n_z x n_x
  Matrix head;        // C_t * Phi(t, t-q)
  Matrix conv;        // [C_t B_{t-1}, C_t Phi(t, t-1) B_{t-2}, ...]
  Matrix hankel;      // response of the output window to the input window
};

ExactBlocks exact_blocks(const LinearSystemSpec& spec, int q, int t) {
  const int n_x = spec.state_dim();
  const int n_u = spec.control_dim();
  const int n_z = spec.output_dim();
  ExactBlocks blk;
  blk.obs_stack.resize(q * n_z, n_x);
  for (int k = 1; k <= q; ++k)
    blk.obs_stack.middleRows((k - 1) * n_z, n_z) = spec.c(t - k) * transition(spec, t - k, t - q);
  blk.head = spec.c(t) * transition(spec, t, t - q);
  blk.conv.resize(n_z, q * n_u);
  for (int i = 1; i <= q; ++i)
    blk.conv.middleCols((i - 1) * n_u, n_u) =
        spec.c(t) * transition(spec, t, t - i + 1) * spec.b(t - i);
  blk.hankel = Matrix::Zero(q * n_z, q * n_u);
  for (int k = 1; k <= q; ++k)
    for (int i = k + 1; i <= q; ++i)
      blk.hankel.block((k - 1) * n_z, (i - 1) * n_u, n_z, n_u) =
          spec.c(t - k) * transition(spec, t - k, t - i + 1) * spec.b(t - i);
  return blk;
}

std::pair<std::vector<Matrix>, std::vector<Matrix>> exact_from_blocks(const ExactBlocks& blk,
                                                                      int q, int n_z, int n_u,
                                                                      int n_x) {
  Eigen::ColPivHouseholderQR<Matrix> qr(blk.obs_stack);
  if (qr.rank() < n_x)
    throw NumericalError("order q insufficient: observability stack rank-deficient (rank " +
                         std::to_string(qr.rank()) + " < " + std::to_string(n_x) + ")");
  const Matrix pinv =
      Eigen::CompleteOrthogonalDecomposition<Matrix>(blk.obs_stack).pseudoInverse();
  const Matrix alpha_row = blk.head * pinv;
  const Matrix beta_row = blk.conv - alpha_row * blk.hankel;
  std::vector<Matrix> alpha, beta;
  for (int i = 1; i <= q; ++i) alpha.push_back(alpha_row.middleCols((i - 1) * n_z, n_z));
  for (int i = 1; i <= q; ++i) beta.push_back(beta_row.middleCols((i - 1) * n_u, n_u));
  return {std::move(alpha), std::move(beta)};
}

}  // namespace

void ArmaModel::validate() const {
  require(order >= 1, "ArmaModel: order must be >= 1");
  require(static_cast<int>(alpha.size()) == horizon - order + 1 && alpha.size() == beta.size(),
          "ArmaModel: blocks must cover t = order..horizon");
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    require(static_cast<int>(alpha[k].size()) == order && static_cast<int>(beta[k].size()) == order,
            "ArmaModel: need order blocks per timestep");
    for (int i = 0; i < order; ++i) {
      require(alpha[k][i].rows() == n_z && alpha[k][i].cols() == n_z &&
                  alpha[k][i].allFinite(),
              "ArmaModel: bad alpha block");
      require(beta[k][i].rows() == n_z && beta[k][i].cols() == n_u && beta[k][i].allFinite(),
              "ArmaModel: bad beta block");
    }
  }
  for (double r : residual) require(r >= 0.0 && std::isfinite(r), "ArmaModel: bad residual");
}

int default_rollouts(int q, int n_z, int n_u) { return 10 * q * (n_z + n_u); }

double perturbation_sigma(const SysidBudget& budget, const std::vector<Vector>& nominal_controls) {
  double max_u = 0.0;
  for (const auto& u : nominal_controls) max_u = std::max(max_u, u.cwiseAbs().maxCoeff());
  return std::max(budget.sigma_frac * max_u, budget.sigma_min);
}

PerturbationDataset collect_perturbations(const BlackboxSystem& sys, const Trajectory& nominal,
                                          int rollouts, double sigma, std::uint64_t seed) {
  require(rollouts > 0, "empty dataset: need at least one rollout");
  require(sigma > 0.0, "perturbation sigma must be positive");
  const int T = nominal.horizon();
  require(T >= 1, "nominal trajectory is empty");
  require(static_cast<int>(nominal.outputs.size()) == T + 1,
          "nominal trajectory length mismatch: outputs != horizon + 1");
  require(nominal.states.size() == nominal.outputs.size(),
          "nominal trajectory length mismatch: states != outputs");

  PerturbationDataset data;
  data.sigma = sigma;
  data.du.resize(rollouts);
  data.dz.resize(rollouts);
  for (int j = 0; j < rollouts; ++j) {
    RngStream rng(seed, static_cast<std::uint64_t>(j));
    std::vector<Vector> du(T);
    std::vector<Vector> controls(T);
    for (int t = 0; t < T; ++t) {
      du[t] = sigma * rng.gaussian_vector(sys.control_dim);
      controls[t] = nominal.controls[t] + du[t];
    }
    const Trajectory perturbed = rollout(sys, nominal.states[0], controls);
    std::vector<Vector> dz(T + 1);
    for (int t = 0; t <= T; ++t) dz[t] = perturbed.outputs[t] - nominal.outputs[t];
    data.du[j] = std::move(du);
    data.dz[j] = std::move(dz);
  }
  return data;
}

CorrelationSet correlations(const PerturbationDataset& data, int t, int q) {
  check_fit_preconditions(data, t, q);
  const int N = data.rollouts();
  const int n_z = data.output_dim();
  const int n_u = data.control_dim();
  CorrelationSet set;
  set.H.assign(q + 1, Matrix::Zero(n_z, n_u));
  set.R.assign(q + 1, Matrix::Zero(n_z, n_z));
  set.U = Matrix::Zero(n_u, n_u);
  for (int j = 0; j < N; ++j) {
    for (int i = 0; i <= q; ++i) {
      set.R[i] += data.dz[j][t] * data.dz[j][t - i].transpose();
      if (t - i < data.horizon()) set.H[i] += data.dz[j][t] * data.du[j][t - i].transpose();
    }
    for (int i = 1; i <= q; ++i) set.U += data.du[j][t - i] * data.du[j][t - i].transpose();
  }
  for (auto& m : set.R) m /= N;
  for (auto& m : set.H) m /= N;
  set.U /= static_cast<double>(N) * q;
  return set;
}

ArmaFit fit_arma(const PerturbationDataset& data, int t, int q) {
  check_fit_preconditions(data, t, q);
  const int N = data.rollouts();
  const int n_z = data.output_dim();
  const int n_u = data.control_dim();
  const int p = regressor_dim(q, n_z, n_u);
  if (N < p)
    throw NumericalError("sysid: " + std::to_string(N) + " rollouts for " + std::to_string(p) +
                         " regressors; increase the data budget or reduce q");

  Matrix X(N, p);
  Matrix Y(N, n_z);
  for (int j = 0; j < N; ++j) {
    X.row(j) = regressor(data, j, t, q).transpose();
    Y.row(j) = data.dz[j][t].transpose();
  }

  // Minimum-norm least squares; the lambda -> 0 limit of a ridge solve, so
  // structurally collinear regressors (early timesteps, oversized q) get the
  // unbiased min-norm coefficients instead of a ridge-biased solution.
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(X);
  const Matrix theta = cod.solve(Y).transpose();
  if (!theta.allFinite())
    throw NumericalError("sysid: singular regression at t=" + std::to_string(t) +
                         " (q too large or too few rollouts)");

  ArmaFit fit = split_coefficients(theta, q, n_z, n_u);
  fit.residual = fit_residual(data, theta, t, q);
  fit.gram_condition = gram_condition(X);
  fit.rank_deficient = cod.rank() < p;
  return fit;
}

ArmaFit fit_arma_correlation(const PerturbationDataset& data, int t, int q) {
  const CorrelationSet set = correlations(data, t, q);
  const int n_z = data.output_dim();
  const int n_u = data.control_dim();
  const int p = regressor_dim(q, n_z, n_u);

  Matrix cross(n_z, p);
  for (int i = 1; i <= q; ++i) cross.middleCols((i - 1) * n_z, n_z) = set.R[i];
  for (int i = 1; i <= q; ++i) cross.middleCols(q * n_z + (i - 1) * n_u, n_u) = set.H[i];

  // Block Gram under the within-window stationarity assumption: Toeplitz in
  // the output-output part, strictly causal in the output-input part,
  // block-diagonal U in the input-input part.
  Matrix gram = Matrix::Zero(p, p);
  for (int a = 1; a <= q; ++a)
    for (int b = 1; b <= q; ++b) {
      if (b >= a)
        gram.block((a - 1) * n_z, (b - 1) * n_z, n_z, n_z) = set.R[b - a];
      else
        gram.block((a - 1) * n_z, (b - 1) * n_z, n_z, n_z) = set.R[a - b].transpose();
    }
  for (int a = 1; a <= q; ++a)
    for (int b = a; b <= q; ++b) {
      const Matrix& h = set.H[b - a];
      gram.block((a - 1) * n_z, q * n_z + (b - 1) * n_u, n_z, n_u) = h;
      gram.block(q * n_z + (b - 1) * n_u, (a - 1) * n_z, n_u, n_z) = h.transpose();
    }
  for (int a = 1; a <= q; ++a)
    gram.block(q * n_z + (a - 1) * n_u, q * n_z + (a - 1) * n_u, n_u, n_u) = set.U;

  Matrix theta = gram.ldlt().solve(cross.transpose()).transpose();
  if (!theta.allFinite()) {
    const double ridge = 1e-10 * gram.trace() / p + 1e-300;
    theta = (gram + ridge * Matrix::Identity(p, p)).ldlt().solve(cross.transpose()).transpose();
  }
  if (!theta.allFinite())
    throw NumericalError("sysid: singular correlation Gram at t=" + std::to_string(t));

  ArmaFit fit = split_coefficients(theta, q, n_z, n_u);
  fit.residual = fit_residual(data, theta, t, q);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  fit.gram_condition =
      eig.eigenvalues().maxCoeff() / std::max(eig.eigenvalues().minCoeff(), 1e-300);
  return fit;
}

ArmaModel fit_arma_model(const PerturbationDataset& data, int q) {
  require(q >= 1 && q <= data.horizon(), "ARMA order must be in [1, horizon]");
  ArmaModel model;
  model.order = q;
  model.horizon = data.horizon();
  model.n_z = data.output_dim();
  model.n_u = data.control_dim();
  for (int t = q; t <= model.horizon; ++t) {
    ArmaFit fit = fit_arma(data, t, q);
    model.alpha.push_back(std::move(fit.alpha));
    model.beta.push_back(std::move(fit.beta));
    model.residual.push_back(fit.residual);
  }
  return model;
}

std::pair<std::vector<Matrix>, std::vector<Matrix>> arma_exact(const LinearSystemSpec& spec,
                                                               int q) {
  spec.validate();
  require(q >= 1, "ARMA order must be >= 1");
  require(!spec.time_varying(), "arma_exact: use arma_exact_at for time-varying specs");
  // Anchoring at t = q makes all indices valid and, for constant matrices,
  // reproduces the time-invariant construction.
  const ExactBlocks blk = exact_blocks(spec, q, q);
  return exact_from_blocks(blk, q, spec.output_dim(), spec.control_dim(), spec.state_dim());
}

std::pair<std::vector<Matrix>, std::vector<Matrix>> arma_exact_at(const LinearSystemSpec& spec,
                                                                  int q, int t) {
  spec.validate();
  require(q >= 1 && t >= q, "arma_exact_at: need t >= q >= 1");
  if (spec.time_varying()) {
    require(t - 1 < static_cast<int>(spec.At.size()) + 1, "arma_exact_at: t beyond horizon");
    require(t < static_cast<int>(spec.Ct.size()) + 1, "arma_exact_at: missing C_t");
  }
  const ExactBlocks blk = exact_blocks(spec, q, t);
  return exact_from_blocks(blk, q, spec.output_dim(), spec.control_dim(), spec.state_dim());
}

ArmaModel exact_arma_model(const LinearSystemSpec& spec, int q, int horizon) {
  require(horizon >= q, "horizon must be >= q");
  ArmaModel model;
  model.order = q;
  model.horizon = horizon;
  model.n_z = spec.output_dim();
  model.n_u = spec.control_dim();
  if (!spec.time_varying()) {
    auto blocks = arma_exact(spec, q);
    for (int t = q; t <= horizon; ++t) {
      model.alpha.push_back(blocks.first);
      model.beta.push_back(blocks.second);
      model.residual.push_back(0.0);
    }
  } else {
    for (int t = q; t <= horizon; ++t) {
      auto blocks = arma_exact_at(spec, q, t);
      model.alpha.push_back(std::move(blocks.first));
      model.beta.push_back(std::move(blocks.second));
      model.residual.push_back(0.0);
    }
  }
  return model;
}

OrderReport check_order(const LinearSystemSpec& spec, int q) {
  spec.validate();
  require(q >= 1, "ARMA order must be >= 1");
  OrderReport report;
  report.q = q;
  report.state_dim = spec.state_dim();
  if (!spec.time_varying()) {
    const ExactBlocks blk = exact_blocks(spec, q, q);
    report.rank = static_cast<int>(Eigen::ColPivHouseholderQR<Matrix>(blk.obs_stack).rank());
  } else {
    const int t_max = static_cast<int>(spec.At.size());
    require(t_max >= q, "time-varying spec shorter than q");
    int min_rank = report.state_dim;
    for (int t = q; t <= t_max; ++t) {
      const ExactBlocks blk = exact_blocks(spec, q, t);
      min_rank = std::min(
          min_rank, static_cast<int>(Eigen::ColPivHouseholderQR<Matrix>(blk.obs_stack).rank()));
    }
    report.rank = min_rank;
  }
  report.sufficient = report.rank == report.state_dim;
  return report;
}

OrderSelection select_order(const BlackboxSystem& sys, const Trajectory& nominal, int q_max,
                            const SysidBudget& budget) {
  require(q_max >= 1, "q_max must be >= 1");
  const int T = nominal.horizon();
  require(q_max < T, "q_max must be smaller than the horizon");

  const int rollouts = budget.rollouts > 0
                           ? budget.rollouts
                           : default_rollouts(q_max + 1, sys.output_dim, sys.control_dim);
  const double sigma = perturbation_sigma(budget, nominal.controls);
  const PerturbationDataset data =
      collect_perturbations(sys, nominal, rollouts, sigma, budget.seed);

  // Shared sample timesteps, all >= q_max+1 so every order sees the same data.
  std::vector<int> anchors;
  const int lo = q_max + 1;
  const int span = T - lo;
  const int count = std::min(span + 1, 8);
  for (int i = 0; i < count; ++i) anchors.push_back(lo + (span * i) / std::max(count - 1, 1));

  double dz_sq = 0.0;
  int dz_n = 0;
  for (int j = 0; j < data.rollouts(); ++j)
    for (int t : anchors) {
      dz_sq += data.dz[j][t].squaredNorm();
      dz_n += static_cast<int>(data.dz[j][t].size());
    }
  // Residuals below 1e-5 of the deviation scale are fit noise (rounding,
  // linearization leakage), not model error; genuine order deficiencies sit
  // at percent level. The floor keeps ratios of noise-level residuals from
  // flapping around 1.
  const double floor = 1e-5 * std::sqrt(dz_sq / std::max(dz_n, 1)) + 1e-300;

  OrderSelection sel;
  sel.floor = floor;
  for (int q = 1; q <= q_max + 1; ++q) {
    double sum = 0.0;
    for (int t : anchors) sum += fit_arma(data, t, q).residual;
    sel.residuals.push_back(sum / anchors.size());
  }
  sel.q = q_max;
  sel.fallback = true;
  for (int q = 1; q <= q_max; ++q) {
    const double ratio = (sel.residuals[q - 1] + floor) / (sel.residuals[q] + floor);
    if (ratio < 1.05) {
      sel.q = q;
      sel.fallback = false;
      break;
    }
  }
  sel.residuals.pop_back();  // keep the reported curve at q = 1..q_max
  return sel;
}

void dump_dataset_csv(const PerturbationDataset& data, std::ostream& out) {
  const int n_u = data.control_dim();
  const int n_z = data.output_dim();
  out << "rollout,t";
  for (int i = 0; i < n_u; ++i) out << ",du_" << i;
  for (int i = 0; i < n_z; ++i) out << ",dz_" << i;
  out << "\n";
  char buf[32];
  for (int j = 0; j < data.rollouts(); ++j)
    for (int t = 0; t <= data.horizon(); ++t) {
      out << j << "," << t;
      for (int i = 0; i < n_u; ++i) {
        if (t < data.horizon()) {
          std::snprintf(buf, sizeof buf, "%.17g", data.du[j][t][i]);
          out << "," << buf;
        } else {
          out << ",";
        }
      }
      for (int i = 0; i < n_z; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", data.dz[j][t][i]);
        out << "," << buf;
      }
      out << "\n";
    }
}

void dump_arma_csv(const ArmaModel& model, std::ostream& out) {
  out << "t,kind,lag,row,col,value\n";
  char buf[32];
  auto emit = [&](int t, const char* kind, int lag, const Matrix& m) {
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
        out << t << "," << kind << "," << lag << "," << r << "," << c << "," << buf << "\n";
      }
  };
  for (int t = model.order; t <= model.horizon; ++t) {
    for (int i = 1; i <= model.order; ++i) {
      emit(t, "alpha", i, model.alpha_at(t, i));
      emit(t, "beta", i, model.beta_at(t, i));
    }
    std::snprintf(buf, sizeof buf, "%.17g", model.residual_at(t));
    out << t << ",residual,0,0,0," << buf << "\n";
  }
}

}  // namespace pod2c
