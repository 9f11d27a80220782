#pragma once

#include "pod2c/dynamics.hpp"

#include <iosfwd>
#include <utility>

namespace pod2c {

// Per-timestep ARMA coefficient blocks. For each fitted timestep t in
// [order, horizon], alpha_at(t, i) multiplies dz_{t-i} and beta_at(t, i)
// multiplies du_{t-i}, i = 1..order.
struct ArmaModel {
  int order = 0;
  int horizon = 0;
  int n_z = 0;
  int n_u = 0;
  std::vector<std::vector<Matrix>> alpha;  // [t - order][i - 1]
  std::vector<std::vector<Matrix>> beta;
  std::vector<double> residual;  // per fitted timestep, RMS over samples

  const Matrix& alpha_at(int t, int i) const { return alpha.at(t - order).at(i - 1); }
  const Matrix& beta_at(int t, int i) const { return beta.at(t - order).at(i - 1); }
  double residual_at(int t) const { return residual.at(t - order); }
  void validate() const;
};

// Input/output deviations of N perturbed rollouts around a nominal
// trajectory: dz[j][t] = z^(j)_t - zbar_t for t = 0..T,
// du[j][t] for t = 0..T-1.
struct PerturbationDataset {
  double sigma = 0.0;
  std::vector<std::vector<Vector>> du;
  std::vector<std::vector<Vector>> dz;

  int rollouts() const { return static_cast<int>(du.size()); }
  int horizon() const { return du.empty() ? 0 : static_cast<int>(du[0].size()); }
  int control_dim() const { return du.empty() ? 0 : static_cast<int>(du[0][0].size()); }
  int output_dim() const { return dz.empty() ? 0 : static_cast<int>(dz[0][0].size()); }
};

// Empirical correlation blocks anchored at one timestep:
//   H[i] = (1/N) sum_j dz_t du_{t-i}^T,  R[i] = (1/N) sum_j dz_t dz_{t-i}^T,
// for i = 0..q, and U the input covariance averaged over the lag window.
struct CorrelationSet {
  std::vector<Matrix> H;
  std::vector<Matrix> R;
  Matrix U;
};

struct ArmaFit {
  std::vector<Matrix> alpha;  // i = 1..q
  std::vector<Matrix> beta;
  double residual = 0.0;
  double gram_condition = 0.0;
  bool rank_deficient = false;
};

struct OrderReport {
  int q = 0;
  int rank = 0;
  int state_dim = 0;
  bool sufficient = false;
};

struct OrderSelection {
  int q = 0;
  bool fallback = false;          // set when no q below q_max satisfied the test
  std::vector<double> residuals;  // residuals[i] is the aggregate residual for q = i+1
  double floor = 0.0;             // added to both sides of the ratio test
};

struct SysidBudget {
  int rollouts = 0;          // 0 = auto: 10 regression samples per unknown
  double sigma_frac = 1e-2;  // perturbation std as a fraction of max |nominal control|
  double sigma_min = 1e-3;   // absolute floor, used when the nominal is all zero
  std::uint64_t seed = 0;
  int refit_every = 1;       // re-identify every k-th optimizer iteration
};

int default_rollouts(int q, int n_z, int n_u);
double perturbation_sigma(const SysidBudget& budget, const std::vector<Vector>& nominal_controls);

// Runs N rollouts around the nominal, each with fresh i.i.d. N(0, sigma^2 I)
// control perturbations at every step, and records output deviations.
PerturbationDataset collect_perturbations(const BlackboxSystem& sys, const Trajectory& nominal,
                                          int rollouts, double sigma, std::uint64_t seed);

CorrelationSet correlations(const PerturbationDataset& data, int t, int q);

// Least-squares ARMA coefficients at timestep t: minimizes
// sum_j |dz_t - sum_i alpha_i dz_{t-i} - sum_i beta_i du_{t-i}|^2.
ArmaFit fit_arma(const PerturbationDataset& data, int t, int q);

// The correlation-matrix fast path; equivalent to fit_arma for large N when
// the perturbation process is stationary across the lag window.
ArmaFit fit_arma_correlation(const PerturbationDataset& data, int t, int q);

// Fits every timestep t = q..T.
ArmaModel fit_arma_model(const PerturbationDataset& data, int q);

// Analytic ARMA blocks that reproduce a linear system exactly (requires the
// q-step observability stack to have full column rank). For time-varying
// specs the blocks at timestep t are built from the transition products.
std::pair<std::vector<Matrix>, std::vector<Matrix>> arma_exact(const LinearSystemSpec& spec, int q);
std::pair<std::vector<Matrix>, std::vector<Matrix>> arma_exact_at(const LinearSystemSpec& spec,
                                                                  int q, int t);
ArmaModel exact_arma_model(const LinearSystemSpec& spec, int q, int horizon);

// Rank of the q-step observability stack; sufficiency means an exact ARMA
// fit of order q exists. Time-varying specs report the minimum rank over
// all valid anchors.
OrderReport check_order(const LinearSystemSpec& spec, int q);

// Fits orders 1..q_max on shared data at sampled timesteps and picks the
// smallest q whose residual stops improving.
OrderSelection select_order(const BlackboxSystem& sys, const Trajectory& nominal, int q_max,
                            const SysidBudget& budget);

void dump_dataset_csv(const PerturbationDataset& data, std::ostream& out);
void dump_arma_csv(const ArmaModel& model, std::ostream& out);

}  // namespace pod2c
