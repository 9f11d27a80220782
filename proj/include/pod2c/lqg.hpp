#pragma once

#include "pod2c/ilqr.hpp"

namespace pod2c {

// Closed-loop policy around an optimized nominal: u_t = u*_t - K_t dZhat_t
// with the filtered information-state deviation dZhat driven by observer
// gains L_t over the identified LTV model.
struct Policy {
  InfoDims dims;
  double dt = 0.0;
  Vector x0;
  std::vector<Vector> nominal_controls;  // T
  std::vector<Vector> nominal_outputs;   // T+1
  std::vector<Matrix> K;                 // T
  std::vector<Matrix> L;                 // T+1
  InfoStateLtv ltv;
  double nominal_cost = 0.0;

  int horizon() const { return static_cast<int>(nominal_controls.size()); }
  void validate() const;
};

struct ObserverGains {
  std::vector<Matrix> L;  // T+1
  std::vector<Matrix> P;  // T+1 filter covariances
};

// L_t = P_t (P_t + V)^-1 with the covariance propagated forward:
//   P_{t+1} = A_t [P_t - P_t (P_t + V)^-1 P_t] A_t' + D_t W D_t'.
ObserverGains observer_gains(const InfoStateLtv& ltv, const Matrix& W, const Matrix& V,
                             const Matrix& P0);

struct FeedbackGains {
  std::vector<Matrix> K;  // T
  std::vector<Matrix> S;  // T+1 value matrices
};

// K_t = (R_t + B_t' S_{t+1} B_t)^-1 B_t' S_{t+1} A_t with S propagated
// backward from S_T = Q_T.
FeedbackGains feedback_gains(const InfoStateLtv& ltv, const std::vector<Matrix>& Q,
                             const std::vector<Matrix>& R, const Matrix& QT);
FeedbackGains feedback_gains(const InfoStateLtv& ltv, const Matrix& Q, const Matrix& R,
                             const Matrix& QT);

// Puts an output-space weight on the newest output block of the
// information state, zeros elsewhere.
Matrix lift_output_weight(const Matrix& Qz, const InfoDims& dims);

struct LqgConfig {
  double design_process_frac = 0.1;      // of max |nominal control|
  double design_measurement_frac = 0.1;  // of max |nominal output|
  double v_floor = 1e-10;                // keeps V positive definite
};

// Builds the composite policy: feedback gains from the lifted trajectory
// cost, observer gains from noise covariances at the design noise level.
Policy make_policy(const Trajectory& nominal, const InfoStateLtv& ltv, const CostModel& cost,
                   const LqgConfig& cfg);

struct EpisodeResult {
  Trajectory traj;
  double cost = 0.0;
  bool diverged = false;
};

// Simulates the true system under process/measurement noise with the full
// estimator-feedback loop. Diverged episodes score at ten times the nominal
// cost so Monte-Carlo means stay finite.
EpisodeResult run_closed_loop(const BlackboxSystem& sys, const Policy& policy,
                              const CostModel& cost, const NoiseScales& noise);

// Open-loop replay of the nominal controls under noise.
EpisodeResult run_open_loop(const BlackboxSystem& sys, const Policy& policy,
                            const CostModel& cost, const NoiseScales& noise);

// Noiseless-measurement variant: the raw measured deviation feeds K directly.
EpisodeResult run_lqr_only(const BlackboxSystem& sys, const Policy& policy,
                           const CostModel& cost, const NoiseScales& noise);

}  // namespace pod2c
