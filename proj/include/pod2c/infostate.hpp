#pragma once

#include "pod2c/sysid.hpp"

#include <iosfwd>

namespace pod2c {

// Stacked information state Z_t = (z_t, ..., z_{t-q+1}, u_{t-1}, ..., u_{t-q+1}):
// q output blocks newest-first, then q-1 control blocks newest-first.
struct InfoDims {
  int q = 0;
  int n_z = 0;
  int n_u = 0;

  int d() const { return q * n_z + (q - 1) * n_u; }
  int output_offset(int i) const { return (i - 1) * n_z; }          // block holding z_{t-i+1}
  int control_offset(int i) const { return q * n_z + (i - 1) * n_u; }  // block holding u_{t-i}
};

// How the process-noise channel D is formed from the beta blocks.
enum class NoiseChannel {
  Summed,  // single column block gamma_{t-1} = beta_{t-1} + ... + beta_{t-q}
  PerLag,  // one column block per lag, D = [beta_{t-1} | ... | beta_{t-q}]
};

struct InfoStateLtv {
  InfoDims dims;
  int horizon = 0;        // A[t] maps dZ_t to dZ_{t+1}, t = 0..horizon-1
  std::vector<Matrix> A;  // d x d
  std::vector<Matrix> B;  // d x n_u
  std::vector<Matrix> D;  // d x n_u (Summed) or d x q*n_u (PerLag)
};

// Lays out the per-timestep transition matrices from the ARMA blocks.
// Transitions into timesteps below the model's first fit reuse the t = q fit.
InfoStateLtv assemble(const ArmaModel& model, NoiseChannel channel = NoiseChannel::Summed);

// Linear recursion dZ_{t+1} = A_t dZ_t + B_t du_t (+ D_t w_t). Returns
// deviations for t = 0..len(du).
std::vector<Vector> propagate(const InfoStateLtv& ltv, const Vector& dZ0,
                              const std::vector<Vector>& du);
std::vector<Vector> propagate(const InfoStateLtv& ltv, const Vector& dZ0,
                              const std::vector<Vector>& du, const std::vector<Vector>& w);

// Stacks the information state at timestep t from output/control histories.
// Indices below zero repeat the initial output and use zero controls.
Vector stack_info_state(const std::vector<Vector>& outputs, const std::vector<Vector>& controls,
                        int t, const InfoDims& dims);

// Plain-text matrix dump of A_t, B_t, D_t per timestep for debugging.
void dump_ltv(const InfoStateLtv& ltv, std::ostream& out);

}  // namespace pod2c
