#pragma once

#include "pod2c/types.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace pod2c {

// Deterministic steppable simulator. The identification pipeline may query
// nothing else about the plant. step and output must be pure: identical
// inputs give bitwise-identical results, which perturbation differencing
// relies on. The timestep index is passed through so time-varying linear
// systems fit the same interface.
struct BlackboxSystem {
  std::string name;
  int state_dim = 0;
  int control_dim = 0;
  int output_dim = 0;
  double dt = 0.0;
  Vector initial_state;
  std::function<Vector(const Vector&, const Vector&, int)> step;  // (x_t, u_t, t) -> x_{t+1}
  std::function<Vector(const Vector&, int)> output;               // h(x_t) -> z_t
};

// x_{t+1} = A x_t + B u_t, z_t = C x_t; optionally time-varying via At/Bt/Ct
// (sequence length = horizon).
struct LinearSystemSpec {
  Matrix A, B, C;
  std::vector<Matrix> At, Bt, Ct;

  bool time_varying() const { return !At.empty(); }
  int state_dim() const { return static_cast<int>(time_varying() ? At[0].rows() : A.rows()); }
  int control_dim() const { return static_cast<int>(time_varying() ? Bt[0].cols() : B.cols()); }
  int output_dim() const { return static_cast<int>(time_varying() ? Ct[0].rows() : C.rows()); }
  const Matrix& a(int t) const { return time_varying() ? At.at(t) : A; }
  const Matrix& b(int t) const { return time_varying() ? Bt.at(t) : B; }
  const Matrix& c(int t) const { return time_varying() ? Ct.at(t) : C; }
  void validate() const;
};

// Noise magnitudes as fractions of the maximal nominal control / output
// magnitude; the absolute scales are resolved against a nominal trajectory.
struct NoiseSpec {
  double process_std = 0.0;      // fraction of max |nominal control|
  double measurement_std = 0.0;  // fraction of max |nominal output|
  std::uint64_t seed = 0;
};

// Absolute noise standard deviations. Process and measurement draws come from
// separate substreams of `seed`, so the process realization for a given seed
// does not depend on the measurement noise level.
struct NoiseScales {
  double control_std = 0.0;
  double output_std = 0.0;
  std::uint64_t seed = 0;
};

struct Trajectory {
  std::vector<Vector> states;    // T+1
  std::vector<Vector> outputs;   // T+1
  std::vector<Vector> controls;  // T (commanded, without process noise)
  double cost = 0.0;

  int horizon() const { return static_cast<int>(controls.size()); }
};

using ParamMap = std::map<std::string, double>;

// Built-in families: double-integrator, linear-ltv (seeded random),
// pendulum, cartpole, nlink-swimmer. Throws on unknown names or
// non-physical parameters.
BlackboxSystem make_builtin(const std::string& name, const ParamMap& params = {});

// Wraps an explicit linear system as a blackbox simulator.
BlackboxSystem make_linear_system(const LinearSystemSpec& spec, double dt = 1.0,
                                  const Vector& x0 = Vector());

NoiseScales resolve_noise(const NoiseSpec& spec,
                          const std::vector<Vector>& nominal_controls,
                          const std::vector<Vector>& nominal_outputs);

Trajectory rollout(const BlackboxSystem& sys, const Vector& x0,
                   const std::vector<Vector>& controls);
Trajectory rollout(const BlackboxSystem& sys, const Vector& x0,
                   const std::vector<Vector>& controls, const NoiseScales& noise);
Trajectory rollout(const BlackboxSystem& sys, const Vector& x0,
                   const std::vector<Vector>& controls, const NoiseSpec& noise);

// Total mechanical energy of a cart-pole state (x, theta, xdot, thetadot);
// conserved under zero control.
double cartpole_energy(const Vector& state, const ParamMap& params = {});

}  // namespace pod2c
