#include "pod2c/dynamics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <utility>

namespace pod2c {

namespace {

double param(const ParamMap& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void check_positive(double v, const std::string& what) {
  require(v > 0.0, what + " must be positive, got " + std::to_string(v));
}

using Ode = std::function<Vector(const Vector&, const Vector&)>;

Vector rk4_step(const Ode& f, const Vector& x, const Vector& u, double dt) {
  const Vector k1 = f(x, u);
  const Vector k2 = f(x + 0.5 * dt * k1, u);
  const Vector k3 = f(x + 0.5 * dt * k2, u);
  const Vector k4 = f(x + dt * k3, u);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

BlackboxSystem make_double_integrator(const ParamMap& params) {
  const double dt = param(params, "dt", 0.1);
  check_positive(dt, "dt");
  BlackboxSystem sys;
  sys.name = "double-integrator";
  sys.state_dim = 2;
  sys.control_dim = 1;
  sys.output_dim = 1;
  sys.dt = dt;
  sys.initial_state = Vector::Zero(2);
  sys.step = [dt](const Vector& x, const Vector& u, int) {
    Vector next(2);
    next[0] = x[0] + dt * x[1];
    next[1] = x[1] + dt * u[0];
    return next;
  };
  sys.output = [](const Vector& x, int) { return x.head(1).eval(); };
  return sys;
}

BlackboxSystem make_pendulum(const ParamMap& params) {
  const double m = param(params, "mass", 1.0);
  const double l = param(params, "length", 1.0);
  const double g = param(params, "gravity", 9.81);
  const double damping = param(params, "damping", 0.0);
  const double dt = param(params, "dt", 0.05);
  check_positive(m, "mass");
  check_positive(l, "length");
  check_positive(dt, "dt");
  require(damping >= 0.0, "damping must be nonnegative");

  // theta measured from upright; state (theta, thetadot), torque input.
  Ode ode = [m, l, g, damping](const Vector& x, const Vector& u) {
    Vector dx(2);
    dx[0] = x[1];
    dx[1] = (g / l) * std::sin(x[0]) + (u[0] - damping * x[1]) / (m * l * l);
    return dx;
  };
  BlackboxSystem sys;
  sys.name = "pendulum";
  sys.state_dim = 2;
  sys.control_dim = 1;
  sys.output_dim = 1;
  sys.dt = dt;
  sys.initial_state = (Vector(2) << M_PI, 0.0).finished();
  sys.step = [ode, dt](const Vector& x, const Vector& u, int) { return rk4_step(ode, x, u, dt); };
  sys.output = [](const Vector& x, int) { return x.head(1).eval(); };
  return sys;
}

struct CartpoleParams {
  double mc, mp, l, g;
};

CartpoleParams cartpole_params(const ParamMap& params) {
  CartpoleParams p;
  p.mc = param(params, "cart_mass", 1.0);
  p.mp = param(params, "pole_mass", 0.1);
  p.l = param(params, "pole_half_length", 0.5);
  p.g = param(params, "gravity", 9.81);
  check_positive(p.mc, "cart_mass");
  check_positive(p.mp, "pole_mass");
  check_positive(p.l, "pole_half_length");
  return p;
}

BlackboxSystem make_cartpole(const ParamMap& params) {
  const CartpoleParams p = cartpole_params(params);
  const double dt = param(params, "dt", 0.1);
  check_positive(dt, "dt");

  // Frictionless cart-pole, pole a uniform rod of half-length l, theta
  // measured from upright. Equations from the Lagrangian:
  //   (mc+mp) xdd + mp l cos(th) thdd = F + mp l thd^2 sin(th)
  //   mp l cos(th) xdd + (4/3) mp l^2 thdd = mp g l sin(th)
  Ode ode = [p](const Vector& x, const Vector& u) {
    const double th = x[1];
    const double xd = x[2];
    const double thd = x[3];
    const double st = std::sin(th);
    const double ct = std::cos(th);
    const double mt = p.mc + p.mp;
    Eigen::Matrix2d mass;
    mass << mt, p.mp * p.l * ct, p.mp * p.l * ct, (4.0 / 3.0) * p.mp * p.l * p.l;
    Eigen::Vector2d rhs(u[0] + p.mp * p.l * thd * thd * st, p.mp * p.g * p.l * st);
    const Eigen::Vector2d acc = mass.ldlt().solve(rhs);
    Vector dx(4);
    dx[0] = xd;
    dx[1] = thd;
    dx[2] = acc[0];
    dx[3] = acc[1];
    return dx;
  };
  BlackboxSystem sys;
  sys.name = "cartpole";
  sys.state_dim = 4;
  sys.control_dim = 1;
  sys.output_dim = 2;
  sys.dt = dt;
  sys.initial_state = (Vector(4) << 0.0, M_PI, 0.0, 0.0).finished();
  sys.step = [ode, dt](const Vector& x, const Vector& u, int) { return rk4_step(ode, x, u, dt); };
  sys.output = [](const Vector& x, int) { return x.head(2).eval(); };
  return sys;
}

// Planar n-link swimmer in the viscous (Stokes) regime: link drag is linear
// in the link velocity with a much larger normal than tangential coefficient,
// inertia neglected, so C(q) qdot = tau. Coordinates (x, y, phi_0..phi_{n-1})
// with absolute link angles; controls are the n-1 joint torques.
BlackboxSystem make_swimmer(const ParamMap& params) {
  const int n = static_cast<int>(param(params, "links", 5.0));
  const double L = param(params, "link_length", 0.3);
  const double cn = param(params, "normal_drag", 5.0);
  const double ct = param(params, "tangent_drag", 0.5);
  const double dt = param(params, "dt", 0.05);
  require(n >= 2, "nlink-swimmer needs at least 2 links");
  check_positive(L, "link_length");
  check_positive(cn, "normal_drag");
  check_positive(ct, "tangent_drag");
  check_positive(dt, "dt");

  const int nq = n + 2;
  Ode ode = [n, L, cn, ct, nq](const Vector& q, const Vector& u) {
    Matrix damping = Matrix::Zero(nq, nq);
    const double c_rot = cn * L * L * L / 12.0;
    for (int i = 0; i < n; ++i) {
      const double phi = q[2 + i];
      const Eigen::Vector2d tang(std::cos(phi), std::sin(phi));
      const Eigen::Vector2d norm(-std::sin(phi), std::cos(phi));
      // Jacobian of link i's center w.r.t. q (2 x nq).
      Matrix J = Matrix::Zero(2, nq);
      J(0, 0) = 1.0;
      J(1, 1) = 1.0;
      for (int j = 0; j < i; ++j) {
        const double pj = q[2 + j];
        J(0, 2 + j) = -L * std::sin(pj);
        J(1, 2 + j) = L * std::cos(pj);
      }
      J(0, 2 + i) = -0.5 * L * std::sin(phi);
      J(1, 2 + i) = 0.5 * L * std::cos(phi);
      const Eigen::Matrix2d D =
          cn * (norm * norm.transpose()) + ct * (tang * tang.transpose());
      damping += J.transpose() * D * J;
      damping(2 + i, 2 + i) += c_rot;
    }
    Vector tau = Vector::Zero(nq);
    for (int j = 1; j < n; ++j) {
      tau[2 + j] += u[j - 1];
      tau[2 + j - 1] -= u[j - 1];
    }
    return damping.ldlt().solve(tau).eval();
  };

  BlackboxSystem sys;
  sys.name = "nlink-swimmer";
  sys.state_dim = nq;
  sys.control_dim = n - 1;
  sys.output_dim = 2 + (n - 1 + 1) / 2;
  sys.dt = dt;
  // Straight body along +x, head at origin.
  sys.initial_state = Vector::Zero(nq);
  sys.step = [ode, dt](const Vector& x, const Vector& u, int) { return rk4_step(ode, x, u, dt); };
  // Outputs: head position plus every other relative joint angle (1st, 3rd, ...).
  sys.output = [n](const Vector& x, int) {
    const int nz = 2 + (n - 1 + 1) / 2;
    Vector z(nz);
    z[0] = x[0];
    z[1] = x[1];
    int idx = 2;
    for (int j = 1; j < n; j += 2) z[idx++] = x[2 + j] - x[2 + j - 1];
    return z;
  };
  return sys;
}

// Seeded random stable LTV system, useful for exercising the time-varying
// identification paths without hand-building matrices.
BlackboxSystem make_random_ltv(const ParamMap& params) {
  const int nx = static_cast<int>(param(params, "nx", 4.0));
  const int nu = static_cast<int>(param(params, "nu", 1.0));
  const int nz = static_cast<int>(param(params, "nz", 2.0));
  const int horizon = static_cast<int>(param(params, "horizon", 20.0));
  const double rho = param(params, "spectral_radius", 0.9);
  const auto seed = static_cast<std::uint64_t>(param(params, "seed", 0.0));
  require(nx >= 1 && nu >= 1 && nz >= 1 && horizon >= 1, "linear-ltv dims must be >= 1");
  check_positive(rho, "spectral_radius");

  RngStream rng(seed, 0x17f);
  LinearSystemSpec spec;
  spec.At.reserve(horizon);
  spec.Bt.reserve(horizon);
  spec.Ct.reserve(horizon + 1);
  auto random_matrix = [&rng](int r, int c) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = rng.gaussian();
    return m;
  };
  for (int t = 0; t < horizon; ++t) {
    Matrix a = random_matrix(nx, nx);
    const double radius = a.eigenvalues().cwiseAbs().maxCoeff();
    if (radius > 0.0) a *= rho / radius;
    spec.At.push_back(std::move(a));
    spec.Bt.push_back(random_matrix(nx, nu));
    spec.Ct.push_back(random_matrix(nz, nx));
  }
  spec.Ct.push_back(random_matrix(nz, nx));
  return make_linear_system(spec, param(params, "dt", 1.0));
}

}  // namespace

void LinearSystemSpec::validate() const {
  if (time_varying()) {
    require(!Bt.empty() && Ct.size() >= At.size(),
            "time-varying spec needs At, Bt and Ct sequences");
    const int nx = static_cast<int>(At[0].rows());
    for (const auto& m : At)
      require(m.rows() == nx && m.cols() == nx, "A_t must be square and consistent");
    for (const auto& m : Bt) require(m.rows() == nx, "B_t row count must match state dim");
    for (const auto& m : Ct) require(m.cols() == nx, "C_t column count must match state dim");
    require(Bt.size() == At.size(), "A_t and B_t sequences must have equal length");
  } else {
    require(A.rows() == A.cols() && A.rows() > 0, "A must be square");
    require(B.rows() == A.rows(), "B row count must match state dim");
    require(C.cols() == A.rows(), "C column count must match state dim");
  }
}

BlackboxSystem make_builtin(const std::string& name, const ParamMap& params) {
  if (name == "double-integrator") return make_double_integrator(params);
  if (name == "pendulum") return make_pendulum(params);
  if (name == "cartpole") return make_cartpole(params);
  if (name == "nlink-swimmer") return make_swimmer(params);
  if (name == "linear-ltv") return make_random_ltv(params);
  throw std::invalid_argument("unknown system name: " + name);
}

BlackboxSystem make_linear_system(const LinearSystemSpec& spec, double dt, const Vector& x0) {
  spec.validate();
  BlackboxSystem sys;
  sys.name = spec.time_varying() ? "linear-ltv" : "linear";
  sys.state_dim = spec.state_dim();
  sys.control_dim = spec.control_dim();
  sys.output_dim = spec.output_dim();
  sys.dt = dt;
  sys.initial_state = x0.size() > 0 ? x0 : Vector::Zero(sys.state_dim);
  require(sys.initial_state.size() == sys.state_dim, "x0 dimension mismatch");
  const int last = spec.time_varying() ? static_cast<int>(spec.At.size()) - 1 : 0;
  sys.step = [spec, last](const Vector& x, const Vector& u, int t) {
    const int tt = std::min(t, last);
    return (spec.a(tt) * x + spec.b(tt) * u).eval();
  };
  const int last_c = spec.time_varying() ? static_cast<int>(spec.Ct.size()) - 1 : 0;
  sys.output = [spec, last_c](const Vector& x, int t) {
    return (spec.c(std::min(t, last_c)) * x).eval();
  };
  return sys;
}

NoiseScales resolve_noise(const NoiseSpec& spec,
                          const std::vector<Vector>& nominal_controls,
                          const std::vector<Vector>& nominal_outputs) {
  require(spec.process_std >= 0.0 && spec.measurement_std >= 0.0,
          "noise std fractions must be nonnegative");
  double max_u = 0.0;
  for (const auto& u : nominal_controls) max_u = std::max(max_u, u.cwiseAbs().maxCoeff());
  double max_z = 0.0;
  for (const auto& z : nominal_outputs) max_z = std::max(max_z, z.cwiseAbs().maxCoeff());
  NoiseScales scales;
  scales.control_std = spec.process_std * max_u;
  scales.output_std = spec.measurement_std * max_z;
  scales.seed = spec.seed;
  return scales;
}

Trajectory rollout(const BlackboxSystem& sys, const Vector& x0,
                   const std::vector<Vector>& controls) {
  return rollout(sys, x0, controls, NoiseScales{});
}

Trajectory rollout(const BlackboxSystem& sys, const Vector& x0,
                   const std::vector<Vector>& controls, const NoiseScales& noise) {
  require(x0.size() == sys.state_dim, "rollout: x0 dimension mismatch");
  require(!controls.empty(), "rollout: need at least one control");
  for (const auto& u : controls)
    require(u.size() == sys.control_dim, "rollout: control dimension mismatch");

  const int T = static_cast<int>(controls.size());
  RngStream rng_w(noise.seed, 1);
  RngStream rng_v(noise.seed, 2);

  Trajectory traj;
  traj.states.reserve(T + 1);
  traj.outputs.reserve(T + 1);
  traj.controls = controls;

  Vector x = x0;
  for (int t = 0; t < T; ++t) {
    traj.states.push_back(x);
    Vector z = sys.output(x, t);
    if (noise.output_std > 0.0)
      z += noise.output_std * rng_v.gaussian_vector(sys.output_dim);
    traj.outputs.push_back(std::move(z));
    Vector u = controls[t];
    if (noise.control_std > 0.0)
      u += noise.control_std * rng_w.gaussian_vector(sys.control_dim);
    x = sys.step(x, u, t);
  }
  traj.states.push_back(x);
  Vector z = sys.output(x, T);
  if (noise.output_std > 0.0)
    z += noise.output_std * rng_v.gaussian_vector(sys.output_dim);
  traj.outputs.push_back(std::move(z));
  return traj;
}

Trajectory rollout(const BlackboxSystem& sys, const Vector& x0,
                   const std::vector<Vector>& controls, const NoiseSpec& noise) {
  const Trajectory nominal = rollout(sys, x0, controls);
  return rollout(sys, x0, controls, resolve_noise(noise, controls, nominal.outputs));
}

double cartpole_energy(const Vector& state, const ParamMap& params) {
  const CartpoleParams p = cartpole_params(params);
  const double th = state[1];
  const double xd = state[2];
  const double thd = state[3];
  const double kinetic = 0.5 * (p.mc + p.mp) * xd * xd +
                         p.mp * p.l * xd * thd * std::cos(th) +
                         (2.0 / 3.0) * p.mp * p.l * p.l * thd * thd;
  const double potential = p.mp * p.g * p.l * std::cos(th);
  return kinetic + potential;
}

}  // namespace pod2c
