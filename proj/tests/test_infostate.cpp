#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "pod2c/infostate.hpp"

using namespace pod2c;

namespace {

Trajectory zero_nominal(const BlackboxSystem& sys, int T) {
  return rollout(sys, sys.initial_state, std::vector<Vector>(T, Vector::Zero(sys.control_dim)));
}

// Expected zero pattern of the transition matrix: true where an entry may be
// nonzero.
Matrix nonzero_mask(const InfoDims& dims) {
  const int d = dims.d();
  Matrix mask = Matrix::Zero(d, d);
  mask.topRows(dims.n_z).setOnes();  // alpha and beta blocks
  for (int i = 1; i < dims.q; ++i)
    mask.block(dims.output_offset(i + 1), dims.output_offset(i), dims.n_z, dims.n_z) =
        Matrix::Identity(dims.n_z, dims.n_z);
  for (int i = 1; i < dims.q - 1; ++i)
    mask.block(dims.control_offset(i + 1), dims.control_offset(i), dims.n_u, dims.n_u) =
        Matrix::Identity(dims.n_u, dims.n_u);
  return mask;
}

}  // namespace

TEST_CASE("information-state dimension law") {
  CHECK(InfoDims{2, 2, 1}.d() == 5);  // cart-pole: q=2, two outputs, one control
  CHECK(InfoDims{1, 3, 2}.d() == 3);  // q=1 degenerates to the output dimension
  CHECK(InfoDims{3, 2, 2}.d() == 10);
}

TEST_CASE("assembled transition matrices match the stacked layout exactly") {
  RngStream rng(7);
  const LinearSystemSpec spec = oracle::random_observable_system(rng, 2, 2, 1);
  const ArmaModel model = exact_arma_model(spec, 2, 10);
  const InfoStateLtv ltv = assemble(model);
  const InfoDims dims = ltv.dims;
  REQUIRE(dims.d() == 5);
  REQUIRE(ltv.horizon == 10);

  const Matrix mask = nonzero_mask(dims);
  for (const auto& A : ltv.A) {
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 5; ++c)
        if (mask(r, c) == 0.0) CHECK(A(r, c) == 0.0);
    // shift identities present
    CHECK(A(2, 0) == 1.0);
    CHECK(A(3, 1) == 1.0);
  }
  const auto [alpha, beta] = arma_exact(spec, 2);
  CHECK((ltv.A[5].block(0, 0, 2, 2) - alpha[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ltv.A[5].block(0, 2, 2, 2) - alpha[1]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ltv.A[5].block(0, 4, 2, 1) - beta[1]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ltv.B[5].topRows(2) - beta[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ltv.B[5](4, 0) == 1.0);
  CHECK(ltv.B[5](2, 0) == 0.0);
  // gamma = beta_1 + beta_2 in the top block of D
  CHECK((ltv.D[5].topRows(2) - (beta[0] + beta[1])).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ltv.D[5].bottomRows(3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero beta blocks give a zero noise channel") {
  ArmaModel model;
  model.order = 2;
  model.horizon = 4;
  model.n_z = 1;
  model.n_u = 1;
  for (int t = 2; t <= 4; ++t) {
    model.alpha.push_back({Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, -0.2)});
    model.beta.push_back({Matrix::Zero(1, 1), Matrix::Zero(1, 1)});
    model.residual.push_back(0.0);
  }
  const InfoStateLtv ltv = assemble(model);
  for (const auto& D : ltv.D) CHECK(D.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("q = 1 assembly degenerates to the raw coefficient blocks") {
  ArmaModel model;
  model.order = 1;
  model.horizon = 3;
  model.n_z = 2;
  model.n_u = 1;
  const Matrix a = (Matrix(2, 2) << 0.9, 0.1, 0.0, 0.8).finished();
  const Matrix b = (Matrix(2, 1) << 0.3, -0.1).finished();
  for (int t = 1; t <= 3; ++t) {
    model.alpha.push_back({a});
    model.beta.push_back({b});
    model.residual.push_back(0.0);
  }
  const InfoStateLtv ltv = assemble(model);
  CHECK(ltv.dims.d() == 2);
  CHECK((ltv.A[1] - a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ltv.B[1] - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ltv.D[1] - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("per-lag noise channel carries each beta block") {
  RngStream rng(9);
  const LinearSystemSpec spec = oracle::random_observable_system(rng, 1, 2, 1);
  const ArmaModel model = exact_arma_model(spec, 2, 6);
  const InfoStateLtv ltv = assemble(model, NoiseChannel::PerLag);
  CHECK(ltv.D[3].cols() == 2);
  const auto [alpha, beta] = arma_exact(spec, 2);
  CHECK((ltv.D[3].block(0, 0, 1, 1) - beta[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ltv.D[3].block(0, 1, 1, 1) - beta[1]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("propagation is linear and respects the shift structure") {
  RngStream rng(17);
  const LinearSystemSpec spec = oracle::random_observable_system(rng, 2, 2, 1);
  const ArmaModel model = exact_arma_model(spec, 2, 8);
  const InfoStateLtv ltv = assemble(model);

  const std::vector<Vector> zero_du(8, Vector::Zero(1));
  const auto zeros = propagate(ltv, Vector::Zero(5), zero_du);
  for (const auto& dZ : zeros) CHECK(dZ.cwiseAbs().maxCoeff() == 0.0);

  std::vector<Vector> du;
  for (int t = 0; t < 8; ++t) du.push_back(rng.gaussian_vector(1));
  const auto path = propagate(ltv, Vector::Zero(5), du);
  // control slot of dZ_{t+1} equals the applied du_t (identity row of B)
  for (int t = 0; t < 8; ++t) CHECK(path[t + 1][4] == du[t][0]);

  CHECK_THROWS_AS(propagate(ltv, Vector::Zero(4), du), std::invalid_argument);
  CHECK_THROWS_AS(propagate(ltv, Vector::Zero(5), du, std::vector<Vector>(3, Vector::Zero(1))),
                  std::invalid_argument);
}

TEST_CASE("propagating the exact model tracks the true linear system") {
  RngStream rng(23);
  const LinearSystemSpec spec = oracle::random_observable_system(rng, 2, 2, 2);
  const BlackboxSystem sys = make_linear_system(spec);
  const int T = 12;
  const Trajectory nominal = zero_nominal(sys, T);
  const ArmaModel model = exact_arma_model(spec, 2, T);
  const InfoStateLtv ltv = assemble(model);

  std::vector<Vector> du;
  for (int t = 0; t < T; ++t) du.push_back(1e-2 * rng.gaussian_vector(2));
  std::vector<Vector> controls = nominal.controls;
  for (int t = 0; t < T; ++t) controls[t] += du[t];
  const Trajectory perturbed = rollout(sys, sys.initial_state, controls);

  const auto path = propagate(ltv, Vector::Zero(ltv.dims.d()), du);
  for (int t = 0; t <= T; ++t) {
    const Vector true_dz = perturbed.outputs[t] - nominal.outputs[t];
    CHECK((path[t].head(2) - true_dz).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("propagation agrees with the raw ARMA recursion") {
  // Two code paths for the same recursion: the stacked transition and the
  // direct coefficient form.
  RngStream rng(29);
  const LinearSystemSpec spec = oracle::random_observable_system(rng, 1, 3, 2);
  const int T = 10;
  const ArmaModel model = exact_arma_model(spec, 3, T);
  const InfoStateLtv ltv = assemble(model);

  std::vector<Vector> du;
  for (int t = 0; t < T; ++t) du.push_back(rng.gaussian_vector(2));
  const auto path = propagate(ltv, Vector::Zero(ltv.dims.d()), du);

  // Raw recursion with zero-padded history (deviations start at rest).
  std::vector<Vector> dz(T + 1, Vector::Zero(1));
  for (int t = 1; t <= T; ++t) {
    Vector next = Vector::Zero(1);
    const int tt = std::max(t, 3);
    for (int i = 1; i <= 3; ++i) {
      if (t - i >= 0) next += model.alpha_at(tt, i) * dz[t - i];
      if (t - i >= 0) next += model.beta_at(tt, i) * du[t - i];
    }
    dz[t] = next;
  }
  for (int t = 0; t <= T; ++t)
    CHECK((path[t].head(1) - dz[t]).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("info-state stacking pads early history") {
  const InfoDims dims{3, 1, 1};
  std::vector<Vector> outputs;
  std::vector<Vector> controls;
  for (int t = 0; t <= 5; ++t) outputs.push_back(Vector::Constant(1, 10.0 + t));
  for (int t = 0; t < 5; ++t) controls.push_back(Vector::Constant(1, 100.0 + t));

  const Vector Z0 = stack_info_state(outputs, controls, 0, dims);
  // q output blocks newest-first, all padded to z_0; controls zero-padded.
  CHECK(Z0[0] == 10.0);
  CHECK(Z0[1] == 10.0);
  CHECK(Z0[2] == 10.0);
  CHECK(Z0[3] == 0.0);
  CHECK(Z0[4] == 0.0);

  const Vector Z4 = stack_info_state(outputs, controls, 4, dims);
  CHECK(Z4[0] == 14.0);
  CHECK(Z4[1] == 13.0);
  CHECK(Z4[2] == 12.0);
  CHECK(Z4[3] == 103.0);
  CHECK(Z4[4] == 102.0);
}

TEST_CASE("assembly validates the model blocks") {
  ArmaModel model;
  model.order = 2;
  model.horizon = 4;
  model.n_z = 1;
  model.n_u = 1;
  model.alpha.push_back({Matrix::Zero(1, 1), Matrix::Zero(1, 1)});
  model.beta.push_back({Matrix::Zero(1, 1), Matrix::Zero(1, 1)});
  model.residual.push_back(0.0);
  // blocks only cover t = 2, but horizon says 4
  CHECK_THROWS_AS(assemble(model), std::invalid_argument);
}
