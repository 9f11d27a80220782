#include "pod2c/infostate.hpp"

#include <cstdio>
#include <ostream>

namespace pod2c {

InfoStateLtv assemble(const ArmaModel& model, NoiseChannel channel) {
  model.validate();
  const int q = model.order;
  const InfoDims dims{q, model.n_z, model.n_u};
  const int d = dims.d();
  const int n_z = model.n_z;
  const int n_u = model.n_u;

  InfoStateLtv ltv;
  ltv.dims = dims;
  ltv.horizon = model.horizon;
  ltv.A.reserve(ltv.horizon);
  ltv.B.reserve(ltv.horizon);
  ltv.D.reserve(ltv.horizon);

  for (int s = 0; s < ltv.horizon; ++s) {
    const int t = std::max(s + 1, q);  // fit predicting z_t drives the s -> s+1 transition

    Matrix A = Matrix::Zero(d, d);
    // Top block row: [alpha_{t-1} .. alpha_{t-q} | beta_{t-2} .. beta_{t-q}].
    for (int i = 1; i <= q; ++i)
      A.block(0, dims.output_offset(i), n_z, n_z) = model.alpha_at(t, i);
    for (int i = 2; i <= q; ++i)
      A.block(0, dims.control_offset(i - 1), n_z, n_u) = model.beta_at(t, i);
    // Shift rows: z blocks move down one slot, control blocks likewise.
    for (int i = 1; i < q; ++i)
      A.block(dims.output_offset(i + 1), dims.output_offset(i), n_z, n_z) =
          Matrix::Identity(n_z, n_z);
    for (int i = 1; i < q - 1; ++i)
      A.block(dims.control_offset(i + 1), dims.control_offset(i), n_u, n_u) =
          Matrix::Identity(n_u, n_u);

    Matrix B = Matrix::Zero(d, n_u);
    B.topRows(n_z) = model.beta_at(t, 1);
    if (q > 1) B.block(dims.control_offset(1), 0, n_u, n_u) = Matrix::Identity(n_u, n_u);

    Matrix D;
    if (channel == NoiseChannel::Summed) {
      D = Matrix::Zero(d, n_u);
      for (int i = 1; i <= q; ++i) D.topRows(n_z) += model.beta_at(t, i);
    } else {
      D = Matrix::Zero(d, q * n_u);
      for (int i = 1; i <= q; ++i)
        D.block(0, (i - 1) * n_u, n_z, n_u) = model.beta_at(t, i);
    }

    ltv.A.push_back(std::move(A));
    ltv.B.push_back(std::move(B));
    ltv.D.push_back(std::move(D));
  }
  return ltv;
}

std::vector<Vector> propagate(const InfoStateLtv& ltv, const Vector& dZ0,
                              const std::vector<Vector>& du) {
  return propagate(ltv, dZ0, du, {});
}

std::vector<Vector> propagate(const InfoStateLtv& ltv, const Vector& dZ0,
                              const std::vector<Vector>& du, const std::vector<Vector>& w) {
  require(dZ0.size() == ltv.dims.d(), "propagate: dZ0 dimension mismatch");
  require(static_cast<int>(du.size()) <= ltv.horizon, "propagate: sequence longer than horizon");
  require(w.empty() || w.size() == du.size(), "propagate: noise sequence length mismatch");
  std::vector<Vector> out;
  out.reserve(du.size() + 1);
  out.push_back(dZ0);
  for (std::size_t t = 0; t < du.size(); ++t) {
    require(du[t].size() == ltv.dims.n_u, "propagate: control dimension mismatch");
    Vector next = ltv.A[t] * out.back() + ltv.B[t] * du[t];
    if (!w.empty()) next += ltv.D[t] * w[t];
    out.push_back(std::move(next));
  }
  return out;
}

Vector stack_info_state(const std::vector<Vector>& outputs, const std::vector<Vector>& controls,
                        int t, const InfoDims& dims) {
  require(t >= 0 && t < static_cast<int>(outputs.size()), "stack_info_state: t out of range");
  Vector Z(dims.d());
  for (int i = 1; i <= dims.q; ++i) {
    const int idx = t - i + 1;
    Z.segment(dims.output_offset(i), dims.n_z) = outputs[std::max(idx, 0)];
  }
  for (int i = 1; i <= dims.q - 1; ++i) {
    const int idx = t - i;
    if (idx >= 0) {
      require(idx < static_cast<int>(controls.size()), "stack_info_state: missing control");
      Z.segment(dims.control_offset(i), dims.n_u) = controls[idx];
    } else {
      Z.segment(dims.control_offset(i), dims.n_u).setZero();
    }
  }
  return Z;
}

void dump_ltv(const InfoStateLtv& ltv, std::ostream& out) {
  char buf[32];
  auto emit = [&](const char* name, int t, const Matrix& m) {
    out << name << " " << t << " " << m.rows() << " " << m.cols() << "\n";
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
        out << (c ? " " : "") << buf;
      }
      out << "\n";
    }
  };
  for (int t = 0; t < ltv.horizon; ++t) {
    emit("A", t, ltv.A[t]);
    emit("B", t, ltv.B[t]);
    emit("D", t, ltv.D[t]);
  }
}

}  // namespace pod2c
