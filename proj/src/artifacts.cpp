#include "pod2c/artifacts.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace pod2c {

namespace {

constexpr const char* kTrajectoryMagic = "pod2c-trajectory 1";
constexpr const char* kPolicyMagic = "pod2c-policy 1";

void emit_vector(std::ostream& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << fmt17(v[i]);
  out << "\n";
}

void emit_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << fmt17(m(r, c));
    out << "\n";
  }
}

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open artifact: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    text_ = buf.str();

    const auto mark = text_.rfind("checksum ");
    if (mark == std::string::npos) throw ArtifactError(path + ": missing checksum line");
    const std::string payload = text_.substr(0, mark);
    std::size_t stored = 0;
    if (std::sscanf(text_.c_str() + mark, "checksum %zx", &stored) != 1)
      throw ArtifactError(path + ": unreadable checksum line");
    if (static_cast<std::uint64_t>(stored) != fnv1a(payload))
      throw ArtifactError(path + ": checksum mismatch, file is corrupted");
    stream_.str(payload);
  }

  std::string line() {
    std::string l;
    if (!std::getline(stream_, l)) throw ArtifactError(path_ + ": truncated artifact");
    return l;
  }

  void expect(const std::string& want) {
    const std::string got = line();
    if (got != want)
      throw ArtifactError(path_ + ": expected '" + want + "', found '" + got + "'");
  }

  double scalar(const std::string& name) {
    std::istringstream in(line());
    std::string label;
    double v = 0.0;
    if (!(in >> label >> v) || label != name)
      throw ArtifactError(path_ + ": expected scalar '" + name + "'");
    return v;
  }

  Vector vector(Eigen::Index n) {
    std::istringstream in(line());
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(in >> v[i])) throw ArtifactError(path_ + ": malformed vector row");
    double extra;
    if (in >> extra) throw ArtifactError(path_ + ": vector row has wrong length");
    return v;
  }

  Matrix matrix(Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) m.row(i) = vector(c).transpose();
    return m;
  }

 private:
  std::string path_;
  std::string text_;
  std::istringstream stream_;
};

void write_with_checksum(const std::string& path, const std::string& payload) {
  std::ostringstream full;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%zx", static_cast<std::size_t>(fnv1a(payload)));
  full << payload << "checksum " << buf << "\n";
  write_text_file(path, full.str());
}

}  // namespace

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot write file: " + path);
  out << contents;
  if (!out) throw ArtifactError("write failed: " + path);
}

void save_trajectory(const Trajectory& traj, double dt, const std::string& path) {
  const int T = traj.horizon();
  require(T >= 1, "save_trajectory: empty trajectory");
  const int nx = static_cast<int>(traj.states[0].size());
  const int nz = static_cast<int>(traj.outputs[0].size());
  const int nu = static_cast<int>(traj.controls[0].size());

  std::ostringstream out;
  out << kTrajectoryMagic << "\n";
  out << "dims " << nx << " " << nu << " " << nz << "\n";
  out << "horizon " << T << "\n";
  out << "dt " << fmt17(dt) << "\n";
  out << "cost " << fmt17(traj.cost) << "\n";
  out << "states\n";
  for (const auto& x : traj.states) emit_vector(out, x);
  out << "outputs\n";
  for (const auto& z : traj.outputs) emit_vector(out, z);
  out << "controls\n";
  for (const auto& u : traj.controls) emit_vector(out, u);
  write_with_checksum(path, out.str());
}

Trajectory load_trajectory(const std::string& path, double* dt) {
  Reader r(path);
  r.expect(kTrajectoryMagic);
  std::istringstream dims(r.line());
  std::string label;
  int nx = 0, nu = 0, nz = 0;
  if (!(dims >> label >> nx >> nu >> nz) || label != "dims" || nx < 1 || nu < 1 || nz < 1)
    throw ArtifactError(path + ": malformed dims line");
  const int T = static_cast<int>(r.scalar("horizon"));
  if (T < 1) throw ArtifactError(path + ": bad horizon");
  const double dt_read = r.scalar("dt");
  if (dt) *dt = dt_read;
  Trajectory traj;
  traj.cost = r.scalar("cost");
  r.expect("states");
  for (int t = 0; t <= T; ++t) traj.states.push_back(r.vector(nx));
  r.expect("outputs");
  for (int t = 0; t <= T; ++t) traj.outputs.push_back(r.vector(nz));
  r.expect("controls");
  for (int t = 0; t < T; ++t) traj.controls.push_back(r.vector(nu));
  return traj;
}

void save_policy(const Policy& policy, const std::string& path) {
  policy.validate();
  const int T = policy.horizon();
  const int d = policy.dims.d();
  const int wD = static_cast<int>(policy.ltv.D[0].cols());

  std::ostringstream out;
  out << kPolicyMagic << "\n";
  out << "dims " << policy.dims.q << " " << policy.dims.n_z << " " << policy.dims.n_u << " " << wD
      << "\n";
  out << "horizon " << T << "\n";
  out << "dt " << fmt17(policy.dt) << "\n";
  out << "nominal_cost " << fmt17(policy.nominal_cost) << "\n";
  out << "x0 " << policy.x0.size() << "\n";
  emit_vector(out, policy.x0);
  out << "nominal_controls\n";
  for (const auto& u : policy.nominal_controls) emit_vector(out, u);
  out << "nominal_outputs\n";
  for (const auto& z : policy.nominal_outputs) emit_vector(out, z);
  out << "K\n";
  for (const auto& m : policy.K) emit_matrix(out, m);
  out << "L\n";
  for (int t = 0; t <= T; ++t) emit_matrix(out, policy.L[t]);
  out << "A\n";
  for (int t = 0; t < T; ++t) emit_matrix(out, policy.ltv.A[t]);
  out << "B\n";
  for (int t = 0; t < T; ++t) emit_matrix(out, policy.ltv.B[t]);
  out << "D\n";
  for (int t = 0; t < T; ++t) emit_matrix(out, policy.ltv.D[t]);
  (void)d;
  write_with_checksum(path, out.str());
}

Policy load_policy(const std::string& path) {
  Reader r(path);
  r.expect(kPolicyMagic);
  std::istringstream dims(r.line());
  std::string label;
  int q = 0, nz = 0, nu = 0, wD = 0;
  if (!(dims >> label >> q >> nz >> nu >> wD) || label != "dims" || q < 1 || nz < 1 || nu < 1)
    throw ArtifactError(path + ": malformed dims line");
  Policy policy;
  policy.dims = InfoDims{q, nz, nu};
  const int d = policy.dims.d();
  const int T = static_cast<int>(r.scalar("horizon"));
  if (T < 1) throw ArtifactError(path + ": bad horizon");
  policy.dt = r.scalar("dt");
  policy.nominal_cost = r.scalar("nominal_cost");
  const int nx = static_cast<int>(r.scalar("x0"));
  policy.x0 = r.vector(nx);
  r.expect("nominal_controls");
  for (int t = 0; t < T; ++t) policy.nominal_controls.push_back(r.vector(nu));
  r.expect("nominal_outputs");
  for (int t = 0; t <= T; ++t) policy.nominal_outputs.push_back(r.vector(nz));
  r.expect("K");
  for (int t = 0; t < T; ++t) policy.K.push_back(r.matrix(nu, d));
  r.expect("L");
  for (int t = 0; t <= T; ++t) policy.L.push_back(r.matrix(d, d));
  policy.ltv.dims = policy.dims;
  policy.ltv.horizon = T;
  r.expect("A");
  for (int t = 0; t < T; ++t) policy.ltv.A.push_back(r.matrix(d, d));
  r.expect("B");
  for (int t = 0; t < T; ++t) policy.ltv.B.push_back(r.matrix(d, nu));
  r.expect("D");
  for (int t = 0; t < T; ++t) policy.ltv.D.push_back(r.matrix(d, wD));
  policy.validate();
  return policy;
}

}  // namespace pod2c
