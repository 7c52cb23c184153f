#include "stochpc/plant.hpp"

#include <Eigen/Eigenvalues>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "stochpc/numerics.hpp"
#include "stochpc/rng.hpp"

namespace stochpc {

void LtiModel::validate() const {
  const Eigen::Index nn = A.rows();
  require_dims(A.cols() == nn, "LtiModel: A square");
  require_dims(B.rows() == nn && B.cols() >= 1, "LtiModel: B rows");
  require_dims(C.cols() == nn && C.rows() >= 1, "LtiModel: C cols");
  require_dims(Sigma_w.rows() == nn && Sigma_w.cols() == nn,
               "LtiModel: Sigma_w shape");
  require_dims(Sigma_v.rows() == C.rows() && Sigma_v.cols() == C.rows(),
               "LtiModel: Sigma_v shape");
  auto asymmetry = [](const Mat& S) {
    return (S - S.transpose()).lpNorm<Eigen::Infinity>() >
           1e-10 * (1.0 + S.lpNorm<Eigen::Infinity>());
  };
  if (asymmetry(Sigma_w) || asymmetry(Sigma_v))
    throw Error("LtiModel: noise covariances must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> esw(Sigma_w, Eigen::EigenvaluesOnly);
  if (esw.eigenvalues().minCoeff() < -1e-10 * (1.0 + Sigma_w.norm()))
    throw Error("LtiModel: Sigma_w must be PSD");
  Eigen::LLT<Mat> llt(Sigma_v);
  if (llt.info() != Eigen::Success)
    throw Error("LtiModel: Sigma_v must be PD");
}

Vec step(const LtiModel& model, const Vec& x, const Vec& u, const Vec& w) {
  return model.A * x + model.B * u + w;
}

Vec output(const LtiModel& model, const Vec& x, const Vec& v) {
  return model.C * x + v;
}

Mat psd_sqrt(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(S));
  Vec lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

Vec sample_initial_state(const Vec& mu, const Mat& Sigma, std::uint64_t seed) {
  require_dims(Sigma.rows() == mu.size() && Sigma.cols() == mu.size(),
               "sample_initial_state: dimension mismatch");
  const Mat F = psd_sqrt(Sigma);
  CounterRng rng(seed);
  Vec z(mu.size());
  for (Eigen::Index j = 0; j < z.size(); ++j)
    z(j) = rng.normal(streams::initial_state, 0, static_cast<std::uint64_t>(j));
  return mu + F * z;
}

NoiseRealization sample_noise(const LtiModel& model, int horizon,
                              std::uint64_t seed) {
  model.validate();
  if (horizon < 0) throw Error("sample_noise: negative horizon");
  const int n = model.n(), p = model.p();
  const Mat Fw = psd_sqrt(model.Sigma_w);
  const Mat Fv = psd_sqrt(model.Sigma_v);
  CounterRng rng(seed);
  NoiseRealization nr;
  nr.seed = seed;
  nr.w_seq.resize(n, horizon);
  nr.v_seq.resize(p, horizon);
  Vec zw(n), zv(p);
  for (int t = 0; t < horizon; ++t) {
    for (int j = 0; j < n; ++j)
      zw(j) = rng.normal(streams::process_noise, static_cast<std::uint64_t>(t),
                         static_cast<std::uint64_t>(j));
    for (int j = 0; j < p; ++j)
      zv(j) = rng.normal(streams::measurement_noise,
                         static_cast<std::uint64_t>(t),
                         static_cast<std::uint64_t>(j));
    nr.w_seq.col(t) = Fw * zw;
    nr.v_seq.col(t) = Fv * zv;
  }
  return nr;
}

Trajectory simulate_closed_loop(const LtiModel& model,
                                const PolicyCallback& controller,
                                const Vec& x0, const NoiseRealization& noise,
                                int T) {
  model.validate();
  require_dims(x0.size() == model.n(), "simulate_closed_loop: x0 length");
  require_dims(noise.w_seq.cols() >= T && noise.v_seq.cols() >= T,
               "simulate_closed_loop: noise shorter than horizon");
  Trajectory traj;
  traj.t0 = 0;
  traj.x_seq.resize(model.n(), T + 1);
  traj.u_seq.resize(model.m(), T);
  traj.y_seq.resize(model.p(), T);
  Vec x = x0;
  for (int t = 0; t < T; ++t) {
    traj.x_seq.col(t) = x;
    const Vec y = output(model, x, noise.v_seq.col(t));
    const Vec u = controller(t, y);
    require_dims(u.size() == model.m(), "simulate_closed_loop: policy output");
    traj.y_seq.col(t) = y;
    traj.u_seq.col(t) = u;
    x = step(model, x, u, noise.w_seq.col(t));
  }
  traj.x_seq.col(T) = x;
  return traj;
}

Mat extended_observability(const Mat& A, const Mat& C, int L) {
  require_dims(A.rows() == A.cols() && C.cols() == A.rows(),
               "extended_observability: A/C");
  if (L < 1) throw Error("extended_observability: L must be >= 1");
  const Eigen::Index n = A.rows(), p = C.rows();
  Mat obs(p * L, n);
  Mat CAk = C;
  for (int k = 0; k < L; ++k) {
    obs.middleRows(k * p, p) = CAk;
    if (k + 1 < L) CAk = CAk * A;
  }
  return obs;
}

Mat extended_controllability(const Mat& A, const Mat& B, int L) {
  require_dims(A.rows() == A.cols() && B.rows() == A.rows(),
               "extended_controllability: A/B");
  if (L < 1) throw Error("extended_controllability: L must be >= 1");
  const Eigen::Index n = A.rows(), m = B.cols();
  Mat ctr(n, m * L);
  Mat AkB = B;
  for (int k = 0; k < L; ++k) {
    // Column block for input u_{t+L-1-k} carries A^k B; the rightmost
    // block is B itself.
    ctr.middleCols((L - 1 - k) * m, m) = AkB;
    if (k + 1 < L) AkB = A * AkB;
  }
  return ctr;
}

AssumptionReport check_assumption_dims(const LtiModel& model, int L) {
  AssumptionReport rep;
  rep.observable =
      numerical_rank(extended_observability(model.A, model.C, L)) == model.n();
  rep.controllable =
      numerical_rank(extended_controllability(model.A, model.B, L)) ==
      model.n();
  return rep;
}

int minimal_window_length(const LtiModel& model) {
  for (int L = 1; L <= model.n(); ++L)
    if (check_assumption_dims(model, L).ok()) return L;
  throw Error("minimal_window_length: model is not minimal");
}

namespace {

void append_value(std::string& line, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), ",%.17g", v);
  line += buf;
}

}  // namespace

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  const Eigen::Index n = traj.x_seq.rows(), m = traj.u_seq.rows(),
                     p = traj.y_seq.rows();
  const Eigen::Index T = traj.u_seq.cols();
  std::ofstream out(path);
  if (!out) throw Error("write_trajectory_csv: cannot open " + path);
  std::string header = "t";
  for (Eigen::Index i = 1; i <= n; ++i) header += ",x" + std::to_string(i);
  for (Eigen::Index i = 1; i <= m; ++i) header += ",u" + std::to_string(i);
  for (Eigen::Index i = 1; i <= p; ++i) header += ",y" + std::to_string(i);
  out << header << "\n";
  for (Eigen::Index t = 0; t < T; ++t) {
    std::string line = std::to_string(traj.t0 + t);
    for (Eigen::Index i = 0; i < n; ++i) append_value(line, traj.x_seq(i, t));
    for (Eigen::Index i = 0; i < m; ++i) append_value(line, traj.u_seq(i, t));
    for (Eigen::Index i = 0; i < p; ++i) append_value(line, traj.y_seq(i, t));
    out << line << "\n";
  }
  if (!out) throw Error("write_trajectory_csv: write failed for " + path);
}

CsvData read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("read_trajectory_csv: cannot open " + path);
  std::string header;
  if (!std::getline(in, header))
    throw Error("read_trajectory_csv: empty file " + path);

  // Parse the header into column groups.
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  if (cols.empty() || cols[0] != "t")
    throw Error("read_trajectory_csv: header must start with 't'");
  int n = 0, m = 0, p = 0;
  for (std::size_t i = 1; i < cols.size(); ++i) {
    if (cols[i].rfind('x', 0) == 0)
      ++n;
    else if (cols[i].rfind('u', 0) == 0)
      ++m;
    else if (cols[i].rfind('y', 0) == 0)
      ++p;
    else
      throw Error("read_trajectory_csv: unknown column " + cols[i]);
  }

  std::vector<std::vector<double>> rows;
  std::string line;
  int t0 = 0;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    if (row.size() != cols.size())
      throw Error("read_trajectory_csv: ragged row in " + path);
    if (first) {
      t0 = static_cast<int>(row[0]);
      first = false;
    }
    rows.push_back(std::move(row));
  }

  CsvData data;
  data.t0 = t0;
  const Eigen::Index T = static_cast<Eigen::Index>(rows.size());
  data.x_seq.resize(n, n > 0 ? T : 0);
  data.u_seq.resize(m, T);
  data.y_seq.resize(p, T);
  for (Eigen::Index t = 0; t < T; ++t) {
    int c = 1;
    for (int i = 0; i < n; ++i) data.x_seq(i, t) = rows[t][c++];
    for (int i = 0; i < m; ++i) data.u_seq(i, t) = rows[t][c++];
    for (int i = 0; i < p; ++i) data.y_seq(i, t) = rows[t][c++];
  }
  return data;
}

}  // namespace stochpc
