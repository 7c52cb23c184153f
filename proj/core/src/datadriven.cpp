#include "stochpc/datadriven.hpp"

#include "stochpc/numerics.hpp"

namespace stochpc {

void OfflineData::validate() const {
  require_dims(u_d.cols() == y_d.cols(), "OfflineData: u/y lengths");
  require_dims(u_d.rows() >= 1 && y_d.rows() >= 1, "OfflineData: signal dims");
}

LtiModel AuxModel::to_lti(const Mat& Sigma_v) const {
  LtiModel lti;
  lti.A = A_bold;
  lti.B = B_bold;
  lti.C = C_bold;
  lti.Sigma_w = Sigma_w_bold;
  lti.Sigma_v = Sigma_v;
  lti.validate();
  return lti;
}

Mat hankel(const Mat& seq, int depth) {
  const Eigen::Index dim = seq.rows(), len = seq.cols();
  if (depth < 1) throw Error("hankel: depth must be >= 1");
  require_dims(len >= depth, "hankel: sequence shorter than depth");
  const Eigen::Index cols = len - depth + 1;
  Mat H(dim * depth, cols);
  for (int i = 0; i < depth; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      H.block(i * dim, j, dim, 1) = seq.col(i + j);
  return H;
}

bool is_persistently_exciting(const Mat& seq, int order) {
  if (order < 1) throw Error("is_persistently_exciting: order must be >= 1");
  if (seq.cols() < order) return false;
  const Mat H = hankel(seq, order);
  return numerical_rank(H) == H.rows();
}

DataMatrices partition(const OfflineData& data, int L) {
  data.validate();
  if (L < 1) throw Error("partition: L must be >= 1");
  require_dims(data.T_d() >= 2 * L, "partition: data shorter than 2L");
  DataMatrices dm;
  dm.L = L;
  dm.m = static_cast<int>(data.u_d.rows());
  dm.p = static_cast<int>(data.y_d.rows());
  const Mat U = hankel(data.u_d, 2 * L);
  const Mat Y = hankel(data.y_d, 2 * L);
  dm.h = static_cast<int>(U.cols());
  dm.U1 = U.topRows(dm.m * L);
  dm.U2 = U.bottomRows(dm.m * L);
  dm.Y1 = Y.topRows(dm.p * L);
  dm.Y2 = Y.bottomRows(dm.p * L);
  return dm;
}

RecoveredQuantities recover_quantities(const DataMatrices& dm,
                                       std::optional<double> tikhonov_lambda) {
  const int L = dm.L, m = dm.m, p = dm.p;
  Mat W(dm.U1.rows() + dm.Y1.rows() + dm.U2.rows(), dm.h);
  W << dm.U1, dm.Y1, dm.U2;

  Mat P;
  if (tikhonov_lambda)
    P = tikhonov_solve(W, dm.Y2, *tikhonov_lambda);
  else
    P = dm.Y2 * pinv(W);

  RecoveredQuantities rq;
  rq.L = L;
  rq.m = m;
  rq.p = p;
  rq.Gamma_U = P.middleCols(0, m * L);
  rq.Gamma_Y = P.middleCols(m * L, p * L);
  rq.G = P.middleCols(m * L + p * L, m * L);
  rq.H = rq.Gamma_U + rq.Gamma_Y * rq.G;
  rq.Gamma1_U = rq.Gamma_U.topRows(p);
  rq.Gamma1_Y = rq.Gamma_Y.topRows(p);
  return rq;
}

void window_selectors(int p, int L, Mat& E, Mat& F) {
  if (p < 1 || L < 1) throw Error("window_selectors: p, L must be >= 1");
  // S_j (1-based) picks the j-th p-block out of a pL vector. Stack block
  // row r (0-based, r = 0..L) as [S_r, S_{r−1}, …, S_1, 0, …]; the first
  // L rows form E, the last row F.
  Mat stack = Mat::Zero(p * (L + 1), p * L * L);
  for (int r = 0; r <= L; ++r)
    for (int c = 0; c < L; ++c) {
      const int j = r - c;  // selector index S_j applied to window slot c
      if (j < 1 || j > L) continue;
      // Slot c of the window is a pL vector; S_j picks rows [(j−1)p, jp).
      stack.block(r * p, c * p * L + (j - 1) * p, p, p) =
          Mat::Identity(p, p);
    }
  E = stack.topRows(p * L);
  F = stack.bottomRows(p);
}

AuxModel build_aux_model(const RecoveredQuantities& rq, int L, int m, int p,
                         const Mat& Sigma_rho) {
  require_dims(rq.L == L && rq.m == m && rq.p == p,
               "build_aux_model: recovered quantities disagree with (L,m,p)");
  require_dims(rq.Gamma1_U.rows() == p && rq.Gamma1_U.cols() == m * L,
               "build_aux_model: Gamma1_U shape");
  require_dims(rq.Gamma1_Y.rows() == p && rq.Gamma1_Y.cols() == p * L,
               "build_aux_model: Gamma1_Y shape");
  require_dims(Sigma_rho.rows() == p * L && Sigma_rho.cols() == p * L,
               "build_aux_model: Sigma_rho shape");

  AuxModel aux;
  aux.L = L;
  aux.m = m;
  aux.p = p;
  const int nu = m * L, ny = p * L, nr = p * L * L;
  const int n_aux = nu + ny + nr;

  Mat E, F;
  window_selectors(p, L, E, F);

  aux.A_bold = Mat::Zero(n_aux, n_aux);
  // Input window shift: drop the oldest input, new one arrives via B.
  if (L > 1)
    aux.A_bold.block(0, m, m * (L - 1), m * (L - 1)) =
        Mat::Identity(m * (L - 1), m * (L - 1));
  // Noise-free output window shift plus the one-step predictor in the
  // bottom p rows.
  if (L > 1)
    aux.A_bold.block(nu, nu + p, p * (L - 1), p * (L - 1)) =
        Mat::Identity(p * (L - 1), p * (L - 1));
  aux.A_bold.block(nu + p * (L - 1), 0, p, nu) = rq.Gamma1_U;
  aux.A_bold.block(nu + p * (L - 1), nu, p, ny) = rq.Gamma1_Y;
  aux.A_bold.block(nu + p * (L - 1), nu + ny, p, nr) =
      F - rq.Gamma1_Y * E;
  // Noise-response window shift; the new response arrives as process noise.
  if (L > 1)
    aux.A_bold.block(nu + ny, nu + ny + p * L, p * L * (L - 1),
                     p * L * (L - 1)) =
        Mat::Identity(p * L * (L - 1), p * L * (L - 1));

  aux.B_bold = Mat::Zero(n_aux, m);
  aux.B_bold.block(m * (L - 1), 0, m, m) = Mat::Identity(m, m);

  aux.C_bold = Mat::Zero(p, n_aux);
  aux.C_bold.middleCols(0, nu) = rq.Gamma1_U;
  aux.C_bold.middleCols(nu, ny) = rq.Gamma1_Y;
  aux.C_bold.middleCols(nu + ny, nr) = F - rq.Gamma1_Y * E;

  aux.Sigma_w_bold = Mat::Zero(n_aux, n_aux);
  aux.Sigma_w_bold.bottomRightCorner(p * L, p * L) = symmetrized(Sigma_rho);
  return aux;
}

}  // namespace stochpc
