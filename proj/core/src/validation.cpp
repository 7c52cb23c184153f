#include "stochpc/validation.hpp"

#include "stochpc/numerics.hpp"

namespace stochpc::validation {

namespace {

// Strictly causal block Toeplitz: block (i, j) = C A^{i−j−1} Bcols for
// i > j, zero otherwise. With Bcols = B this is the depth-L forced
// response G; with Bcols = I it is the noise-response counterpart.
Mat strict_toeplitz(const Mat& A, const Mat& C, const Mat& Bcols, int L) {
  const Eigen::Index p = C.rows(), w = Bcols.cols();
  Mat T = Mat::Zero(p * L, w * L);
  Mat CAk = C;  // C A^k as k grows
  for (int d = 1; d < L; ++d) {
    // Diagonal offset d carries C A^{d−1} Bcols.
    const Mat blockv = CAk * Bcols;
    for (int j = 0; j + d < L; ++j)
      T.block((j + d) * p, j * w, p, w) = blockv;
    CAk = CAk * A;
  }
  return T;
}

Mat matrix_power(const Mat& A, int k) {
  Mat P = Mat::Identity(A.rows(), A.cols());
  for (int i = 0; i < k; ++i) P = P * A;
  return P;
}

}  // namespace

PhiOracles build_phi_oracles(const LtiModel& model, int L) {
  model.validate();
  if (L < 1) throw Error("build_phi_oracles: L must be >= 1");
  const int n = model.n(), m = model.m(), p = model.p();

  const Mat Obs = extended_observability(model.A, model.C, L);   // pL × n
  const Mat Ctr = extended_controllability(model.A, model.B, L); // n × mL
  const Mat CtrW =
      extended_controllability(model.A, Mat::Identity(n, n), L); // n × nL
  const Mat AL = matrix_power(model.A, L);
  const Mat G = strict_toeplitz(model.A, model.C, model.B, L);   // pL × mL
  const Mat GW =
      strict_toeplitz(model.A, model.C, Mat::Identity(n, n), L); // pL × nL

  PhiOracles ph;
  ph.L = L;
  ph.n = n;
  ph.m = m;
  ph.p = p;

  const int n_xi = m * L + n * (L + 1);
  ph.Phi_orig.resize(n, n_xi);
  ph.Phi_orig << Ctr, AL, CtrW;

  const int n_aux = m * L + p * L + p * L * L;
  ph.Phi_aux = Mat::Zero(n_aux, n_xi);
  ph.Phi_aux.block(0, 0, m * L, m * L) = Mat::Identity(m * L, m * L);
  ph.Phi_aux.block(m * L, 0, p * L, m * L) = G;
  ph.Phi_aux.block(m * L, m * L, p * L, n) = Obs;
  ph.Phi_aux.block(m * L, m * L + n, p * L, n * L) = GW;
  for (int s = 0; s < L; ++s)
    ph.Phi_aux.block(m * L + p * L + s * p * L, m * L + n + s * n, p * L, n) =
        Obs;

  // [Phi_U, Phi_Y] = [Ctr, A^L] · pinv([[I, 0], [G, Obs]]).
  Mat lift = Mat::Zero(m * L + p * L, m * L + n);
  lift.topLeftCorner(m * L, m * L) = Mat::Identity(m * L, m * L);
  lift.bottomLeftCorner(p * L, m * L) = G;
  lift.bottomRightCorner(p * L, n) = Obs;
  Mat head(n, m * L + n);
  head << Ctr, AL;
  const Mat PhiUY = head * pinv(lift);  // n × (mL + pL)
  const Mat Phi_U = PhiUY.leftCols(m * L);
  const Mat Phi_Y = PhiUY.rightCols(p * L);

  // Phi_rho = (CtrW − Phi_Y G_W)(I_L ⊗ Obs⁺).
  const Mat ObsDag = pinv(Obs);  // n × pL
  const Mat core = CtrW - Phi_Y * GW;  // n × nL
  Mat Phi_rho = Mat::Zero(n, p * L * L);
  for (int s = 0; s < L; ++s)
    Phi_rho.middleCols(s * p * L, p * L) =
        core.middleCols(s * n, n) * ObsDag;

  ph.Phi.resize(n, n_aux);
  ph.Phi << Phi_U, Phi_Y, Phi_rho;
  return ph;
}

GaussianBelief matched_prior(const GaussianBelief& true_prior,
                             const PhiOracles& oracles) {
  require_dims(true_prior.mu.size() == oracles.n &&
                   true_prior.Sigma.rows() == oracles.n,
               "matched_prior: prior dimension");
  if (numerical_rank(oracles.Phi_orig) != oracles.n)
    throw Error("matched_prior: Phi_orig must have full row rank");
  const Mat dag = pinv(oracles.Phi_orig);
  const Vec mu_xi = dag * true_prior.mu;
  const Mat Sigma_xi = symmetrized(dag * true_prior.Sigma * dag.transpose());
  GaussianBelief aux;
  aux.mu = oracles.Phi_aux * mu_xi;
  aux.Sigma =
      symmetrized(oracles.Phi_aux * Sigma_xi * oracles.Phi_aux.transpose());
  return aux;
}

Mat noise_response_covariance(const LtiModel& model, int L) {
  const Mat Obs = extended_observability(model.A, model.C, L);
  return symmetrized(Obs * model.Sigma_w * Obs.transpose());
}

RecoveredQuantities model_quantities(const LtiModel& model, int L) {
  model.validate();
  const int n = model.n(), m = model.m(), p = model.p();
  const Mat Obs = extended_observability(model.A, model.C, L);
  const Mat Ctr = extended_controllability(model.A, model.B, L);
  const Mat AL = matrix_power(model.A, L);
  const Mat G = strict_toeplitz(model.A, model.C, model.B, L);

  RecoveredQuantities rq;
  rq.L = L;
  rq.m = m;
  rq.p = p;
  rq.G = G;
  rq.H = Obs * Ctr;

  Mat lift = Mat::Zero(m * L + p * L, m * L + n);
  lift.topLeftCorner(m * L, m * L) = Mat::Identity(m * L, m * L);
  lift.bottomLeftCorner(p * L, m * L) = G;
  lift.bottomRightCorner(p * L, n) = Obs;
  Mat head(p * L, m * L + n);
  head << rq.H, Obs * AL;
  const Mat Gamma = head * pinv(lift);
  rq.Gamma_U = Gamma.leftCols(m * L);
  rq.Gamma_Y = Gamma.rightCols(p * L);
  rq.Gamma1_U = rq.Gamma_U.topRows(p);
  rq.Gamma1_Y = rq.Gamma_Y.topRows(p);
  return rq;
}

Vec aux_state_from_history(const LtiModel& model, int L, const Mat& u_window,
                           const Mat& yo_window, const Mat& w_window) {
  const int n = model.n(), m = model.m(), p = model.p();
  require_dims(u_window.rows() == m && u_window.cols() == L,
               "aux_state_from_history: u window");
  require_dims(yo_window.rows() == p && yo_window.cols() == L,
               "aux_state_from_history: y window");
  require_dims(w_window.rows() == n && w_window.cols() == L,
               "aux_state_from_history: w window");
  const Mat Obs = extended_observability(model.A, model.C, L);
  Vec x(m * L + p * L + p * L * L);
  for (int s = 0; s < L; ++s) x.segment(s * m, m) = u_window.col(s);
  for (int s = 0; s < L; ++s)
    x.segment(m * L + s * p, p) = yo_window.col(s);
  for (int s = 0; s < L; ++s)
    x.segment(m * L + p * L + s * p * L, p * L) = Obs * w_window.col(s);
  return x;
}

}  // namespace stochpc::validation
