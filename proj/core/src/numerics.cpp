#include "stochpc/numerics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <vector>

namespace stochpc {

namespace {

double pinv_tolerance(const Mat& M, const Vec& singular_values) {
  const double smax = singular_values.size() ? singular_values(0) : 0.0;
  return smax * static_cast<double>(std::max(M.rows(), M.cols())) *
         std::numeric_limits<double>::epsilon();
}

}  // namespace

Mat pinv(const Mat& M) {
  if (M.size() == 0) return Mat(M.cols(), M.rows());
  Eigen::BDCSVD<Mat> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double tol = pinv_tolerance(M, s);
  Vec sinv = Vec::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) sinv(i) = 1.0 / s(i);
  return svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose();
}

int numerical_rank(const Mat& M) {
  if (M.size() == 0) return 0;
  Eigen::BDCSVD<Mat> svd(M);
  const Vec& s = svd.singularValues();
  const double tol = pinv_tolerance(M, s);
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) ++r;
  return r;
}

Mat tikhonov_solve(const Mat& W, const Mat& Y, double lambda) {
  require_dims(Y.cols() == W.cols(), "tikhonov_solve: Y and W column counts");
  if (!(lambda > 0.0)) throw Error("tikhonov_solve: lambda must be positive");
  Mat gram = W.transpose() * W;  // h × h
  gram.diagonal().array() += lambda;
  Eigen::LLT<Mat> llt(gram);
  if (llt.info() != Eigen::Success)
    throw Error("tikhonov_solve: regularized Gram matrix not PD");
  return Y * llt.solve(W.transpose());  // Y · (WᵀW+λI)⁻¹Wᵀ
}

DareSolution solve_dare(const Mat& A, const Mat& B, const Mat& Qx,
                        const Mat& R, double tol, int max_iter) {
  const Eigen::Index n = A.rows(), m = B.cols();
  require_dims(A.cols() == n && B.rows() == n, "solve_dare: A/B");
  require_dims(Qx.rows() == n && Qx.cols() == n, "solve_dare: Qx");
  require_dims(R.rows() == m && R.cols() == m, "solve_dare: R");

  auto riccati_step = [&](const Mat& P) -> Mat {
    Mat W = R + B.transpose() * P * B;
    Eigen::LLT<Mat> llt(symmetrized(W));
    if (llt.info() != Eigen::Success)
      throw Error("solve_dare: R + BᵀPB lost positive definiteness");
    Mat Kt = llt.solve(B.transpose() * P * A);  // (R+BᵀPB)⁻¹BᵀPA
    return symmetrized(Qx + A.transpose() * P * (A - B * Kt));
  };

  DareSolution sol;
  Mat P = symmetrized(Qx);
  int it = 0;
  for (; it < max_iter; ++it) {
    Mat Pn = riccati_step(P);
    const double step = (Pn - P).norm();
    P = Pn;
    if (step <= tol * (1.0 + P.norm())) break;
  }
  if (it >= max_iter)
    throw MaxIterError("solve_dare: fixed-point iteration cap reached");

  Mat W = R + B.transpose() * P * B;
  Eigen::LLT<Mat> llt(symmetrized(W));
  sol.P_lqr = P;
  sol.K = -llt.solve(B.transpose() * P * A);
  sol.iterations = it + 1;
  sol.residual = (P - riccati_step(P)).norm() / (1.0 + P.norm());
  return sol;
}

double cdfn(double z) {
  // erfc keeps full precision in the left tail where ½+½erf cancels.
  return 0.5 * std::erfc(-z * M_SQRT1_2);
}

double icdfn(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error("icdfn: p must lie in (0,1)");

  // Rational approximation (relative error < 1.15e-9 everywhere), then two
  // Newton refinements against cdfn push the error below 1e-12.
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  for (int pass = 0; pass < 2; ++pass) {
    const double density = inv_sqrt_2pi * std::exp(-0.5 * x * x);
    if (density < 1e-300) break;  // deep-tail guard: estimate already tight
    x -= (cdfn(x) - p) / density;
  }
  return x;
}

namespace {

struct KktResiduals {
  double stationarity;
  double feasibility;
  double complementarity;
  double max() const {
    return std::max({stationarity, feasibility, complementarity});
  }
};

KktResiduals kkt_residuals(const QpProblem& qp, const Vec& x, const Vec& y) {
  KktResiduals r{};
  r.stationarity =
      (qp.H * x + qp.f + qp.G_ineq.transpose() * y).lpNorm<Eigen::Infinity>();
  if (qp.G_ineq.rows() > 0) {
    Vec slack = qp.h_ineq - qp.G_ineq * x;
    r.feasibility = std::max(0.0, (-slack).maxCoeff());
    r.complementarity = (y.array() * slack.array()).abs().maxCoeff();
  }
  return r;
}

// Equality-KKT refinement on an estimated active set; shrinks the set when
// a multiplier comes back decisively negative. Returns false when no
// consistent refinement is found.
bool polish_active_set(const QpProblem& qp, Vec& x, Vec& y) {
  const Eigen::Index n = qp.H.rows(), mc = qp.G_ineq.rows();
  const double yscale = (mc > 0) ? y.lpNorm<Eigen::Infinity>() : 0.0;
  Vec slack = (mc > 0) ? Vec(qp.h_ineq - qp.G_ineq * x) : Vec();

  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < mc; ++i) {
    const double stol = 1e-7 * (1.0 + std::abs(qp.h_ineq(i)));
    if (slack(i) <= stol || y(i) > 1e-9 * (1.0 + yscale)) active.push_back(i);
  }

  for (int pass = 0; pass < 8; ++pass) {
    const Eigen::Index na = static_cast<Eigen::Index>(active.size());
    Mat kkt = Mat::Zero(n + na, n + na);
    kkt.topLeftCorner(n, n) = qp.H;
    Vec rhs(n + na);
    rhs.head(n) = -qp.f;
    for (Eigen::Index j = 0; j < na; ++j) {
      kkt.block(n + j, 0, 1, n) = qp.G_ineq.row(active[j]);
      kkt.block(0, n + j, n, 1) = qp.G_ineq.row(active[j]).transpose();
      rhs(n + j) = qp.h_ineq(active[j]);
    }
    Eigen::ColPivHouseholderQR<Mat> qr(kkt);
    Vec sol = qr.solve(rhs);
    if ((kkt * sol - rhs).lpNorm<Eigen::Infinity>() >
        1e-8 * (1.0 + rhs.lpNorm<Eigen::Infinity>()))
      return false;  // degenerate KKT system; keep the splitting solution

    // Drop the most negative multiplier and retry, if any.
    Eigen::Index worst = -1;
    double worst_nu = -1e-8;
    for (Eigen::Index j = 0; j < na; ++j)
      if (sol(n + j) < worst_nu) worst_nu = sol(n + j), worst = j;
    if (worst >= 0) {
      active.erase(active.begin() + worst);
      continue;
    }

    Vec x_pol = sol.head(n);
    if (mc > 0) {
      Vec viol = qp.G_ineq * x_pol - qp.h_ineq;
      double feas_tol =
          1e-9 * (1.0 + qp.h_ineq.lpNorm<Eigen::Infinity>());
      if (viol.maxCoeff() > feas_tol) return false;
    }
    Vec y_pol = Vec::Zero(mc);
    for (Eigen::Index j = 0; j < na; ++j)
      y_pol(active[j]) = std::max(0.0, sol(n + j));
    x = x_pol;
    y = y_pol;
    return true;
  }
  return false;
}

}  // namespace

QpSolution solve_qp(const QpProblem& qp, const QpOptions& opts) {
  const Eigen::Index n = qp.H.rows(), mc = qp.G_ineq.rows();
  require_dims(qp.H.cols() == n, "solve_qp: H square");
  require_dims(qp.f.size() == n, "solve_qp: f length");
  require_dims(mc == 0 || qp.G_ineq.cols() == n, "solve_qp: G_ineq cols");
  require_dims(qp.h_ineq.size() == mc, "solve_qp: h_ineq length");
  if ((qp.H - qp.H.transpose()).lpNorm<Eigen::Infinity>() >
      1e-10 * (1.0 + qp.H.lpNorm<Eigen::Infinity>()))
    throw Error("solve_qp: H must be symmetric");

  // Constant rows (all-zero coefficients) are decided immediately.
  for (Eigen::Index i = 0; i < mc; ++i)
    if (qp.G_ineq.row(i).lpNorm<Eigen::Infinity>() == 0.0 && qp.h_ineq(i) < 0.0)
      throw InfeasibleError("solve_qp: constant constraint row violated");

  QpSolution sol;

  if (mc == 0) {
    Eigen::LDLT<Mat> ldlt(symmetrized(qp.H));
    sol.x = ldlt.solve(-qp.f);
    sol.dual = Vec();
    sol.iterations = 0;
    const double rstat =
        (qp.H * sol.x + qp.f).lpNorm<Eigen::Infinity>();
    if (rstat > 1e-8 * (1.0 + qp.f.lpNorm<Eigen::Infinity>()))
      throw Error("solve_qp: unconstrained problem is singular or unbounded");
    sol.kkt_residual = rstat;
    sol.polished = true;
    return sol;
  }

  const double sigma = 1e-6;
  double rho = 0.1;
  Mat GtG = qp.G_ineq.transpose() * qp.G_ineq;
  auto factor = [&](double rho_now) {
    Mat M = symmetrized(qp.H) + rho_now * GtG;
    M.diagonal().array() += sigma;
    return Eigen::LDLT<Mat>(M);
  };
  Eigen::LDLT<Mat> ldlt = factor(rho);

  Vec x = Vec::Zero(n);
  Vec z = qp.h_ineq.cwiseMin(0.0);
  Vec y = Vec::Zero(mc);
  constexpr int check_interval = 25;
  int it = 0;
  bool converged = false;

  for (it = 1; it <= opts.max_iter; ++it) {
    Vec rhs = sigma * x - qp.f + qp.G_ineq.transpose() * (rho * z - y);
    x = ldlt.solve(rhs);
    Vec Gx = qp.G_ineq * x;
    Vec z_new = (Gx + y / rho).cwiseMin(qp.h_ineq);
    Vec y_new = y + rho * (Gx - z_new);
    Vec dy = y_new - y;
    z = z_new;
    y = y_new;

    if (it % check_interval == 0 || it == opts.max_iter) {
      const double r_prim = (Gx - z).lpNorm<Eigen::Infinity>();
      Vec Hx = qp.H * x;
      Vec Gty = qp.G_ineq.transpose() * y;
      const double r_dual = (Hx + qp.f + Gty).lpNorm<Eigen::Infinity>();
      const double eps_prim =
          opts.eps_abs + opts.eps_rel * std::max(Gx.lpNorm<Eigen::Infinity>(),
                                                 z.lpNorm<Eigen::Infinity>());
      const double eps_dual =
          opts.eps_abs +
          opts.eps_rel * std::max({Hx.lpNorm<Eigen::Infinity>(),
                                   qp.f.lpNorm<Eigen::Infinity>(),
                                   Gty.lpNorm<Eigen::Infinity>()});
      if (r_prim <= eps_prim && r_dual <= eps_dual) {
        converged = true;
        break;
      }

      // Farkas-style primal infeasibility certificate carried by the dual
      // update direction: e ≥ 0, Gᵀe ≈ 0, hᵀe < 0.
      const double dy_norm = dy.lpNorm<Eigen::Infinity>();
      if (dy_norm > 1e-14) {
        Vec e = dy / dy_norm;
        if (e.minCoeff() >= -1e-10 &&
            (qp.G_ineq.transpose() * e).lpNorm<Eigen::Infinity>() <= 1e-9 &&
            qp.h_ineq.dot(e) <= -1e-9)
          throw InfeasibleError("solve_qp: primal infeasible");
      }

      // Deterministic residual-balancing penalty adaptation.
      if (it % 200 == 0) {
        const double pr = r_prim / std::max(eps_prim, 1e-30);
        const double du = r_dual / std::max(eps_dual, 1e-30);
        double scale = std::sqrt(pr / std::max(du, 1e-30));
        scale = std::clamp(scale, 0.2, 5.0);
        const double rho_new = std::clamp(rho * scale, 1e-6, 1e6);
        if (rho_new != rho) {
          rho = rho_new;
          ldlt = factor(rho);
        }
      }
    }
  }

  if (!converged)
    throw MaxIterError("solve_qp: splitting iteration cap reached");

  sol.x = x;
  sol.dual = y.cwiseMax(0.0);
  sol.iterations = it;
  if (opts.polish) sol.polished = polish_active_set(qp, sol.x, sol.dual);
  sol.kkt_residual = kkt_residuals(qp, sol.x, sol.dual).max();
  return sol;
}

}  // namespace stochpc
