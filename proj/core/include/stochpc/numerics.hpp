#pragma once

#include "stochpc/types.hpp"

/// Dense numerical kernels: pseudoinverse, ridge-regularized least squares,
/// Riccati fixed point, normal quantiles, and a convex QP solver.
namespace stochpc {

/// Convex quadratic program
///   minimize    0.5 xᵀ H x + fᵀ x
///   subject to  G_ineq x ≤ h_ineq        (componentwise)
/// H must be symmetric positive semidefinite.
struct QpProblem {
  Mat H;
  Vec f;
  Mat G_ineq;  ///< zero rows allowed (unconstrained problem)
  Vec h_ineq;
};

struct QpOptions {
  double eps_abs = 1e-9;   ///< absolute residual tolerance
  double eps_rel = 1e-9;   ///< relative residual tolerance
  int max_iter = 200000;   ///< operator-splitting iteration cap
  bool polish = true;      ///< active-set refinement after convergence
};

struct QpSolution {
  Vec x;                     ///< primal minimizer
  Vec dual;                  ///< multipliers for G_ineq x ≤ h_ineq (≥ 0)
  int iterations = 0;        ///< splitting iterations performed
  bool polished = false;     ///< active-set refinement succeeded
  double kkt_residual = 0;   ///< max of stationarity / primal feasibility /
                             ///< complementarity residuals at the solution
};

/// Stabilizing solution of the discrete algebraic Riccati equation together
/// with the associated infinite-horizon feedback gain.
struct DareSolution {
  Mat P_lqr;           ///< fixed point P = Qx + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA
  Mat K;               ///< feedback u = K x,  K = −(R+BᵀPB)⁻¹BᵀPA
  int iterations = 0;  ///< fixed-point iterations used
  double residual = 0; ///< ‖P − riccati(P)‖_F / (1 + ‖P‖_F)
};

/// Moore-Penrose pseudoinverse via SVD. Singular values below
/// σ_max · max(rows, cols) · machine-eps are treated as zero; this same
/// tolerance rule backs every rank decision in the library.
Mat pinv(const Mat& M);

/// Numerical rank of M under the pinv tolerance rule.
int numerical_rank(const Mat& M);

/// Ridge-regularized right-inverse application: returns
///   Y · (WᵀW + λI)⁻¹ Wᵀ ,   λ > 0.
/// Robust replacement for Y · pinv(W) when W carries noise.
Mat tikhonov_solve(const Mat& W, const Mat& Y, double lambda);

/// Stabilizing DARE solution by fixed-point iteration from P₀ = Qx.
/// Qx must be symmetric PSD, R symmetric PD, (A,B) stabilizable and
/// (A,Qx) detectable — violations surface as MaxIterError.
/// Convergence: ‖P_{j+1}−P_j‖_F ≤ tol · (1+‖P_j‖_F).
DareSolution solve_dare(const Mat& A, const Mat& B, const Mat& Qx,
                        const Mat& R, double tol = 1e-10,
                        int max_iter = 100000);

/// Standard normal CDF, Φ(z) = ½ + ½ erf(z/√2), evaluated via erfc so the
/// left tail keeps full relative precision.
double cdfn(double z);

/// Standard normal quantile, Φ⁻¹(p) for p ∈ (0,1): rational initial
/// estimate refined by two Newton steps on cdfn; |error| below 1e-12.
double icdfn(double p);

/// Solve a convex QP by dense operator splitting (ADMM) with an
/// equality-KKT active-set polish.  Throws InfeasibleError when a primal
/// infeasibility certificate is found and MaxIterError at the iteration cap.
QpSolution solve_qp(const QpProblem& qp, const QpOptions& opts = {});

}  // namespace stochpc
