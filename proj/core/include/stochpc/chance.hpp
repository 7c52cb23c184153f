#pragma once

#include <functional>
#include <vector>

#include "stochpc/estimation.hpp"
#include "stochpc/numerics.hpp"
#include "stochpc/plant.hpp"
#include "stochpc/types.hpp"

/// Chance constraints: polytopic specs with violation budgets, normal-
/// quantile tightening, the condensed nominal QP, and iterative risk
/// allocation (IRA).
namespace stochpc {

/// Polytopic constraints E_u u ≤ f_u, E_y y ≤ f_y, each row required to
/// hold jointly per step with probability ≥ 1 − budget. Budgets must lie
/// in (0, ½] so every tightened row stays convex. Empty E/f (zero rows)
/// mean "unconstrained".
struct PolytopeSpec {
  Mat E_u;  ///< q_u × m
  Vec f_u;  ///< q_u
  Mat E_y;  ///< q_y × p
  Vec f_y;  ///< q_y
  double p_u = 0.5;
  double p_y = 0.5;

  int q_u() const { return static_cast<int>(E_u.rows()); }
  int q_y() const { return static_cast<int>(E_y.rows()); }
  void validate(int m, int p) const;
};

/// Per-row, per-step risk split; column sums must equal the budget.
struct RiskAllocation {
  Mat alloc_u;  ///< q_u × N
  Mat alloc_y;  ///< q_y × N
};

/// Deterministic tightened rows: for each (i, t),
///   e_iᵀ z_nom_t ≤ bound(i,t) = f_i + √(e_iᵀ Σ_t e_i) · icdfn(p_{i,t})
/// (margin ≤ 0 for p ≤ ½, i.e. a tightening). Carries the row vectors so
/// the QP builder needs no other constraint source.
struct TightenedConstraints {
  Mat E_u;       ///< q_u × m row vectors (copied from the source polytope)
  Mat E_y;       ///< q_y × p
  Mat margin_u;  ///< q_u × N
  Mat margin_y;  ///< q_y × N
  Mat bound_u;   ///< q_u × N, f_u + margin_u column-wise
  Mat bound_y;   ///< q_y × N
};

/// Split each budget uniformly: p/q per row, every step.
RiskAllocation uniform_allocation(const PolytopeSpec& spec, int N);

/// Apply normal-quantile tightening for the given allocation and
/// input/output variances (io.Sigma_u[t], io.Sigma_y[t]).
TightenedConstraints tighten(const PolytopeSpec& spec,
                             const RiskAllocation& alloc,
                             const IoVariances& io);

/// Condensed nominal optimal control problem over the stacked inputs
/// u = col(u_nom_0, …, u_nom_{N−1}):
///   minimize   Σ_t ‖y_nom_t − r_t‖²_Q + ‖u_nom_t‖²_R
///   subject to E_u u_nom_t ≤ bound_u(:,t),  E_y y_nom_t ≤ bound_y(:,t)
/// with x_nom_0 = mu, x_nom_{t+1} = A x_nom_t + B u_nom_t, y_nom_t = C x_nom_t.
/// y_nom_0 is constant in the decision; its constraint row is kept (it can
/// certify infeasibility of the current belief).
struct SmpcQp {
  QpProblem qp;        ///< decision: stacked nominal inputs (mN)
  Mat Sx;              ///< nN × n  state prediction from the initial mean
  Mat Su;              ///< nN × mN state prediction from the inputs
  Vec mu;              ///< initial nominal state (prior mean)
  double cost_offset;  ///< ½uᵀHu + fᵀu + cost_offset = true tracking cost
  int m = 0, p = 0, N = 0;

  /// Reshape a stacked decision into m × N nominal inputs.
  Mat unstack_inputs(const Vec& u_stacked) const;
  /// Nominal states x_nom (n × (N+1), includes terminal state).
  Mat nominal_states(const LtiModel& model, const Vec& u_stacked) const;
  /// Nominal outputs y_nom (p × N).
  Mat nominal_outputs(const LtiModel& model, const Vec& u_stacked) const;
};

SmpcQp build_smpc_qp(const LtiModel& model, const Vec& prior_mean,
                     const Mat& K, const TightenedConstraints& tight,
                     const Mat& Q, const Mat& R, const Mat& refs, int N);

/// One solved nominal plan: inputs, outputs, and the true tracking cost
/// Σ_t ‖y_nom_t − r_t‖²_Q + ‖u_nom_t‖²_R.
struct NominalPlan {
  Mat u_nom;  ///< m × N
  Mat y_nom;  ///< p × N
  double cost = 0;
};

/// Problem builder handed to IRA: solve the nominal QP under the given
/// tightened bounds. Throws InfeasibleError when no plan exists.
using PlanSolver = std::function<NominalPlan(const TightenedConstraints&)>;

struct IraOptions {
  double alpha = 0.7;       ///< risk-update smoothing weight
  double eps = 1e-6;        ///< cost-decrease termination threshold
  int max_outer = 50;       ///< outer iteration cap
  double active_tol = 1e-7; ///< row active when slack ≤ tol·(1+|f_i|)
  double risk_floor = 1e-9; ///< lower clamp keeping icdfn finite
};

struct IraResult {
  NominalPlan plan;
  RiskAllocation alloc;
  int iterations = 0;                ///< QP solves performed
  std::vector<double> cost_history;  ///< cost after each solve
  /// Allocation used for each solve, in order; alloc_history.front() is the
  /// uniform start and alloc_history.back() equals alloc.
  std::vector<RiskAllocation> alloc_history;
};

/// Iterative risk allocation: start uniform, solve, then repeatedly move
/// inactive-row risks toward the realized tail probability of the current
/// nominal (convex combination with weight alpha) and redistribute the
/// freed budget equally over the active rows of the same step. Terminates
/// on cost stagnation (|ΔJ| ≤ eps) or when every step's active count is
/// all-or-none; throws MaxIterError at the outer cap and propagates
/// InfeasibleError from the solver.
IraResult iterative_risk_allocation(const PlanSolver& solve,
                                    const PolytopeSpec& spec,
                                    const IoVariances& io, int N,
                                    const IraOptions& opts = {});

}  // namespace stochpc
