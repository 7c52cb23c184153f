#include "stochpc/chance.hpp"

#include <cmath>
#include <limits>

namespace stochpc {

void PolytopeSpec::validate(int m, int p) const {
  require_dims(E_u.rows() == f_u.size(), "PolytopeSpec: E_u rows vs f_u");
  require_dims(E_y.rows() == f_y.size(), "PolytopeSpec: E_y rows vs f_y");
  require_dims(E_u.rows() == 0 || E_u.cols() == m, "PolytopeSpec: E_u cols");
  require_dims(E_y.rows() == 0 || E_y.cols() == p, "PolytopeSpec: E_y cols");
  auto budget_ok = [](double b) { return b > 0.0 && b <= 0.5; };
  if ((q_u() > 0 && !budget_ok(p_u)) || (q_y() > 0 && !budget_ok(p_y)))
    throw Error("PolytopeSpec: budgets must lie in (0, 0.5]");
}

RiskAllocation uniform_allocation(const PolytopeSpec& spec, int N) {
  if (N < 1) throw Error("uniform_allocation: N must be >= 1");
  RiskAllocation alloc;
  alloc.alloc_u = spec.q_u() > 0
                      ? Mat::Constant(spec.q_u(), N, spec.p_u / spec.q_u())
                      : Mat(0, N);
  alloc.alloc_y = spec.q_y() > 0
                      ? Mat::Constant(spec.q_y(), N, spec.p_y / spec.q_y())
                      : Mat(0, N);
  return alloc;
}

namespace {

void tighten_grid(const Mat& E, const Vec& f, const Mat& alloc,
                  const std::vector<Mat>& Sigma, Mat& margin, Mat& bound) {
  const Eigen::Index q = E.rows(), N = alloc.cols();
  margin.resize(q, N);
  bound.resize(q, N);
  for (Eigen::Index t = 0; t < N; ++t) {
    for (Eigen::Index i = 0; i < q; ++i) {
      const double var = std::max(
          0.0, (E.row(i) * Sigma[t] * E.row(i).transpose()).value());
      margin(i, t) = std::sqrt(var) * icdfn(alloc(i, t));
      bound(i, t) = f(i) + margin(i, t);
    }
  }
}

}  // namespace

TightenedConstraints tighten(const PolytopeSpec& spec,
                             const RiskAllocation& alloc,
                             const IoVariances& io) {
  const Eigen::Index N = std::max(alloc.alloc_u.cols(), alloc.alloc_y.cols());
  require_dims(alloc.alloc_u.rows() == spec.q_u() &&
                   alloc.alloc_y.rows() == spec.q_y(),
               "tighten: allocation rows");
  require_dims(static_cast<Eigen::Index>(io.Sigma_u.size()) >= N &&
                   static_cast<Eigen::Index>(io.Sigma_y.size()) >= N,
               "tighten: variance lists shorter than N");
  TightenedConstraints out;
  out.E_u = spec.E_u;
  out.E_y = spec.E_y;
  tighten_grid(spec.E_u, spec.f_u, alloc.alloc_u, io.Sigma_u, out.margin_u,
               out.bound_u);
  tighten_grid(spec.E_y, spec.f_y, alloc.alloc_y, io.Sigma_y, out.margin_y,
               out.bound_y);
  return out;
}

Mat SmpcQp::unstack_inputs(const Vec& u_stacked) const {
  require_dims(u_stacked.size() == static_cast<Eigen::Index>(m) * N,
               "SmpcQp: stacked input length");
  Mat U(m, N);
  for (int t = 0; t < N; ++t) U.col(t) = u_stacked.segment(t * m, m);
  return U;
}

Mat SmpcQp::nominal_states(const LtiModel& model, const Vec& u_stacked) const {
  const Mat U = unstack_inputs(u_stacked);
  Mat X(model.n(), N + 1);
  X.col(0) = mu;
  for (int t = 0; t < N; ++t)
    X.col(t + 1) = model.A * X.col(t) + model.B * U.col(t);
  return X;
}

Mat SmpcQp::nominal_outputs(const LtiModel& model, const Vec& u_stacked) const {
  return model.C * nominal_states(model, u_stacked).leftCols(N);
}

SmpcQp build_smpc_qp(const LtiModel& model, const Vec& prior_mean,
                     const Mat& K, const TightenedConstraints& tight,
                     const Mat& Q, const Mat& R, const Mat& refs, int N) {
  const int n = model.n(), m = model.m(), p = model.p();
  require_dims(prior_mean.size() == n, "build_smpc_qp: prior mean length");
  require_dims(K.rows() == m && K.cols() == n, "build_smpc_qp: K shape");
  require_dims(Q.rows() == p && Q.cols() == p, "build_smpc_qp: Q shape");
  require_dims(R.rows() == m && R.cols() == m, "build_smpc_qp: R shape");
  require_dims(refs.rows() == p && refs.cols() >= N,
               "build_smpc_qp: reference trajectory");
  if (N < 1) throw Error("build_smpc_qp: N must be >= 1");

  SmpcQp sq;
  sq.mu = prior_mean;
  sq.m = m;
  sq.p = p;
  sq.N = N;

  // Prediction operators: x_nom_t = (Sx)_t mu + (Su)_t u, with
  // (Su)_{t,i} = A^{t−1−i} B for i < t and zero otherwise.
  sq.Sx.resize(n * N, n);
  sq.Su = Mat::Zero(n * N, m * N);
  Mat Apow = Mat::Identity(n, n);
  for (int t = 0; t < N; ++t) {
    sq.Sx.middleRows(t * n, n) = Apow;
    Apow = model.A * Apow;
    if (t == 0) continue;
    for (int i = 0; i + 1 < t; ++i)
      sq.Su.block(t * n, i * m, n, m) =
          model.A * sq.Su.block((t - 1) * n, i * m, n, m);
    sq.Su.block(t * n, (t - 1) * m, n, m) = model.B;
  }

  // Output prediction y = Yx + Yu u with Yx stacked C A^t mu.
  Mat Yu(p * N, m * N);
  Vec Yx(p * N);
  for (int t = 0; t < N; ++t) {
    Yu.middleRows(t * p, p) = model.C * sq.Su.middleRows(t * n, n);
    Yx.segment(t * p, p) = model.C * sq.Sx.middleRows(t * n, n) * prior_mean;
  }

  Vec rbar(p * N);
  for (int t = 0; t < N; ++t) rbar.segment(t * p, p) = refs.col(t);
  const Vec e = Yx - rbar;

  Mat Qbar = Mat::Zero(p * N, p * N);
  Mat Rbar = Mat::Zero(m * N, m * N);
  for (int t = 0; t < N; ++t) {
    Qbar.block(t * p, t * p, p, p) = Q;
    Rbar.block(t * m, t * m, m, m) = R;
  }

  sq.qp.H = symmetrized(2.0 * (Yu.transpose() * Qbar * Yu + Rbar));
  sq.qp.f = 2.0 * Yu.transpose() * (Qbar * e);
  sq.cost_offset = e.dot(Qbar * e);

  // Constraint rows, step-major (inputs then outputs per step):
  //   E_u u_t ≤ bound_u(:,t)
  //   E_y C [(Sx)_t mu + (Su)_t u] ≤ bound_y(:,t).
  const int q_u = static_cast<int>(tight.bound_u.rows());
  const int q_y = static_cast<int>(tight.bound_y.rows());
  require_dims((q_u == 0 || tight.bound_u.cols() >= N) &&
                   (q_y == 0 || tight.bound_y.cols() >= N),
               "build_smpc_qp: tightened bounds shorter than N");
  require_dims(q_u == 0 || tight.E_u.cols() == m, "build_smpc_qp: E_u cols");
  require_dims(q_y == 0 || tight.E_y.cols() == p, "build_smpc_qp: E_y cols");
  const int rows = (q_u + q_y) * N;
  sq.qp.G_ineq = Mat::Zero(rows, m * N);
  sq.qp.h_ineq.resize(rows);
  int r = 0;
  for (int t = 0; t < N; ++t) {
    if (q_u > 0) {
      sq.qp.G_ineq.block(r, t * m, q_u, m) = tight.E_u;
      sq.qp.h_ineq.segment(r, q_u) = tight.bound_u.col(t);
      r += q_u;
    }
    if (q_y > 0) {
      sq.qp.G_ineq.middleRows(r, q_y) =
          tight.E_y * Yu.middleRows(t * p, p);
      sq.qp.h_ineq.segment(r, q_y) =
          tight.bound_y.col(t) - tight.E_y * Yx.segment(t * p, p);
      r += q_y;
    }
  }
  return sq;
}

IraResult iterative_risk_allocation(const PlanSolver& solve,
                                    const PolytopeSpec& spec,
                                    const IoVariances& io, int N,
                                    const IraOptions& opts) {
  IraResult res;
  res.alloc = uniform_allocation(spec, N);
  double J_prev = std::numeric_limits<double>::infinity();

  const int q_u = spec.q_u(), q_y = spec.q_y();
  Eigen::ArrayXXi active_u(q_u, N), active_y(q_y, N);

  auto mark_active = [&](const Mat& E, const Mat& bound, const Vec& f,
                         const Mat& z, Eigen::ArrayXXi& act) {
    for (int t = 0; t < N; ++t)
      for (int i = 0; i < E.rows(); ++i) {
        const double slack = bound(i, t) - E.row(i).dot(z.col(t));
        act(i, t) = slack <= opts.active_tol * (1.0 + std::abs(f(i))) ? 1 : 0;
      }
  };

  auto update_grid = [&](Mat& alloc, const Mat& E, const Vec& f,
                         const std::vector<Mat>& Sigma, const Mat& z,
                         const Eigen::ArrayXXi& act, double budget) {
    const int q = static_cast<int>(E.rows());
    for (int t = 0; t < N; ++t) {
      int asum = 0;
      for (int i = 0; i < q; ++i) asum += act(i, t);
      if (asum == 0 || asum == q) continue;
      for (int i = 0; i < q; ++i) {
        if (act(i, t)) continue;
        const double var = std::max(
            0.0, (E.row(i) * Sigma[t] * E.row(i).transpose()).value());
        const double resid = f(i) - E.row(i).dot(z.col(t));
        double tail;
        if (var < 1e-300)
          tail = resid < 0.0 ? 1.0 : 0.0;
        else
          tail = 1.0 - cdfn(resid / std::sqrt(var));
        alloc(i, t) =
            std::max(opts.alpha * alloc(i, t) + (1.0 - opts.alpha) * tail,
                     opts.risk_floor);
      }
      double residual = budget;
      for (int i = 0; i < q; ++i) residual -= alloc(i, t);
      const double share = residual / asum;
      for (int i = 0; i < q; ++i)
        if (act(i, t))
          alloc(i, t) = std::max(alloc(i, t) + share, opts.risk_floor);
    }
  };

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    const TightenedConstraints tight = tighten(spec, res.alloc, io);
    res.plan = solve(tight);
    ++res.iterations;
    res.cost_history.push_back(res.plan.cost);
    res.alloc_history.push_back(res.alloc);

    if (std::abs(J_prev - res.plan.cost) <= opts.eps) return res;
    J_prev = res.plan.cost;

    mark_active(spec.E_u, tight.bound_u, spec.f_u, res.plan.u_nom, active_u);
    mark_active(spec.E_y, tight.bound_y, spec.f_y, res.plan.y_nom, active_y);

    bool all_saturated = true;
    for (int t = 0; t < N && all_saturated; ++t) {
      int su = 0, sy = 0;
      for (int i = 0; i < q_u; ++i) su += active_u(i, t);
      for (int i = 0; i < q_y; ++i) sy += active_y(i, t);
      if ((su != 0 && su != q_u) || (sy != 0 && sy != q_y))
        all_saturated = false;
    }
    if (all_saturated) return res;

    update_grid(res.alloc.alloc_u, spec.E_u, spec.f_u, io.Sigma_u,
                res.plan.u_nom, active_u, spec.p_u);
    update_grid(res.alloc.alloc_y, spec.E_y, spec.f_y, io.Sigma_y,
                res.plan.y_nom, active_y, spec.p_y);
  }
  throw MaxIterError("iterative_risk_allocation: outer iteration cap reached");
}

}  // namespace stochpc
