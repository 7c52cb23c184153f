#include "stochpc/controllers.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "stochpc/numerics.hpp"

namespace stochpc {

void HorizonConfig::validate() const {
  if (L < 1) throw Error("HorizonConfig: L must be >= 1");
  if (N < 1) throw Error("HorizonConfig: N must be >= 1");
  if (N_c < 1 || N_c > N) throw Error("HorizonConfig: need 1 <= N_c <= N");
}

Vec ReferenceSchedule::at(int t, int p) const {
  Vec r = Vec::Zero(p);
  int best = std::numeric_limits<int>::min();
  for (const Piece& piece : pieces) {
    if (piece.start_t <= t && piece.start_t >= best) {
      require_dims(piece.value.size() == p,
                   "ReferenceSchedule: piece dimension");
      best = piece.start_t;
      r = piece.value;
    }
  }
  return r;
}

Mat ReferenceSchedule::window(int t0, int N, int p) const {
  Mat W(p, N);
  for (int j = 0; j < N; ++j) W.col(j) = at(t0 + j, p);
  return W;
}

Vec Controller::operator()(int t, const Vec& y) {
  if (t != next_t_)
    throw Error("Controller: calls must use consecutive steps from 0");
  ++next_t_;
  return control(t, y);
}

void Controller::observe_history(const Mat&, const Mat&) {}

namespace {

void validate_weights(const CostWeights& w, int m, int p) {
  require_dims(w.Q.rows() == p && w.Q.cols() == p, "CostWeights: Q shape");
  require_dims(w.R.rows() == m && w.R.cols() == m, "CostWeights: R shape");
  Eigen::LLT<Mat> llt(symmetrized(w.R));
  if (llt.info() != Eigen::Success)
    throw Error("CostWeights: R must be positive definite");
}

double tracking_cost(const Mat& u_nom, const Mat& y_nom, const Mat& refs,
                     const CostWeights& w) {
  double c = 0;
  for (Eigen::Index t = 0; t < u_nom.cols(); ++t) {
    const Vec ey = y_nom.col(t) - refs.col(t);
    c += ey.dot(w.Q * ey) + u_nom.col(t).dot(w.R * u_nom.col(t));
  }
  return c;
}

// Shared receding-horizon loop. In stochastic mode the plan is tightened
// by the propagated input/output variances and solved through IRA with an
// affine feedback policy; in deterministic mode (MPC baseline) the gain is
// zero, constraints are hard, and a single QP is solved on the mean.
class RecedingHorizonEngine final : public Controller {
 public:
  RecedingHorizonEngine(LtiModel model, HorizonConfig hz, PolytopeSpec spec,
                        CostWeights w, ReferenceSchedule refs,
                        GaussianBelief prior, IraOptions ira, QpOptions qp,
                        bool stochastic)
      : model_(std::move(model)),
        hz_(hz),
        spec_(std::move(spec)),
        w_(std::move(w)),
        refs_(std::move(refs)),
        ira_(ira),
        qp_(qp),
        stochastic_(stochastic) {
    model_.validate();
    hz_.validate();
    spec_.validate(model_.m(), model_.p());
    validate_weights(w_, model_.m(), model_.p());
    require_dims(prior.mu.size() == model_.n() &&
                     prior.Sigma.rows() == model_.n() &&
                     prior.Sigma.cols() == model_.n(),
                 "RecedingHorizonEngine: prior dimension");
    if (stochastic_) {
      const Mat Qx =
          symmetrized(model_.C.transpose() * w_.Q * model_.C);
      K_ = solve_dare(model_.A, model_.B, Qx, w_.R).K;
    } else {
      K_ = Mat::Zero(model_.m(), model_.n());
    }
    state_.belief = std::move(prior);
    state_.plan_time = 0;
  }

  int input_dim() const override { return model_.m(); }
  const ControllerState* state() const override { return &state_; }

  // Warmup observations refine the belief through measurement/time updates
  // before the first plan, so the configured prior may describe the state
  // at the start of the warmup segment rather than at control start.
  void observe_history(const Mat& u_past, const Mat& y_past) override {
    require_dims(u_past.rows() == model_.m() && y_past.rows() == model_.p() &&
                     u_past.cols() == y_past.cols(),
                 "RecedingHorizonEngine: history shape");
    if (have_plan_)
      throw Error("RecedingHorizonEngine: history must precede control");
    for (Eigen::Index j = 0; j < u_past.cols(); ++j) {
      const KalmanSchedule one = kalman_schedule(model_, state_.belief, 1);
      const Vec mu_post =
          kf_update(state_.belief.mu, y_past.col(j), one.gains[0], model_);
      state_.belief.mu = kf_predict(mu_post, u_past.col(j), model_);
      state_.belief.Sigma = one.P_prior[1];
    }
  }

 protected:
  Vec control(int t, const Vec& y) override {
    require_dims(y.size() == model_.p(), "RecedingHorizonEngine: y length");
    if (t == state_.plan_time) replan(t);
    const int j = t - state_.schedule.k0;
    const Mat& gain = state_.schedule.gains[j];
    const Vec xhat = xhat_prior_ + gain * (y - model_.C * xhat_prior_);
    const Vec u = state_.schedule.u_nom.col(j) +
                  state_.schedule.K * (xhat - state_.schedule.x_nom.col(j));
    xhat_prior_ = model_.A * xhat + model_.B * u;
    if (j + 1 == hz_.N_c) {
      state_.belief.mu = xhat_prior_;
      state_.belief.Sigma = P_prior_[hz_.N_c];
      state_.plan_time = state_.schedule.k0 + hz_.N_c;
    }
    return u;
  }

 private:
  Mat roll_nominal(const Vec& x0, const Mat& u_nom) const {
    Mat X(model_.n(), hz_.N + 1);
    X.col(0) = x0;
    for (int t = 0; t < hz_.N; ++t)
      X.col(t + 1) = model_.A * X.col(t) + model_.B * u_nom.col(t);
    return X;
  }

  void replan(int k) {
    const KalmanSchedule sched = kalman_schedule(model_, state_.belief, hz_.N);
    const Mat refs_win = refs_.window(k, hz_.N, model_.p());

    PlanSolver solver = [this, &refs_win](const TightenedConstraints& tight) {
      SmpcQp sq = build_smpc_qp(model_, state_.belief.mu, K_, tight, w_.Q,
                                w_.R, refs_win, hz_.N);
      const QpSolution qs = solve_qp(sq.qp, qp_);
      NominalPlan plan;
      plan.u_nom = sq.unstack_inputs(qs.x);
      plan.y_nom = sq.nominal_outputs(model_, qs.x);
      plan.cost = tracking_cost(plan.u_nom, plan.y_nom, refs_win, w_);
      return plan;
    };

    ControlStepInfo info;
    info.k = k;
    info.belief = state_.belief;

    bool planned = false;
    NominalPlan plan;
    int solves = 0;
    try {
      if (stochastic_) {
        const JointCovariance joint = propagate_joint_covariance(
            model_, K_, sched, state_.belief, hz_.N);
        const IoVariances io = io_variances(model_, K_, joint);
        IraResult ira =
            iterative_risk_allocation(solver, spec_, io, hz_.N, ira_);
        plan = std::move(ira.plan);
        solves = ira.iterations;
      } else {
        TightenedConstraints tight;
        tight.E_u = spec_.E_u;
        tight.E_y = spec_.E_y;
        tight.margin_u = Mat::Zero(spec_.q_u(), hz_.N);
        tight.margin_y = Mat::Zero(spec_.q_y(), hz_.N);
        tight.bound_u = spec_.f_u.replicate(1, hz_.N);
        tight.bound_y = spec_.f_y.replicate(1, hz_.N);
        plan = solver(tight);
        solves = 1;
      }
      planned = true;
    } catch (const InfeasibleError&) {
    } catch (const MaxIterError&) {
    }

    PolicySchedule next;
    next.k0 = k;
    next.K = K_;
    next.gains = sched.gains;
    if (planned) {
      next.u_nom = plan.u_nom;
      next.x_nom = roll_nominal(state_.belief.mu, plan.u_nom);
      info.cost = plan.cost;
      info.qp_solves = solves;
    } else {
      // Hold the previous plan shifted by N_c; pad the tail by repeating
      // the last nominal input. With no previous plan, fall back to zero
      // nominal inputs from the current mean.
      info.infeasible = true;
      info.held_plan = true;
      info.cost = std::numeric_limits<double>::quiet_NaN();
      info.qp_solves = stochastic_ ? ira_.max_outer : 1;
      next.u_nom.resize(model_.m(), hz_.N);
      Vec x_base;
      if (have_plan_) {
        const PolicySchedule& prev = state_.schedule;
        for (int j = 0; j < hz_.N; ++j) {
          const int src = j + hz_.N_c;
          next.u_nom.col(j) =
              src < hz_.N ? prev.u_nom.col(src) : prev.u_nom.col(hz_.N - 1);
        }
        x_base = prev.x_nom.col(hz_.N_c);
      } else {
        next.u_nom.setZero();
        x_base = state_.belief.mu;
      }
      next.x_nom = roll_nominal(x_base, next.u_nom);
    }

    state_.schedule = std::move(next);
    have_plan_ = true;
    P_prior_ = sched.P_prior;
    xhat_prior_ = state_.belief.mu;
    info.schedule = state_.schedule;
    notify(info);
  }

  LtiModel model_;
  HorizonConfig hz_;
  PolytopeSpec spec_;
  CostWeights w_;
  ReferenceSchedule refs_;
  IraOptions ira_;
  QpOptions qp_;
  bool stochastic_;
  Mat K_;
  ControllerState state_;
  std::vector<Mat> P_prior_;
  Vec xhat_prior_;
  bool have_plan_ = false;
};

// History buffers shared by the trajectory-space benchmarks.
struct IoHistory {
  Mat u_win;  // m × L, column L−1 is the most recent
  Mat y_win;  // p × L

  void init(int m, int p, int L) {
    u_win = Mat::Zero(m, L);
    y_win = Mat::Zero(p, L);
  }
  void push(const Vec& u, const Vec& y) {
    const int L = static_cast<int>(u_win.cols());
    if (L > 1) {
      u_win.leftCols(L - 1) = u_win.rightCols(L - 1).eval();
      y_win.leftCols(L - 1) = y_win.rightCols(L - 1).eval();
    }
    u_win.col(L - 1) = u;
    y_win.col(L - 1) = y;
  }
  Vec u_stacked() const {
    return Eigen::Map<const Vec>(u_win.data(), u_win.size());
  }
  Vec y_stacked() const {
    return Eigen::Map<const Vec>(y_win.data(), y_win.size());
  }
};

// Base for DeePC/SPC: plan every N_c steps, apply the plan open loop,
// maintain the (u, y) history windows, hold a shifted plan on failure.
class TrajectoryController : public Controller {
 public:
  TrajectoryController(int m, int p, HorizonConfig hz, PolytopeSpec spec,
                       CostWeights w, ReferenceSchedule refs, QpOptions qp)
      : m_(m), p_(p), hz_(hz), spec_(std::move(spec)), w_(std::move(w)),
        refs_(std::move(refs)), qp_(qp) {
    hz_.validate();
    spec_.validate(m_, p_);
    validate_weights(w_, m_, p_);
    hist_.init(m_, p_, hz_.L);
    plan_u_ = Mat::Zero(m_, hz_.N);
  }

  int input_dim() const override { return m_; }

  void observe_history(const Mat& u_past, const Mat& y_past) override {
    require_dims(u_past.rows() == m_ && y_past.rows() == p_ &&
                     u_past.cols() == y_past.cols(),
                 "TrajectoryController: history shape");
    if (plan_time_ != 0)
      throw Error("TrajectoryController: history must precede control");
    for (Eigen::Index j = 0; j < u_past.cols(); ++j)
      hist_.push(u_past.col(j), y_past.col(j));
  }

 protected:
  Vec control(int t, const Vec& y) override {
    require_dims(y.size() == p_, "TrajectoryController: y length");
    if (t == plan_time_) replan(t);
    const Vec u = plan_u_.col(t - plan_k_);
    hist_.push(u, y);
    return u;
  }

  /// Solve for the next N inputs; throws InfeasibleError / MaxIterError.
  virtual std::pair<Mat, double> plan(const Mat& refs_win) = 0;

  void replan(int k) {
    ControlStepInfo info;
    info.k = k;
    info.qp_solves = 1;
    const Mat refs_win = refs_.window(k, hz_.N, p_);
    try {
      auto [u_plan, cost] = plan(refs_win);
      plan_u_ = u_plan;
      info.cost = cost;
    } catch (const InfeasibleError&) {
      hold_plan(info);
    } catch (const MaxIterError&) {
      hold_plan(info);
    }
    plan_k_ = k;
    plan_time_ = k + hz_.N_c;
    info.schedule.k0 = k;
    info.schedule.u_nom = plan_u_;
    notify(info);
  }

  void hold_plan(ControlStepInfo& info) {
    info.infeasible = true;
    info.held_plan = true;
    info.cost = std::numeric_limits<double>::quiet_NaN();
    Mat shifted(m_, hz_.N);
    for (int j = 0; j < hz_.N; ++j) {
      const int src = j + hz_.N_c;
      shifted.col(j) =
          src < hz_.N ? plan_u_.col(src) : plan_u_.col(hz_.N - 1);
    }
    plan_u_ = shifted;
  }

  int m_, p_;
  HorizonConfig hz_;
  PolytopeSpec spec_;
  CostWeights w_;
  ReferenceSchedule refs_;
  QpOptions qp_;
  IoHistory hist_;
  Mat plan_u_;
  int plan_k_ = 0;
  int plan_time_ = 0;
};

// Stacked diagonal weight helpers.
Mat blkdiag_repeat(const Mat& W, int N) {
  Mat D = Mat::Zero(W.rows() * N, W.cols() * N);
  for (int t = 0; t < N; ++t)
    D.block(t * W.rows(), t * W.cols(), W.rows(), W.cols()) = W;
  return D;
}

Vec stack_cols(const Mat& M) {
  return Eigen::Map<const Vec>(M.data(), M.size());
}

class DeepcController final : public TrajectoryController {
 public:
  explicit DeepcController(DeepcParams prm)
      : TrajectoryController(static_cast<int>(prm.data.u_d.rows()),
                             static_cast<int>(prm.data.y_d.rows()),
                             prm.horizon, prm.constraints, prm.weights,
                             prm.refs, prm.qp),
        lambda_y_(prm.lambda_y),
        lambda_g_(prm.lambda_g) {
    prm.data.validate();
    if (lambda_y_ < 0 || lambda_g_ < 0)
      throw Error("DeepcController: regularization weights must be >= 0");
    const int depth = hz_.L + hz_.N;
    const Mat Hu = hankel(prm.data.u_d, depth);
    const Mat Hy = hankel(prm.data.y_d, depth);
    Up_ = Hu.topRows(m_ * hz_.L);
    Uf_ = Hu.bottomRows(m_ * hz_.N);
    Yp_ = Hy.topRows(p_ * hz_.L);
    Yf_ = Hy.bottomRows(p_ * hz_.N);
    Mat M(Up_.rows() + Yp_.rows() + Uf_.rows() + Yf_.rows(), Hu.cols());
    M << Up_, Yp_, Uf_, Yf_;
    if (numerical_rank(M) != M.rows())
      throw Error(
          "DeepcController: stacked data matrix must have full row rank "
          "(input not persistently exciting enough)");
    Mdag_ = pinv(M);
  }

 protected:
  std::pair<Mat, double> plan(const Mat& refs_win) override {
    const int L = hz_.L, N = hz_.N;
    const int nu = m_ * N, ny = p_ * N, ns = p_ * L;

    // Preimage g = Mdag (u_ini; y_ini + σ; u_f; y_f) = c0 + Ag d with
    // decision d = (u_f, y_f, σ).
    const auto Wui = Mdag_.middleCols(0, m_ * L);
    const auto Wyi = Mdag_.middleCols(m_ * L, p_ * L);
    const auto Wuf = Mdag_.middleCols(m_ * L + p_ * L, nu);
    const auto Wyf = Mdag_.middleCols(m_ * L + p_ * L + nu, ny);
    const Vec c0 = Wui * hist_.u_stacked() + Wyi * hist_.y_stacked();
    Mat Ag(Mdag_.rows(), nu + ny + ns);
    Ag << Wuf, Wyf, Wyi;

    const Mat Qbar = blkdiag_repeat(w_.Q, N);
    const Mat Rbar = blkdiag_repeat(w_.R, N);
    const Vec rbar = stack_cols(refs_win);

    QpProblem qp;
    qp.H = Mat::Zero(nu + ny + ns, nu + ny + ns);
    qp.H.block(0, 0, nu, nu) = Rbar;
    qp.H.block(nu, nu, ny, ny) = Qbar;
    qp.H.block(nu + ny, nu + ny, ns, ns) =
        lambda_y_ * Mat::Identity(ns, ns);
    qp.H = symmetrized(2.0 * (qp.H + lambda_g_ * Ag.transpose() * Ag));
    qp.f = Vec::Zero(nu + ny + ns);
    qp.f.segment(nu, ny) = -2.0 * Qbar * rbar;
    qp.f += 2.0 * lambda_g_ * Ag.transpose() * c0;

    const int q_u = spec_.q_u(), q_y = spec_.q_y();
    qp.G_ineq = Mat::Zero((q_u + q_y) * N, nu + ny + ns);
    qp.h_ineq.resize((q_u + q_y) * N);
    int r = 0;
    for (int t = 0; t < N; ++t) {
      if (q_u > 0) {
        qp.G_ineq.block(r, t * m_, q_u, m_) = spec_.E_u;
        qp.h_ineq.segment(r, q_u) = spec_.f_u;
        r += q_u;
      }
      if (q_y > 0) {
        qp.G_ineq.block(r, nu + t * p_, q_y, p_) = spec_.E_y;
        qp.h_ineq.segment(r, q_y) = spec_.f_y;
        r += q_y;
      }
    }

    const QpSolution qs = solve_qp(qp, qp_);
    Mat u_plan(m_, N);
    for (int t = 0; t < N; ++t) u_plan.col(t) = qs.x.segment(t * m_, m_);
    Mat y_plan(p_, N);
    for (int t = 0; t < N; ++t)
      y_plan.col(t) = qs.x.segment(nu + t * p_, p_);
    const Vec sigma = qs.x.segment(nu + ny, ns);
    const Vec g = c0 + Ag * qs.x;
    const double cost = tracking_cost(u_plan, y_plan, refs_win, w_) +
                        lambda_y_ * sigma.squaredNorm() +
                        lambda_g_ * g.squaredNorm();
    return {u_plan, cost};
  }

 private:
  double lambda_y_, lambda_g_;
  Mat Up_, Uf_, Yp_, Yf_;
  Mat Mdag_;
};

class SpcController final : public TrajectoryController {
 public:
  explicit SpcController(SpcParams prm)
      : TrajectoryController(static_cast<int>(prm.data.u_d.rows()),
                             static_cast<int>(prm.data.y_d.rows()),
                             prm.horizon, prm.constraints, prm.weights,
                             prm.refs, prm.qp) {
    prm.data.validate();
    if (prm.lambda < 0) throw Error("SpcController: lambda must be >= 0");
    const int depth = hz_.L + hz_.N;
    const Mat Hu = hankel(prm.data.u_d, depth);
    const Mat Hy = hankel(prm.data.y_d, depth);
    const Mat Up = Hu.topRows(m_ * hz_.L);
    const Mat Uf = Hu.bottomRows(m_ * hz_.N);
    const Mat Yp = Hy.topRows(p_ * hz_.L);
    const Mat Yf = Hy.bottomRows(p_ * hz_.N);
    Mat W(Up.rows() + Yp.rows() + Uf.rows(), Hu.cols());
    W << Up, Yp, Uf;
    predictor_ = prm.lambda > 0 ? tikhonov_solve(W, Yf, prm.lambda)
                                : Mat(Yf * pinv(W));
  }

 protected:
  std::pair<Mat, double> plan(const Mat& refs_win) override {
    const int L = hz_.L, N = hz_.N;
    const int nu = m_ * N;

    const auto P_ui = predictor_.middleCols(0, m_ * L);
    const auto P_yi = predictor_.middleCols(m_ * L, p_ * L);
    const auto P_uf = predictor_.middleCols(m_ * L + p_ * L, nu);
    const Vec y_base =
        P_ui * hist_.u_stacked() + P_yi * hist_.y_stacked();

    const Mat Qbar = blkdiag_repeat(w_.Q, N);
    const Mat Rbar = blkdiag_repeat(w_.R, N);
    const Vec rbar = stack_cols(refs_win);
    const Vec e = y_base - rbar;

    QpProblem qp;
    qp.H = symmetrized(2.0 * (P_uf.transpose() * Qbar * P_uf + Rbar));
    qp.f = 2.0 * P_uf.transpose() * (Qbar * e);

    const int q_u = spec_.q_u(), q_y = spec_.q_y();
    qp.G_ineq = Mat::Zero((q_u + q_y) * N, nu);
    qp.h_ineq.resize((q_u + q_y) * N);
    int r = 0;
    for (int t = 0; t < N; ++t) {
      if (q_u > 0) {
        qp.G_ineq.block(r, t * m_, q_u, m_) = spec_.E_u;
        qp.h_ineq.segment(r, q_u) = spec_.f_u;
        r += q_u;
      }
      if (q_y > 0) {
        qp.G_ineq.middleRows(r, q_y) =
            spec_.E_y * P_uf.middleRows(t * p_, p_);
        qp.h_ineq.segment(r, q_y) =
            spec_.f_y - spec_.E_y * y_base.segment(t * p_, p_);
        r += q_y;
      }
    }

    const QpSolution qs = solve_qp(qp, qp_);
    Mat u_plan(m_, N);
    for (int t = 0; t < N; ++t) u_plan.col(t) = qs.x.segment(t * m_, m_);
    const Vec y_pred = y_base + P_uf * qs.x;
    Mat y_plan(p_, N);
    for (int t = 0; t < N; ++t) y_plan.col(t) = y_pred.segment(t * p_, p_);
    return {u_plan, tracking_cost(u_plan, y_plan, refs_win, w_)};
  }

 private:
  Mat predictor_;  // pN × (mL + pL + mN)
};

}  // namespace

std::unique_ptr<Controller> make_smpc_controller(const SmpcParams& params) {
  return std::make_unique<RecedingHorizonEngine>(
      params.model, params.horizon, params.constraints, params.weights,
      params.refs, params.prior, params.ira, params.qp, true);
}

std::unique_ptr<Controller> make_sddpc_controller(const SddpcParams& params) {
  params.data.validate();
  params.horizon.validate();
  const int m = static_cast<int>(params.data.u_d.rows());
  const int p = static_cast<int>(params.data.y_d.rows());
  const DataMatrices dm = partition(params.data, params.horizon.L);
  const RecoveredQuantities rq =
      recover_quantities(dm, params.tikhonov_lambda);
  const AuxModel aux =
      build_aux_model(rq, params.horizon.L, m, p, params.Sigma_rho);
  SmpcParams inner;
  inner.model = aux.to_lti(params.Sigma_v);
  inner.horizon = params.horizon;
  inner.constraints = params.constraints;
  inner.weights = params.weights;
  inner.refs = params.refs;
  inner.prior = params.aux_prior;
  inner.ira = params.ira;
  inner.qp = params.qp;
  return make_smpc_controller(inner);
}

std::unique_ptr<Controller> make_mpc_controller(const MpcParams& params) {
  return std::make_unique<RecedingHorizonEngine>(
      params.model, params.horizon, params.constraints, params.weights,
      params.refs, params.prior, IraOptions{}, params.qp, false);
}

std::unique_ptr<Controller> make_deepc_controller(const DeepcParams& params) {
  return std::make_unique<DeepcController>(params);
}

std::unique_ptr<Controller> make_spc_controller(const SpcParams& params) {
  return std::make_unique<SpcController>(params);
}

}  // namespace stochpc
