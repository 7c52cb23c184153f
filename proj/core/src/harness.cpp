#include "stochpc/harness.hpp"

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <limits>

#include "stochpc/chance.hpp"
#include "stochpc/datadriven.hpp"
#include "stochpc/estimation.hpp"
#include "stochpc/numerics.hpp"
#include "stochpc/rng.hpp"
#include "stochpc/validation.hpp"

namespace stochpc::harness {

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Smpc: return "smpc";
    case ControllerKind::Sddpc: return "sddpc";
    case ControllerKind::Mpc: return "mpc";
    case ControllerKind::Deepc: return "deepc";
    case ControllerKind::Spc: return "spc";
  }
  throw Error("to_string: unknown controller kind");
}

ControllerKind controller_kind_from_string(const std::string& name) {
  if (name == "smpc") return ControllerKind::Smpc;
  if (name == "sddpc") return ControllerKind::Sddpc;
  if (name == "mpc") return ControllerKind::Mpc;
  if (name == "deepc") return ControllerKind::Deepc;
  if (name == "spc") return ControllerKind::Spc;
  throw ConfigError("unknown controller '" + name +
                    "' (expected smpc|sddpc|mpc|deepc|spc)");
}

namespace {

bool is_data_driven(ControllerKind kind) {
  return kind == ControllerKind::Sddpc || kind == ControllerKind::Deepc ||
         kind == ControllerKind::Spc;
}

// Relative deviation used by the twin comparisons: largest entry of |a−b|
// normalized by 1 + largest entry of |a| (a is the reference side).
double rel_gap(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("rel_gap: shape mismatch");
  if (a.size() == 0) return 0.0;
  const double scale = 1.0 + a.cwiseAbs().maxCoeff();
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

double spectral_radius(const Mat& A) {
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    plant.validate();
    horizon.validate();
    constraints.validate(plant.m(), plant.p());
    require_dims(weights.Q.rows() == plant.p() &&
                     weights.Q.cols() == plant.p(),
                 "weights.Q must be p × p");
    require_dims(weights.R.rows() == plant.m() &&
                     weights.R.cols() == plant.m(),
                 "weights.R must be m × m");
    require_dims(prior.mu.size() == plant.n() &&
                     prior.Sigma.rows() == plant.n() &&
                     prior.Sigma.cols() == plant.n(),
                 "prior must match the plant state dimension");
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  }
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (warmup_inputs.size() > 0 && warmup_inputs.rows() != plant.m())
    throw ConfigError("warmup_inputs must have m rows");
  if (Sigma_rho.size() > 0) {
    const int pl = plant.p() * horizon.L;
    if (Sigma_rho.rows() != pl || Sigma_rho.cols() != pl)
      throw ConfigError("sigma_rho must be (p·L) × (p·L)");
  }
  if (lambda_y < 0 || lambda_g < 0 || lambda < 0)
    throw ConfigError("regularization weights must be >= 0");
  if (tikhonov_lambda && *tikhonov_lambda <= 0)
    throw ConfigError("tikhonov_lambda must be > 0 when given");
  if (!data_source.csv_path && data_source.length < 2 * horizon.L)
    throw ConfigError("data collection length must be >= 2L");
  if (mc_samples < 2) throw ConfigError("mc samples must be >= 2");
  if (mc_z_threshold <= 0) throw ConfigError("mc z threshold must be > 0");
}

OfflineData collect_offline_data(const LtiModel& plant,
                                 const DataSource& src) {
  OfflineData data;
  if (src.csv_path) {
    const CsvData csv = read_trajectory_csv(*src.csv_path);
    if (csv.u_seq.rows() != plant.m() || csv.y_seq.rows() != plant.p())
      throw ConfigError("offline data CSV dimensions do not match the plant");
    data.u_d = csv.u_seq;
    data.y_d = csv.y_seq;
  } else {
    if (src.length < 1) throw ConfigError("data collection length must be >= 1");
    const int m = plant.m(), T = src.length;
    CounterRng rng(src.seed);
    Mat u_d(m, T);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < m; ++j)
        u_d(j, t) = src.input_scale *
                    rng.normal(streams::excitation_input,
                               static_cast<std::uint64_t>(t),
                               static_cast<std::uint64_t>(j));
    NoiseRealization noise;
    if (src.noise_free) {
      noise.w_seq = Mat::Zero(plant.n(), T);
      noise.v_seq = Mat::Zero(plant.p(), T);
      noise.seed = src.seed;
    } else {
      noise = sample_noise(plant, T, src.seed);
    }
    const Trajectory traj = simulate_closed_loop(
        plant, [&](int t, const Vec&) { return Vec(u_d.col(t)); },
        Vec::Zero(plant.n()), noise, T);
    data.u_d = u_d;
    data.y_d = traj.y_seq;
  }
  data.validate();
  return data;
}

std::unique_ptr<Controller> build_controller(const ExperimentConfig& cfg,
                                             const OfflineData* data) {
  cfg.validate();
  OfflineData owned;
  const OfflineData* src = data;
  if (is_data_driven(cfg.controller) && src == nullptr) {
    owned = collect_offline_data(cfg.plant, cfg.data_source);
    src = &owned;
  }
  switch (cfg.controller) {
    case ControllerKind::Smpc: {
      SmpcParams prm;
      prm.model = cfg.plant;
      prm.horizon = cfg.horizon;
      prm.constraints = cfg.constraints;
      prm.weights = cfg.weights;
      prm.refs = cfg.refs;
      prm.prior = cfg.prior;
      prm.ira = cfg.ira;
      prm.qp = cfg.qp;
      return make_smpc_controller(prm);
    }
    case ControllerKind::Mpc: {
      MpcParams prm;
      prm.model = cfg.plant;
      prm.horizon = cfg.horizon;
      prm.constraints = cfg.constraints;
      prm.weights = cfg.weights;
      prm.refs = cfg.refs;
      prm.prior = cfg.prior;
      prm.qp = cfg.qp;
      return make_mpc_controller(prm);
    }
    case ControllerKind::Sddpc: {
      SddpcParams prm;
      prm.data = *src;
      prm.horizon = cfg.horizon;
      prm.constraints = cfg.constraints;
      prm.weights = cfg.weights;
      prm.refs = cfg.refs;
      const int pl = cfg.plant.p() * cfg.horizon.L;
      prm.Sigma_rho = cfg.Sigma_rho.size() > 0
                          ? cfg.Sigma_rho
                          : Mat(1e-4 * Mat::Identity(pl, pl));
      prm.Sigma_v = cfg.plant.Sigma_v;
      if (cfg.aux_prior) {
        prm.aux_prior = *cfg.aux_prior;
      } else {
        const int n_aux = cfg.plant.m() * cfg.horizon.L + pl +
                          cfg.plant.p() * cfg.horizon.L * cfg.horizon.L;
        prm.aux_prior.mu = Vec::Zero(n_aux);
        prm.aux_prior.Sigma = Mat::Identity(n_aux, n_aux);
      }
      prm.tikhonov_lambda = cfg.tikhonov_lambda;
      prm.ira = cfg.ira;
      prm.qp = cfg.qp;
      return make_sddpc_controller(prm);
    }
    case ControllerKind::Deepc: {
      DeepcParams prm;
      prm.data = *src;
      prm.horizon = cfg.horizon;
      prm.constraints = cfg.constraints;
      prm.weights = cfg.weights;
      prm.refs = cfg.refs;
      prm.lambda_y = cfg.lambda_y;
      prm.lambda_g = cfg.lambda_g;
      prm.qp = cfg.qp;
      return make_deepc_controller(prm);
    }
    case ControllerKind::Spc: {
      SpcParams prm;
      prm.data = *src;
      prm.horizon = cfg.horizon;
      prm.constraints = cfg.constraints;
      prm.weights = cfg.weights;
      prm.refs = cfg.refs;
      prm.lambda = cfg.lambda;
      prm.qp = cfg.qp;
      return make_spc_controller(prm);
    }
  }
  throw Error("build_controller: unknown controller kind");
}

namespace {

Vec row_violations(const Mat& E, const Vec& f, const Vec& z) {
  if (E.rows() == 0) return Vec();
  return (E * z - f).cwiseMax(0.0);
}

}  // namespace

RunReport run_experiment_with_noise(const ExperimentConfig& cfg,
                                    const Vec& x0,
                                    const NoiseRealization& noise) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();

  const LtiModel& plant = cfg.plant;
  const int Tw = static_cast<int>(cfg.warmup_inputs.cols());
  const int T = cfg.steps;
  require_dims(x0.size() == plant.n(), "run_experiment: x0 dimension");
  require_dims(noise.w_seq.cols() >= Tw + T && noise.v_seq.cols() >= Tw + T,
               "run_experiment: noise must cover warmup + controlled steps");

  auto ctrl = build_controller(cfg);

  RunReport report;
  report.name = cfg.name;
  report.controller = to_string(cfg.controller);
  report.seed = cfg.seed;
  report.steps = T;

  ctrl->set_control_step_hook([&report](const ControlStepInfo& info) {
    PlanRecord pr;
    pr.k = info.k;
    pr.qp_solves = info.qp_solves;
    pr.cost = info.cost;
    pr.infeasible = info.infeasible;
    pr.held = info.held_plan;
    report.plans.push_back(pr);
    if (info.held_plan) ++report.held_plans;
  });

  Trajectory traj;
  traj.t0 = -Tw;
  traj.x_seq.resize(plant.n(), Tw + T + 1);
  traj.u_seq.resize(plant.m(), Tw + T);
  traj.y_seq.resize(plant.p(), Tw + T);

  Vec x = x0;
  traj.x_seq.col(0) = x;
  for (int t = 0; t < Tw; ++t) {
    const Vec y = output(plant, x, noise.v_seq.col(t));
    const Vec u = cfg.warmup_inputs.col(t);
    traj.u_seq.col(t) = u;
    traj.y_seq.col(t) = y;
    x = step(plant, x, u, noise.w_seq.col(t));
    traj.x_seq.col(t + 1) = x;
  }
  if (Tw > 0)
    ctrl->observe_history(traj.u_seq.leftCols(Tw), traj.y_seq.leftCols(Tw));

  int violations_u = 0, violations_y = 0;
  report.records.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const Vec y = output(plant, x, noise.v_seq.col(Tw + t));
    const Vec u = (*ctrl)(t, y);
    require_dims(u.size() == plant.m(), "run_experiment: controller output");

    StepRecord rec;
    rec.t = t;
    rec.u = u;
    rec.y = y;
    rec.r = cfg.refs.at(t, plant.p());
    const Vec ey = y - rec.r;
    rec.stage_cost = ey.dot(cfg.weights.Q * ey) + u.dot(cfg.weights.R * u);
    rec.violation_u = row_violations(cfg.constraints.E_u, cfg.constraints.f_u, u);
    rec.violation_y = row_violations(cfg.constraints.E_y, cfg.constraints.f_y, y);
    report.cumulative_cost += rec.stage_cost;
    for (Eigen::Index i = 0; i < rec.violation_u.size(); ++i)
      if (rec.violation_u(i) > 0) ++violations_u;
    for (Eigen::Index i = 0; i < rec.violation_y.size(); ++i)
      if (rec.violation_y(i) > 0) ++violations_y;
    report.violation_amount_u += rec.violation_u.sum();
    report.violation_amount_y += rec.violation_y.sum();
    report.records.push_back(std::move(rec));

    traj.u_seq.col(Tw + t) = u;
    traj.y_seq.col(Tw + t) = y;
    x = step(plant, x, u, noise.w_seq.col(Tw + t));
    traj.x_seq.col(Tw + t + 1) = x;
  }

  const int q_u = cfg.constraints.q_u(), q_y = cfg.constraints.q_y();
  report.violation_rate_u =
      q_u > 0 ? static_cast<double>(violations_u) / (static_cast<double>(T) * q_u)
              : 0.0;
  report.violation_rate_y =
      q_y > 0 ? static_cast<double>(violations_y) / (static_cast<double>(T) * q_y)
              : 0.0;
  report.trajectory = std::move(traj);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const int Tw = static_cast<int>(cfg.warmup_inputs.cols());
  const NoiseRealization noise =
      sample_noise(cfg.plant, Tw + cfg.steps, cfg.seed);
  const Vec x0 =
      sample_initial_state(cfg.prior.mu, cfg.prior.Sigma, cfg.seed);
  return run_experiment_with_noise(cfg, x0, noise);
}

LtiModel random_minimal_system(int n, int m, int p, std::uint64_t seed) {
  if (n < 1 || m < 1 || p < 1)
    throw Error("random_minimal_system: dimensions must be >= 1");
  CounterRng rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const auto at = static_cast<std::uint64_t>(attempt);
    std::uint64_t d = 0;
    auto normal = [&] { return rng.normal(streams::system_generation, at, d++); };
    auto uniform = [&] {
      return rng.uniform(streams::system_generation, at, d++);
    };

    Mat A(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = normal();
    const double rho = spectral_radius(A);
    if (rho < 1e-9) continue;
    A *= (0.5 + 0.4 * uniform()) / rho;

    Mat B(n, m), C(p, n), S(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) B(i, j) = normal();
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < n; ++j) C(i, j) = normal();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) S(i, j) = 0.1 * normal();

    LtiModel model;
    model.A = A;
    model.B = B;
    model.C = C;
    model.Sigma_w = symmetrized(S * S.transpose());
    model.Sigma_v = 1e-8 * Mat::Identity(p, p);
    if (check_assumption_dims(model, n).ok()) return model;
  }
  throw Error("random_minimal_system: no minimal draw after 100 attempts");
}

void EquivalenceConfig::validate() const {
  if (!plant && systems < 1)
    throw ConfigError("equivalence: systems must be >= 1");
  if (max_n < 1 || max_m < 1 || max_p < 1)
    throw ConfigError("equivalence: dimension bounds must be >= 1");
  if (N < 1 || N_c < 1 || N_c > N)
    throw ConfigError("equivalence: need 1 <= N_c <= N");
  if (control_steps < 1)
    throw ConfigError("equivalence: control_steps must be >= 1");
  if (tolerance <= 0) throw ConfigError("equivalence: tolerance must be > 0");
  if (input_bound <= 0 || output_bound <= 0)
    throw ConfigError("equivalence: bounds must be > 0");
  if (risk_u <= 0 || risk_u > 0.5 || risk_y <= 0 || risk_y > 0.5)
    throw ConfigError("equivalence: risks must lie in (0, 1/2]");
  if (window_length < 0)
    throw ConfigError("equivalence: window_length must be >= 0");
}

namespace {

// Symmetric per-channel box rows: |z_i| ≤ bound for every channel.
void box_rows(int dim, double bound, Mat& E, Vec& f) {
  E = Mat::Zero(2 * dim, dim);
  for (int i = 0; i < dim; ++i) {
    E(2 * i, i) = 1.0;
    E(2 * i + 1, i) = -1.0;
  }
  f = Vec::Constant(2 * dim, bound);
}

// Noise-free persistently exciting excitation of the plant; returns data
// with PE order 2L+n or throws with a diagnostic.
OfflineData exciting_data(const LtiModel& model, int L, std::uint64_t seed) {
  const int order = 2 * L + model.n();
  const int T_d = std::max(30, 4 * order);
  for (int attempt = 0; attempt < 10; ++attempt) {
    DataSource src;
    src.length = T_d;
    src.input_scale = 1.0;
    src.noise_free = true;
    src.seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(attempt));
    OfflineData data = collect_offline_data(model, src);
    if (is_persistently_exciting(data.u_d, order)) return data;
  }
  throw Error("equivalence: excitation not persistently exciting of order " +
              std::to_string(order));
}

struct TwinRun {
  Trajectory traj;
  Mat first_u_nom;
  int held_plans = 0;
};

TwinRun run_twin(Controller& ctrl, const LtiModel& plant, const Vec& x0,
                 const NoiseRealization& noise, int T) {
  TwinRun out;
  ctrl.set_control_step_hook([&out](const ControlStepInfo& info) {
    if (info.k == 0) out.first_u_nom = info.schedule.u_nom;
    if (info.held_plan) ++out.held_plans;
  });
  out.traj = simulate_closed_loop(
      plant, [&ctrl](int t, const Vec& y) { return ctrl(t, y); }, x0, noise,
      T);
  return out;
}

}  // namespace

EquivalenceReport equivalence_check(const EquivalenceConfig& cfg) {
  cfg.validate();
  EquivalenceReport report;
  report.tolerance = cfg.tolerance;
  const int count = cfg.plant ? 1 : cfg.systems;

  for (int i = 0; i < count; ++i) {
    EquivalenceSystemResult res;
    res.index = i;
    const std::uint64_t sys_seed = derive_seed(cfg.seed, i);
    try {
      LtiModel model;
      if (cfg.plant) {
        model = *cfg.plant;
        model.validate();
      } else {
        CounterRng dims(derive_seed(sys_seed, 0));
        const int n = 1 + static_cast<int>(dims.bits(0, 0, 0) %
                                           static_cast<std::uint64_t>(cfg.max_n));
        const int m = 1 + static_cast<int>(dims.bits(0, 0, 1) %
                                           static_cast<std::uint64_t>(cfg.max_m));
        const int p = 1 + static_cast<int>(dims.bits(0, 0, 2) %
                                           static_cast<std::uint64_t>(cfg.max_p));
        model = random_minimal_system(n, m, p, derive_seed(sys_seed, 1));
      }
      res.n = model.n();
      res.m = model.m();
      res.p = model.p();
      const int L = cfg.window_length > 0 ? cfg.window_length
                                          : minimal_window_length(model);
      res.L = L;
      if (!check_assumption_dims(model, L).ok())
        throw Error("equivalence: depth-" + std::to_string(L) +
                    " identifiability check failed for this system");

      // Offline data, matching noise-response covariance, matched prior.
      const OfflineData data = exciting_data(model, L, sys_seed);
      const Mat Sigma_rho =
          cfg.Sigma_rho_override ? *cfg.Sigma_rho_override
                                 : validation::noise_response_covariance(model, L);
      GaussianBelief prior;
      prior.mu = Vec::Constant(model.n(), 0.1);
      prior.Sigma = 0.05 * Mat::Identity(model.n(), model.n());
      const validation::PhiOracles oracles =
          validation::build_phi_oracles(model, L);
      const GaussianBelief aux_prior = validation::matched_prior(prior, oracles);

      HorizonConfig hz;
      hz.L = L;
      hz.N = cfg.N;
      hz.N_c = cfg.N_c;

      PolytopeSpec spec;
      box_rows(model.m(), cfg.input_bound, spec.E_u, spec.f_u);
      box_rows(model.p(), cfg.output_bound, spec.E_y, spec.f_y);
      spec.p_u = cfg.risk_u;
      spec.p_y = cfg.risk_y;

      CostWeights weights;
      weights.Q = 10.0 * Mat::Identity(model.p(), model.p());
      weights.R = Mat::Identity(model.m(), model.m());

      ReferenceSchedule refs;
      refs.pieces.push_back({0, Vec::Constant(model.p(), 0.3)});

      SmpcParams smpc;
      smpc.model = model;
      smpc.horizon = hz;
      smpc.constraints = spec;
      smpc.weights = weights;
      smpc.refs = refs;
      smpc.prior = prior;

      SddpcParams sddpc;
      sddpc.data = data;
      sddpc.horizon = hz;
      sddpc.constraints = spec;
      sddpc.weights = weights;
      sddpc.refs = refs;
      sddpc.Sigma_rho = Sigma_rho;
      sddpc.Sigma_v = model.Sigma_v;
      sddpc.aux_prior = aux_prior;

      const int T = cfg.N_c * cfg.control_steps;
      const std::uint64_t run_seed = derive_seed(sys_seed, 99);
      const NoiseRealization noise = sample_noise(model, T, run_seed);
      const Vec x0 = sample_initial_state(prior.mu, prior.Sigma, run_seed);

      auto ctrl_a = make_smpc_controller(smpc);
      auto ctrl_b = make_sddpc_controller(sddpc);
      const TwinRun a = run_twin(*ctrl_a, model, x0, noise, T);
      const TwinRun b = run_twin(*ctrl_b, model, x0, noise, T);

      res.held_plans = a.held_plans + b.held_plans;
      res.trajectory_deviation =
          std::max({rel_gap(a.traj.x_seq, b.traj.x_seq),
                    rel_gap(a.traj.u_seq, b.traj.u_seq),
                    rel_gap(a.traj.y_seq, b.traj.y_seq)});
      res.nominal_input_deviation = rel_gap(a.first_u_nom, b.first_u_nom);
      if (res.held_plans > 0)
        res.diagnostic = "planning failed mid-run (held plan)";
    } catch (const Error& e) {
      res.diagnostic = e.what();
    }
    report.systems.push_back(std::move(res));
  }

  bool all_clean = true;
  for (const auto& res : report.systems) {
    if (!res.diagnostic.empty()) {
      all_clean = false;
      continue;
    }
    report.max_deviation =
        std::max(report.max_deviation, res.trajectory_deviation);
    report.max_nominal_deviation =
        std::max(report.max_nominal_deviation, res.nominal_input_deviation);
  }
  report.pass = all_clean && report.max_deviation <= report.tolerance;
  return report;
}

McReport mc_validate_distribution(const ExperimentConfig& cfg, int samples,
                                  double z_threshold) {
  cfg.validate();
  if (cfg.controller != ControllerKind::Smpc)
    throw ConfigError("mc-validate requires the smpc controller");
  if (samples < 2) throw ConfigError("mc-validate: samples must be >= 2");
  if (z_threshold <= 0) throw ConfigError("mc-validate: threshold must be > 0");

  const LtiModel& model = cfg.plant;
  const int N = cfg.horizon.N;
  const int n = model.n(), m = model.m(), p = model.p();

  // Freeze the first planning step exactly as the controller computes it.
  const Mat Qx = symmetrized(model.C.transpose() * cfg.weights.Q * model.C);
  const Mat K = solve_dare(model.A, model.B, Qx, cfg.weights.R).K;
  const KalmanSchedule sched = kalman_schedule(model, cfg.prior, N);
  const JointCovariance joint =
      propagate_joint_covariance(model, K, sched, cfg.prior, N);
  const IoVariances io = io_variances(model, K, joint);
  const Mat refs_win = cfg.refs.window(0, N, p);

  PlanSolver solver = [&](const TightenedConstraints& tight) {
    SmpcQp sq = build_smpc_qp(model, cfg.prior.mu, K, tight, cfg.weights.Q,
                              cfg.weights.R, refs_win, N);
    const QpSolution qs = solve_qp(sq.qp, cfg.qp);
    NominalPlan plan;
    plan.u_nom = sq.unstack_inputs(qs.x);
    plan.y_nom = sq.nominal_outputs(model, qs.x);
    plan.cost = 0;
    return plan;
  };
  const IraResult ira = iterative_risk_allocation(solver, cfg.constraints, io,
                                                  N, cfg.ira);
  const Mat& u_nom = ira.plan.u_nom;
  Mat x_nom(n, N + 1);
  x_nom.col(0) = cfg.prior.mu;
  for (int t = 0; t < N; ++t)
    x_nom.col(t + 1) = model.A * x_nom.col(t) + model.B * u_nom.col(t);

  // Accumulate empirical first and second moments of (u_t, y_t).
  std::vector<Vec> su(N, Vec::Zero(m)), sy(N, Vec::Zero(p));
  std::vector<Mat> suu(N, Mat::Zero(m, m)), syy(N, Mat::Zero(p, p));
  for (int j = 0; j < samples; ++j) {
    const std::uint64_t sj = derive_seed(cfg.seed, static_cast<std::uint64_t>(j));
    const NoiseRealization noise = sample_noise(model, N, sj);
    Vec x = sample_initial_state(cfg.prior.mu, cfg.prior.Sigma, sj);
    Vec xh_prior = cfg.prior.mu;
    for (int t = 0; t < N; ++t) {
      const Vec y = model.C * x + noise.v_seq.col(t);
      const Vec xh = xh_prior + sched.gains[t] * (y - model.C * xh_prior);
      const Vec u = u_nom.col(t) + K * (xh - x_nom.col(t));
      su[t] += u;
      suu[t] += u * u.transpose();
      sy[t] += y;
      syy[t] += y * y.transpose();
      x = model.A * x + model.B * u + noise.w_seq.col(t);
      xh_prior = model.A * xh + model.B * u;
    }
  }

  const double M = static_cast<double>(samples);
  auto z_or_exact = [](double dev, double se) {
    if (se > 0) return std::abs(dev) / se;
    return std::abs(dev) > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  };

  McReport report;
  report.samples = samples;
  report.horizon = N;
  report.threshold = z_threshold;
  for (int t = 0; t < N; ++t) {
    const Vec mu_u = su[t] / M;
    const Vec mu_y = sy[t] / M;
    const Mat cov_u = suu[t] / M - mu_u * mu_u.transpose();
    const Mat cov_y = syy[t] / M - mu_y * mu_y.transpose();
    const Mat& Su = io.Sigma_u[t];
    const Mat& Sy = io.Sigma_y[t];
    const Vec y_nom = model.C * x_nom.col(t);
    for (int i = 0; i < m; ++i) {
      report.max_z_mean_u = std::max(
          report.max_z_mean_u,
          z_or_exact(mu_u(i) - u_nom(i, t), std::sqrt(Su(i, i) / M)));
      for (int jj = 0; jj < m; ++jj)
        report.max_z_cov_u = std::max(
            report.max_z_cov_u,
            z_or_exact(cov_u(i, jj) - Su(i, jj),
                       std::sqrt((Su(i, i) * Su(jj, jj) +
                                  Su(i, jj) * Su(i, jj)) /
                                 M)));
    }
    for (int i = 0; i < p; ++i) {
      report.max_z_mean_y = std::max(
          report.max_z_mean_y,
          z_or_exact(mu_y(i) - y_nom(i), std::sqrt(Sy(i, i) / M)));
      for (int jj = 0; jj < p; ++jj)
        report.max_z_cov_y = std::max(
            report.max_z_cov_y,
            z_or_exact(cov_y(i, jj) - Sy(i, jj),
                       std::sqrt((Sy(i, i) * Sy(jj, jj) +
                                  Sy(i, jj) * Sy(i, jj)) /
                                 M)));
    }
  }
  report.max_z = std::max({report.max_z_mean_u, report.max_z_cov_u,
                           report.max_z_mean_y, report.max_z_cov_y});
  report.pass = report.max_z <= z_threshold;
  return report;
}

ComparisonTable compare_controllers(const std::vector<ExperimentConfig>& cfgs) {
  if (cfgs.empty())
    throw ConfigError("compare: at least one controller config required");
  const ExperimentConfig& base = cfgs.front();
  base.validate();
  const int Tw = static_cast<int>(base.warmup_inputs.cols());
  for (const auto& cfg : cfgs) {
    cfg.validate();
    if (cfg.plant.n() != base.plant.n() || cfg.plant.m() != base.plant.m() ||
        cfg.plant.p() != base.plant.p())
      throw ConfigError("compare: all plants must share dimensions");
    if (cfg.steps != base.steps)
      throw ConfigError("compare: all configs must share the step count");
    if (static_cast<int>(cfg.warmup_inputs.cols()) != Tw)
      throw ConfigError("compare: all configs must share the warmup length");
  }

  const NoiseRealization noise =
      sample_noise(base.plant, Tw + base.steps, base.seed);
  const Vec x0 =
      sample_initial_state(base.prior.mu, base.prior.Sigma, base.seed);

  ComparisonTable table;
  for (const auto& cfg : cfgs) {
    const RunReport rep = run_experiment_with_noise(cfg, x0, noise);
    ComparisonRow row;
    row.name = rep.name;
    row.controller = rep.controller;
    row.cumulative_cost = rep.cumulative_cost;
    row.violation_rate_u = rep.violation_rate_u;
    row.violation_amount_u = rep.violation_amount_u;
    row.violation_rate_y = rep.violation_rate_y;
    row.violation_amount_y = rep.violation_amount_y;
    row.held_plans = rep.held_plans;
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace stochpc::harness
