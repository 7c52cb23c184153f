// Microbenchmarks for the numeric kernels and the end-to-end control loops.
// Run ./stochpc_bench --benchmark_filter=<regex> to narrow the set.

#include <benchmark/benchmark.h>

#include <stochpc/stochpc.hpp>

using namespace stochpc;

namespace {

LtiModel scalar_plant() {
  LtiModel model;
  model.A = Mat::Constant(1, 1, 0.9);
  model.B = Mat::Identity(1, 1);
  model.C = Mat::Identity(1, 1);
  model.Sigma_w = Mat::Constant(1, 1, 0.01);
  model.Sigma_v = Mat::Constant(1, 1, 0.04);
  return model;
}

LtiModel rotation_plant() {
  LtiModel model;
  model.A = Mat(2, 2);
  const double c = std::cos(0.7), s = std::sin(0.7);
  model.A << c, -s, s, c;
  model.A *= 0.9;
  model.B = Mat(2, 1);
  model.B << 1.0, 0.3;
  model.C = Mat(1, 2);
  model.C << 1.0, 0.2;
  model.Sigma_w = 1e-4 * Mat::Identity(2, 2);
  model.Sigma_v = Mat::Constant(1, 1, 1e-4);
  return model;
}

PolytopeSpec box_spec(int m, int p, double f_u, double f_y) {
  PolytopeSpec spec;
  spec.E_u = Mat(2 * m, m);
  spec.E_u << Mat::Identity(m, m), -Mat::Identity(m, m);
  spec.f_u = Vec::Constant(2 * m, f_u);
  spec.E_y = Mat(2 * p, p);
  spec.E_y << Mat::Identity(p, p), -Mat::Identity(p, p);
  spec.f_y = Vec::Constant(2 * p, f_y);
  spec.p_u = 0.2;
  spec.p_y = 0.2;
  return spec;
}

// ------------------------------------------------------------- kernels ---

void BM_SolveDare(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const LtiModel model = harness::random_minimal_system(
      n, std::max(1, n / 2), 1, 42 + static_cast<std::uint64_t>(n));
  const Mat Qx = symmetrized(model.C.transpose() * model.C) +
                 0.1 * Mat::Identity(n, n);
  const Mat R = Mat::Identity(model.m(), model.m());
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_dare(model.A, model.B, Qx, R));
  }
}
BENCHMARK(BM_SolveDare)->Arg(2)->Arg(4)->Arg(8)->Arg(16);

void BM_KalmanSchedule(benchmark::State& state) {
  const int N = static_cast<int>(state.range(0));
  const LtiModel model = harness::random_minimal_system(4, 2, 2, 7);
  const GaussianBelief prior{Vec::Zero(4), 0.1 * Mat::Identity(4, 4)};
  const Mat K =
      solve_dare(model.A, model.B, symmetrized(model.C.transpose() * model.C),
                 Mat::Identity(2, 2))
          .K;
  for (auto _ : state) {
    const KalmanSchedule sched = kalman_schedule(model, prior, N);
    benchmark::DoNotOptimize(
        io_variances(model, K,
                     propagate_joint_covariance(model, K, sched, prior, N)));
  }
}
BENCHMARK(BM_KalmanSchedule)->Arg(6)->Arg(12)->Arg(24);

void BM_SolveQp(benchmark::State& state) {
  const int N = static_cast<int>(state.range(0));
  const LtiModel model = rotation_plant();
  const GaussianBelief prior{Vec::Zero(2), 0.01 * Mat::Identity(2, 2)};
  const Mat K =
      solve_dare(model.A, model.B,
                 symmetrized(model.C.transpose() * model.C),
                 Mat::Identity(1, 1))
          .K;
  const KalmanSchedule sched = kalman_schedule(model, prior, N);
  const IoVariances io = io_variances(
      model, K, propagate_joint_covariance(model, K, sched, prior, N));
  const PolytopeSpec spec = box_spec(1, 1, 2.0, 1.5);
  const TightenedConstraints tight =
      tighten(spec, uniform_allocation(spec, N), io);
  const SmpcQp sq =
      build_smpc_qp(model, prior.mu, K, tight, 10.0 * Mat::Identity(1, 1),
                    Mat::Identity(1, 1), Mat::Constant(1, N, 0.5), N);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_qp(sq.qp));
  }
}
BENCHMARK(BM_SolveQp)->Arg(6)->Arg(12)->Arg(24);

void BM_RiskAllocation(benchmark::State& state) {
  LtiModel model = scalar_plant();
  model.Sigma_w = Mat::Constant(1, 1, 0.001);
  model.Sigma_v = Mat::Constant(1, 1, 0.001);
  const int N = 8;
  const PolytopeSpec spec = box_spec(1, 1, 0.6, 0.4);
  const GaussianBelief prior{Vec::Zero(1), Mat::Constant(1, 1, 0.01)};
  const KalmanSchedule sched = kalman_schedule(model, prior, N);
  const Mat K = solve_dare(model.A, model.B, Mat::Constant(1, 1, 10.0),
                           Mat::Identity(1, 1))
                    .K;
  const IoVariances io = io_variances(
      model, K, propagate_joint_covariance(model, K, sched, prior, N));
  const Mat Q = Mat::Constant(1, 1, 100.0), R = Mat::Identity(1, 1);
  const Mat refs = Mat::Constant(1, N, 0.35);
  PlanSolver solver = [&](const TightenedConstraints& tight) {
    const SmpcQp sq = build_smpc_qp(model, prior.mu, K, tight, Q, R, refs, N);
    const QpSolution sol = solve_qp(sq.qp);
    NominalPlan plan;
    plan.u_nom = sq.unstack_inputs(sol.x);
    plan.y_nom = sq.nominal_outputs(model, sol.x);
    plan.cost = 0.5 * sol.x.dot(sq.qp.H * sol.x) + sq.qp.f.dot(sol.x) +
                sq.cost_offset;
    return plan;
  };
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        iterative_risk_allocation(solver, spec, io, N, {}));
  }
}
BENCHMARK(BM_RiskAllocation);

void BM_RecoverQuantities(benchmark::State& state) {
  const int T_d = static_cast<int>(state.range(0));
  const LtiModel model = rotation_plant();
  harness::DataSource src;
  src.length = T_d;
  src.noise_free = true;
  src.seed = 5;
  const OfflineData data = harness::collect_offline_data(model, src);
  const int L = minimal_window_length(model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(recover_quantities(partition(data, L)));
  }
}
BENCHMARK(BM_RecoverQuantities)->Arg(200)->Arg(400)->Arg(800);

void BM_BuildAuxModel(benchmark::State& state) {
  const LtiModel model = rotation_plant();
  const int L = minimal_window_length(model);
  const RecoveredQuantities rq = validation::model_quantities(model, L);
  const Mat Sigma_rho = validation::noise_response_covariance(model, L);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_aux_model(rq, L, 1, 1, Sigma_rho));
  }
}
BENCHMARK(BM_BuildAuxModel);

// ---------------------------------------------------------- end to end ---

void BM_SmpcClosedLoop(benchmark::State& state) {
  harness::ExperimentConfig cfg;
  cfg.controller = harness::ControllerKind::Smpc;
  cfg.plant = scalar_plant();
  cfg.horizon = {1, 8, 2};
  cfg.constraints = box_spec(1, 1, 2.0, 1.0);
  cfg.weights = {10.0 * Mat::Identity(1, 1), Mat::Identity(1, 1)};
  cfg.prior = {Vec::Zero(1), Mat::Constant(1, 1, 0.05)};
  cfg.refs.pieces.push_back({0, Vec::Constant(1, 0.3)});
  cfg.steps = 8;
  cfg.seed = 21;
  for (auto _ : state) {
    benchmark::DoNotOptimize(harness::run_experiment(cfg));
  }
}
BENCHMARK(BM_SmpcClosedLoop);

void BM_SddpcClosedLoop(benchmark::State& state) {
  harness::ExperimentConfig cfg;
  cfg.controller = harness::ControllerKind::Sddpc;
  cfg.plant = rotation_plant();
  cfg.horizon = {2, 8, 2};
  cfg.constraints = box_spec(1, 1, 3.0, 2.0);
  cfg.weights = {10.0 * Mat::Identity(1, 1), Mat::Identity(1, 1)};
  cfg.prior = {Vec::Zero(2), 0.01 * Mat::Identity(2, 2)};
  cfg.refs.pieces.push_back({0, Vec::Constant(1, 0.4)});
  cfg.steps = 8;
  cfg.seed = 22;
  cfg.data_source.length = 300;
  cfg.data_source.noise_free = true;
  cfg.data_source.seed = 23;
  for (auto _ : state) {
    benchmark::DoNotOptimize(harness::run_experiment(cfg));
  }
}
BENCHMARK(BM_SddpcClosedLoop);

}  // namespace

BENCHMARK_MAIN();
