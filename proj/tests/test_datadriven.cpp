#include <doctest.h>

#include <cmath>
#include <stochpc/datadriven.hpp>
#include <stochpc/numerics.hpp>
#include <stochpc/plant.hpp>
#include <stochpc/rng.hpp>
#include <stochpc/validation.hpp>

#include "test_support.hpp"

using namespace stochpc;
using testsup::max_abs_diff;
using testsup::random_matrix;
using testsup::rel_gap;

namespace {

/// Two-state rotation plant with minimal window length 2.
LtiModel rotation_model(double sigma_w = 0.0, double sigma_v = 0.0) {
  LtiModel model;
  model.A = Mat(2, 2);
  const double c = std::cos(0.7), s = std::sin(0.7);
  model.A << c, -s, s, c;
  model.A *= 0.9;
  model.B = Mat(2, 1);
  model.B << 1.0, 0.3;
  model.C = Mat(1, 2);
  model.C << 1.0, 0.2;
  model.Sigma_w = sigma_w * Mat::Identity(2, 2);
  model.Sigma_v = Mat::Constant(1, 1, std::max(sigma_v, 1e-12));
  return model;
}

/// Noise-free input–output data under a seeded white input.
OfflineData noise_free_data(const LtiModel& model, int T_d, std::uint64_t seed) {
  CounterRng rng(seed);
  OfflineData data;
  data.u_d = Mat(model.m(), T_d);
  data.y_d = Mat(model.p(), T_d);
  Vec x = Vec::Zero(model.n());
  for (int t = 0; t < T_d; ++t) {
    for (int i = 0; i < model.m(); ++i)
      data.u_d(i, t) = rng.normal(streams::excitation_input, t, i);
    data.y_d.col(t) = model.C * x;
    x = model.A * x + model.B * data.u_d.col(t);
  }
  return data;
}

}  // namespace

TEST_SUITE("datadriven.hankel") {
  TEST_CASE("scalar sequence, depth two") {
    Mat seq(1, 5);
    seq << 1, 2, 3, 4, 5;
    const Mat H = hankel(seq, 2);
    Mat expect(2, 4);
    expect << 1, 2, 3, 4, 2, 3, 4, 5;
    CHECK(max_abs_diff(H, expect) == 0.0);
  }

  TEST_CASE("vector sequence keeps whole columns per block") {
    const Mat seq = random_matrix(2, 6, 10);
    const Mat H = hankel(seq, 3);
    REQUIRE(H.rows() == 6);
    REQUIRE(H.cols() == 4);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j)
        CHECK(max_abs_diff(H.block(2 * i, j, 2, 1), seq.col(i + j)) == 0.0);
  }

  TEST_CASE("depth one is the sequence itself") {
    const Mat seq = random_matrix(3, 4, 11);
    CHECK(max_abs_diff(hankel(seq, 1), seq) == 0.0);
  }

  TEST_CASE("invalid depths throw") {
    const Mat seq = random_matrix(1, 4, 12);
    CHECK_THROWS_AS(hankel(seq, 0), Error);
    CHECK_THROWS_AS(hankel(seq, 5), Error);
  }
}

TEST_SUITE("datadriven.excitation") {
  TEST_CASE("white noise excites, constants do not") {
    CounterRng rng(99);
    Mat u(1, 40);
    for (int t = 0; t < 40; ++t) u(0, t) = rng.normal(0, t, 0);
    CHECK(is_persistently_exciting(u, 3));
    CHECK(is_persistently_exciting(u, 8));
    CHECK_FALSE(is_persistently_exciting(Mat::Ones(1, 40), 2));
    CHECK_FALSE(is_persistently_exciting(Mat::Zero(2, 40), 1));
  }

  TEST_CASE("too-short sequences are not exciting") {
    CHECK_FALSE(is_persistently_exciting(Mat::Ones(1, 3), 4));
    CHECK_THROWS_AS(is_persistently_exciting(Mat::Ones(1, 3), 0), Error);
  }
}

TEST_SUITE("datadriven.partition") {
  TEST_CASE("past/future halves tile the depth-2L structure") {
    OfflineData data;
    data.u_d = random_matrix(2, 20, 20);
    data.y_d = random_matrix(1, 20, 21);
    const int L = 2;
    const DataMatrices dm = partition(data, L);
    CHECK(dm.h == 20 - 2 * L + 1);
    CHECK(dm.L == L);
    CHECK(dm.m == 2);
    CHECK(dm.p == 1);
    const Mat U = hankel(data.u_d, 2 * L);
    const Mat Y = hankel(data.y_d, 2 * L);
    CHECK(max_abs_diff(dm.U1, U.topRows(2 * L)) == 0.0);
    CHECK(max_abs_diff(dm.U2, U.bottomRows(2 * L)) == 0.0);
    CHECK(max_abs_diff(dm.Y1, Y.topRows(L)) == 0.0);
    CHECK(max_abs_diff(dm.Y2, Y.bottomRows(L)) == 0.0);
    // The future input block starts exactly L samples after the past one.
    CHECK(max_abs_diff(dm.U2.topRows(2), data.u_d.middleCols(L, dm.h)) == 0.0);
  }

  TEST_CASE("short data and mismatched channels throw") {
    OfflineData data;
    data.u_d = random_matrix(1, 3, 22);
    data.y_d = random_matrix(1, 3, 23);
    CHECK_THROWS_AS(partition(data, 2), Error);
    data.y_d = random_matrix(1, 4, 24);
    CHECK_THROWS_AS(data.validate(), Error);
    CHECK_THROWS_AS(partition(data, 1), Error);
  }
}

TEST_SUITE("datadriven.recovery") {
  TEST_CASE("scalar plant, window one: closed-form predictor") {
    LtiModel model;
    model.A = Mat::Constant(1, 1, 0.5);
    model.B = Mat::Identity(1, 1);
    model.C = Mat::Identity(1, 1);
    model.Sigma_w = Mat::Zero(1, 1);
    model.Sigma_v = Mat::Constant(1, 1, 1e-12);
    const OfflineData data = noise_free_data(model, 12, 301);
    REQUIRE(is_persistently_exciting(data.u_d, 3));  // order 2L + n
    const RecoveredQuantities rq = recover_quantities(partition(data, 1));
    CHECK(std::abs(rq.G(0, 0)) <= 1e-9);
    CHECK(rq.H(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rq.Gamma_U(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rq.Gamma_Y(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
  }

  TEST_CASE("noise-free data reproduces the model-derived quantities") {
    const LtiModel model = rotation_model();
    const int L = 3;
    const OfflineData data = noise_free_data(model, 60, 302);
    REQUIRE(is_persistently_exciting(data.u_d, 2 * L + model.n()));
    const RecoveredQuantities rq = recover_quantities(partition(data, L));
    const RecoveredQuantities truth = validation::model_quantities(model, L);
    CHECK(rel_gap(rq.G, truth.G) <= 1e-6);
    CHECK(rel_gap(rq.H, truth.H) <= 1e-6);
    CHECK(rel_gap(rq.Gamma_U, truth.Gamma_U) <= 1e-6);
    CHECK(rel_gap(rq.Gamma_Y, truth.Gamma_Y) <= 1e-6);
    CHECK(max_abs_diff(rq.Gamma1_U, rq.Gamma_U.topRows(1)) == 0.0);
    CHECK(max_abs_diff(rq.Gamma1_Y, rq.Gamma_Y.topRows(1)) == 0.0);
  }

  TEST_CASE("model quantities carry the causal Toeplitz structure") {
    const LtiModel model = rotation_model();
    const int L = 3, p = 1, m = 1;
    const RecoveredQuantities truth = validation::model_quantities(model, L);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) {
        const Mat block = truth.G.block(i * p, j * m, p, m);
        if (j >= i) {
          CHECK(block.cwiseAbs().maxCoeff() <= 1e-12);  // strictly causal
        } else {
          Mat power = Mat::Identity(2, 2);
          for (int k = 0; k < i - j - 1; ++k) power = model.A * power;
          CHECK(max_abs_diff(block, model.C * power * model.B) <= 1e-12);
        }
        // H is the cross-window forced-response map: block (i, j) sends the
        // input j steps into the past window to the output i steps into the
        // coming one, i.e. C A^{L-1+i-j} B — Hankel in i - j.
        const Mat hblock = truth.H.block(i * p, j * m, p, m);
        Mat hpower = Mat::Identity(2, 2);
        for (int k = 0; k < L - 1 + i - j; ++k) hpower = model.A * hpower;
        CHECK(max_abs_diff(hblock, model.C * hpower * model.B) <= 1e-12);
      }
  }

  TEST_CASE("ridge-regularized recovery stays close under mild noise") {
    const LtiModel model = rotation_model(0.0025, 0.01);
    const int L = 2;
    CounterRng rng(303);
    OfflineData data;
    const int T_d = 400;
    data.u_d = Mat(1, T_d);
    data.y_d = Mat(1, T_d);
    Vec x = Vec::Zero(2);
    for (int t = 0; t < T_d; ++t) {
      data.u_d(0, t) = rng.normal(streams::excitation_input, t, 0);
      data.y_d(0, t) =
          (model.C * x)(0) + 0.1 * rng.normal(streams::measurement_noise, t, 0);
      Vec w(2);
      w << 0.05 * rng.normal(streams::process_noise, t, 0),
          0.05 * rng.normal(streams::process_noise, t, 1);
      x = model.A * x + model.B * data.u_d.col(t) + w;
    }
    const RecoveredQuantities rq =
        recover_quantities(partition(data, L), 1e-3);
    const RecoveredQuantities truth = validation::model_quantities(model, L);
    CHECK(rel_gap(rq.H, truth.H) <= 5e-2);
    CHECK(rel_gap(rq.Gamma_Y, truth.Gamma_Y) <= 0.15);
  }
}

TEST_SUITE("datadriven.selectors") {
  TEST_CASE("selector stacks are binary with the expected shapes") {
    Mat E, F;
    window_selectors(2, 3, E, F);
    const int p = 2, L = 3;
    REQUIRE(E.rows() == p * L);
    REQUIRE(E.cols() == p * L * L);
    REQUIRE(F.rows() == p);
    REQUIRE(F.cols() == p * L * L);
    auto binary = [](const Mat& M) {
      return ((M.array() == 0.0) || (M.array() == 1.0)).all();
    };
    CHECK(binary(E));
    CHECK(binary(F));
    // The current-step row collects one block from every window slot.
    for (int i = 0; i < p; ++i) CHECK(F.row(i).sum() == doctest::Approx(L));
    CHECK_THROWS_AS(window_selectors(0, 2, E, F), Error);
  }
}

TEST_SUITE("datadriven.aux_model") {
  TEST_CASE("dimensions and sparsity of the assembled realization") {
    const LtiModel model = rotation_model();
    const int L = 2, m = 1, p = 1;
    const RecoveredQuantities rq = validation::model_quantities(model, L);
    const Mat Sigma_rho = validation::noise_response_covariance(model, L);
    const AuxModel aux = build_aux_model(rq, L, m, p, Sigma_rho);

    REQUIRE(aux.n_aux() == 8);  // mL + pL + pL^2
    REQUIRE(aux.A_bold.rows() == 8);
    REQUIRE(aux.B_bold.cols() == 1);
    REQUIRE(aux.C_bold.rows() == 1);

    // The input enters only at the newest slot of the input window.
    Mat b_expect = Mat::Zero(8, 1);
    b_expect(m * (L - 1), 0) = 1.0;
    CHECK(max_abs_diff(aux.B_bold, b_expect) == 0.0);

    // Process noise lives only in the trailing noise-window block.
    CHECK(aux.Sigma_w_bold.topLeftCorner(4, 4).cwiseAbs().maxCoeff() == 0.0);
    CHECK(aux.Sigma_w_bold.topRightCorner(4, 4).cwiseAbs().maxCoeff() == 0.0);
    CHECK(max_abs_diff(aux.Sigma_w_bold.bottomRightCorner(4, 4),
                       Sigma_rho) == 0.0);

    // Output map: [Γ1_U, Γ1_Y, F − Γ1_Y E].
    Mat E, F;
    window_selectors(p, L, E, F);
    CHECK(max_abs_diff(aux.C_bold.leftCols(2), rq.Gamma1_U) <= 1e-14);
    CHECK(max_abs_diff(aux.C_bold.middleCols(2, 2), rq.Gamma1_Y) <= 1e-14);
    CHECK(max_abs_diff(aux.C_bold.rightCols(4), F - rq.Gamma1_Y * E) <= 1e-12);

    // The LTI view shares dimensions and the chosen measurement noise.
    const LtiModel lifted = aux.to_lti(Mat::Constant(1, 1, 0.3));
    CHECK(lifted.n() == 8);
    CHECK(lifted.Sigma_v(0, 0) == 0.3);
    CHECK(max_abs_diff(lifted.A, aux.A_bold) == 0.0);

    Mat bad = Mat::Identity(3, 3);
    CHECK_THROWS_AS(build_aux_model(rq, L, m, p, bad), Error);
  }

  TEST_CASE("embeddings: Phi factorizes the driver map and matches priors") {
    const LtiModel model = rotation_model(0.02, 0.1);
    const int L = 2;
    const validation::PhiOracles oracles =
        validation::build_phi_oracles(model, L);
    REQUIRE(oracles.Phi.rows() == 2);
    REQUIRE(oracles.Phi.cols() == 8);
    CHECK(max_abs_diff(oracles.Phi * oracles.Phi_aux, oracles.Phi_orig) <=
          1e-10);

    GaussianBelief prior;
    prior.mu = random_matrix(2, 1, 400);
    prior.Sigma = testsup::random_psd(2, 401) + 0.1 * Mat::Identity(2, 2);
    const GaussianBelief mapped = validation::matched_prior(prior, oracles);
    REQUIRE(mapped.mu.size() == 8);
    CHECK(max_abs_diff(oracles.Phi * mapped.mu, prior.mu) <= 1e-8);
    CHECK(max_abs_diff(
              oracles.Phi * mapped.Sigma * oracles.Phi.transpose(),
              prior.Sigma) <= 1e-8);
    CHECK(testsup::min_eigenvalue(mapped.Sigma) >= -1e-10);
  }

  TEST_CASE("noise response covariance is the lifted process noise") {
    const LtiModel model = rotation_model(0.05, 0.1);
    const int L = 3;
    const Mat O = extended_observability(model.A, model.C, L);
    const Mat expect = O * model.Sigma_w * O.transpose();
    CHECK(max_abs_diff(validation::noise_response_covariance(model, L),
                       expect) <= 1e-14);
    CHECK(testsup::min_eigenvalue(expect) >= -1e-12);
  }

  TEST_CASE("fifty-step twin simulation tracks the true plant exactly") {
    const LtiModel model = rotation_model(0.01, 0.05);
    const int L = 2, n = 2;
    REQUIRE(minimal_window_length(model) == L);
    const RecoveredQuantities rq = validation::model_quantities(model, L);
    const Mat Sigma_rho = validation::noise_response_covariance(model, L);
    const AuxModel aux = build_aux_model(rq, L, 1, 1, Sigma_rho);
    const validation::PhiOracles oracles =
        validation::build_phi_oracles(model, L);
    const Mat O = extended_observability(model.A, model.C, L);

    CounterRng rng(500);
    auto draw_w = [&](int t) {
      Vec w(n);
      for (int i = 0; i < n; ++i)
        w(i) = 0.1 * rng.normal(streams::process_noise, t, i);
      return w;
    };
    auto draw_u = [&](int t) {
      return Vec::Constant(1, rng.normal(streams::excitation_input, t, 0));
    };

    // Pre-roll L steps to accumulate the history windows.
    Vec x = random_matrix(n, 1, 501);
    Mat u_window(1, L), yo_window(1, L), w_window(n, L);
    for (int t = 0; t < L; ++t) {
      const Vec u = draw_u(t), w = draw_w(t);
      u_window.col(t) = u;
      yo_window.col(t) = model.C * x;
      w_window.col(t) = w;
      x = model.A * x + model.B * u + w;
    }
    Vec x_aux = validation::aux_state_from_history(model, L, u_window,
                                                   yo_window, w_window);
    REQUIRE(x_aux.size() == aux.n_aux());

    Mat u_hist(1, L + 50), yo_hist(1, L + 50), w_hist(n, L + 50);
    u_hist.leftCols(L) = u_window;
    yo_hist.leftCols(L) = yo_window;
    w_hist.leftCols(L) = w_window;

    double worst_y = 0.0, worst_x = 0.0;
    for (int k = 0; k < 50; ++k) {
      const int t = L + k;
      const double y_true = (model.C * x)(0);
      const double y_twin = (aux.C_bold * x_aux)(0);
      worst_y = std::max(worst_y, std::abs(y_true - y_twin));
      worst_x = std::max(worst_x, max_abs_diff(oracles.Phi * x_aux, x));

      const Vec u = draw_u(t), w = draw_w(t);
      u_hist.col(t) = u;
      yo_hist.col(t) = model.C * x;
      w_hist.col(t) = w;
      Vec w_bold = Vec::Zero(aux.n_aux());
      w_bold.tail(2) = O * w;
      x_aux = aux.A_bold * x_aux + aux.B_bold * u + w_bold;
      x = model.A * x + model.B * u + w;
    }
    CHECK(worst_y <= 1e-8);
    CHECK(worst_x <= 1e-8);

    // The propagated auxiliary state still equals the one rebuilt from raw
    // history windows at the final step.
    const int t_end = L + 50;
    const Vec rebuilt = validation::aux_state_from_history(
        model, L, u_hist.middleCols(t_end - L, L),
        yo_hist.middleCols(t_end - L, L), w_hist.middleCols(t_end - L, L));
    CHECK(max_abs_diff(rebuilt, x_aux) <= 1e-8);
  }

  TEST_CASE("lifted plant is stabilizable and its filter stays bounded") {
    const LtiModel model = rotation_model(0.02, 0.1);
    const int L = 2;
    const RecoveredQuantities rq = validation::model_quantities(model, L);
    const AuxModel aux = build_aux_model(
        rq, L, 1, 1, validation::noise_response_covariance(model, L));
    const LtiModel lifted = aux.to_lti(model.Sigma_v);

    const Mat Qx = lifted.C.transpose() * Mat::Constant(1, 1, 10.0) * lifted.C +
                   1e-9 * Mat::Identity(8, 8);
    const DareSolution dare =
        solve_dare(lifted.A, lifted.B, Qx, Mat::Identity(1, 1));
    CHECK(testsup::spectral_radius(lifted.A + lifted.B * dare.K) < 1.0);

    const validation::PhiOracles oracles =
        validation::build_phi_oracles(model, L);
    GaussianBelief prior;
    prior.mu = Vec::Zero(2);
    prior.Sigma = 0.05 * Mat::Identity(2, 2);
    const GaussianBelief aux_prior = validation::matched_prior(prior, oracles);
    const KalmanSchedule sched = kalman_schedule(lifted, aux_prior, 200);
    double max_norm = 0.0;
    for (const Mat& P : sched.P_prior)
      max_norm = std::max(max_norm, P.cwiseAbs().maxCoeff());
    CHECK(max_norm <= 1e3);
    // Settled: the tail of the schedule has stopped moving.
    CHECK(max_abs_diff(sched.P_prior[200], sched.P_prior[190]) <=
          1e-6 * (1.0 + sched.P_prior[200].cwiseAbs().maxCoeff()));
  }
}
