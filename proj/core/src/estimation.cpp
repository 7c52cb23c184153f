#include "stochpc/estimation.hpp"

#include <Eigen/Cholesky>

namespace stochpc {

KalmanSchedule kalman_schedule(const LtiModel& model,
                               const GaussianBelief& prior, int N) {
  model.validate();
  const int n = model.n();
  require_dims(prior.Sigma.rows() == n && prior.Sigma.cols() == n,
               "kalman_schedule: prior covariance shape");
  if (N < 1) throw Error("kalman_schedule: N must be >= 1");

  KalmanSchedule sched;
  sched.gains.reserve(N);
  sched.P_post.reserve(N);
  sched.P_prior.reserve(N + 1);

  Mat P_prior = symmetrized(prior.Sigma);
  sched.P_prior.push_back(P_prior);
  for (int j = 0; j < N; ++j) {
    Mat S = symmetrized(model.C * P_prior * model.C.transpose() +
                        model.Sigma_v);
    Eigen::LLT<Mat> llt(S);
    if (llt.info() != Eigen::Success)
      throw Error("kalman_schedule: innovation covariance not PD");
    // L = P⁻Cᵀ S⁻¹  computed as (S⁻¹ C P⁻)ᵀ through the Cholesky factor.
    Mat gain = llt.solve(model.C * P_prior).transpose();
    Mat P_post =
        symmetrized((Mat::Identity(n, n) - gain * model.C) * P_prior);
    sched.gains.push_back(gain);
    sched.P_post.push_back(P_post);
    P_prior = symmetrized(model.A * P_post * model.A.transpose() +
                          model.Sigma_w);
    sched.P_prior.push_back(P_prior);
  }
  return sched;
}

Vec kf_update(const Vec& prior_mean, const Vec& y, const Mat& gain,
              const LtiModel& model) {
  require_dims(prior_mean.size() == model.n() && y.size() == model.p(),
               "kf_update: operand lengths");
  return prior_mean + gain * (y - model.C * prior_mean);
}

Vec kf_predict(const Vec& posterior_mean, const Vec& u,
               const LtiModel& model) {
  require_dims(posterior_mean.size() == model.n() && u.size() == model.m(),
               "kf_predict: operand lengths");
  return model.A * posterior_mean + model.B * u;
}

JointCovariance propagate_joint_covariance(const LtiModel& model, const Mat& K,
                                           const KalmanSchedule& schedule,
                                           const GaussianBelief& prior,
                                           int N) {
  const int n = model.n();
  require_dims(K.rows() == model.m() && K.cols() == n,
               "propagate_joint_covariance: K shape");
  if (N < 1) throw Error("propagate_joint_covariance: N must be >= 1");
  require_dims(static_cast<int>(schedule.gains.size()) >= N,
               "propagate_joint_covariance: schedule shorter than N");

  JointCovariance jc;
  jc.joint.reserve(N);

  const Mat Sigma0 = symmetrized(prior.Sigma);
  const Mat D0 = symmetrized(Sigma0 - schedule.P_post[0]);
  Mat J(2 * n, 2 * n);
  J.topLeftCorner(n, n) = D0;
  J.topRightCorner(n, n) = D0;
  J.bottomLeftCorner(n, n) = D0;
  J.bottomRightCorner(n, n) = Sigma0;
  jc.joint.push_back(symmetrized(J));

  const Mat BK = model.B * K;
  for (int t = 1; t < N; ++t) {
    const Mat& L = schedule.gains[t];
    const Mat LCA = L * model.C * model.A;
    Mat Lambda(2 * n, 2 * n);
    Lambda.topLeftCorner(n, n) = model.A + BK - LCA;
    Lambda.topRightCorner(n, n) = LCA;
    Lambda.bottomLeftCorner(n, n) = BK;
    Lambda.bottomRightCorner(n, n) = model.A;

    const Mat LCSw = L * model.C * model.Sigma_w;
    Mat Delta(2 * n, 2 * n);
    Delta.topLeftCorner(n, n) =
        L *
        (model.C * model.Sigma_w * model.C.transpose() + model.Sigma_v) *
        L.transpose();
    Delta.topRightCorner(n, n) = LCSw;
    Delta.bottomLeftCorner(n, n) = LCSw.transpose();
    Delta.bottomRightCorner(n, n) = model.Sigma_w;

    J = symmetrized(Lambda * J * Lambda.transpose() + Delta);
    jc.joint.push_back(J);
  }
  return jc;
}

IoVariances io_variances(const LtiModel& model, const Mat& K,
                         const JointCovariance& joint) {
  const int n = model.n();
  IoVariances io;
  io.Sigma_u.reserve(joint.joint.size());
  io.Sigma_y.reserve(joint.joint.size());
  for (const Mat& J : joint.joint) {
    require_dims(J.rows() == 2 * n && J.cols() == 2 * n,
                 "io_variances: joint block shape");
    const Mat V_hat = J.topLeftCorner(n, n);
    const Mat V_x = J.bottomRightCorner(n, n);
    io.Sigma_u.push_back(symmetrized(K * V_hat * K.transpose()));
    io.Sigma_y.push_back(symmetrized(
        model.C * V_x * model.C.transpose() + model.Sigma_v));
  }
  return io;
}

}  // namespace stochpc
