#pragma once

#include <vector>

#include "stochpc/plant.hpp"
#include "stochpc/types.hpp"

/// State estimation: finite-horizon Kalman gain schedules and propagation
/// of the joint covariance of (estimate, state) under affine feedback.
namespace stochpc {

/// Gaussian state belief N(mu, Sigma).
struct GaussianBelief {
  Vec mu;
  Mat Sigma;
};

/// Precomputed N-step Kalman filter quantities starting from a prior
/// covariance: gains[j], P_post[j] apply at relative step j (j = 0..N−1),
/// P_prior has N+1 entries with P_prior[0] = prior covariance.
struct KalmanSchedule {
  std::vector<Mat> gains;
  std::vector<Mat> P_post;
  std::vector<Mat> P_prior;
};

/// Joint covariance of the stacked vector (x̂_t, x_t), one 2n × 2n block
/// per relative step t = 0..N−1.
struct JointCovariance {
  std::vector<Mat> joint;
};

/// Variances of the applied input u_t = u_nom_t + K(x̂_t − x_nom_t) and the
/// measured output y_t = C x_t + v_t, per relative step.
struct IoVariances {
  std::vector<Mat> Sigma_u;
  std::vector<Mat> Sigma_y;
};

/// Run the covariance half of the Kalman filter N steps ahead:
///   gain  L_j = P⁻_j Cᵀ (C P⁻_j Cᵀ + Σ_v)⁻¹
///   post  P_j = (I − L_j C) P⁻_j
///   prior P⁻_{j+1} = A P_j Aᵀ + Σ_w ,  P⁻_0 = prior.Sigma.
/// The innovation inverse is taken through a Cholesky factorization.
KalmanSchedule kalman_schedule(const LtiModel& model,
                               const GaussianBelief& prior, int N);

/// Measurement update of the mean with a precomputed gain:
/// returns μ + L (y − C μ).
Vec kf_update(const Vec& prior_mean, const Vec& y, const Mat& gain,
              const LtiModel& model);

/// Time update of the mean: returns A μ + B u.
Vec kf_predict(const Vec& posterior_mean, const Vec& u, const LtiModel& model);

/// Propagate the joint covariance of (x̂_t, x_t) forward N steps under the
/// affine policy u_t = u_nom_t + K(x̂_t − x_nom_t):
///   base   [[Σ−P₀, Σ−P₀], [Σ−P₀, Σ]]  with Σ the prior covariance
///   step   J_t = Λ_t J_{t−1} Λ_tᵀ + Δ_t
///   Λ_t = [[A+BK−L_tCA, L_tCA], [BK, A]]
///   Δ_t = [[L_t(CΣ_wCᵀ+Σ_v)L_tᵀ, L_tCΣ_w], [Σ_wCᵀL_tᵀ, Σ_w]].
/// The Δ_t off-diagonal blocks capture the correlation between the
/// estimate update and the state noise entering through w_{t−1}; dropping
/// them biases every downstream input/output variance whenever CΣ_w ≠ 0.
JointCovariance propagate_joint_covariance(const LtiModel& model, const Mat& K,
                                           const KalmanSchedule& schedule,
                                           const GaussianBelief& prior, int N);

/// Reduce joint covariances to input/output variances:
///   Σ_u_t = K J_x̂x̂ Kᵀ,   Σ_y_t = C J_xx Cᵀ + Σ_v.
IoVariances io_variances(const LtiModel& model, const Mat& K,
                         const JointCovariance& joint);

}  // namespace stochpc
