#pragma once

#include "stochpc/datadriven.hpp"
#include "stochpc/estimation.hpp"
#include "stochpc/plant.hpp"
#include "stochpc/types.hpp"

/// Model-aware verification utilities. This header is the deliberate
/// boundary between the production data-driven pipeline (which never sees
/// the true state-space model) and cross-checking code: everything here
/// requires the true (A, B, C) and is linked only by tests and the
/// verification subcommands of the CLI.
namespace stochpc::validation {

/// Linear embeddings connecting the true state x_t, the auxiliary stacked
/// state x_aux_t, and the joint driver vector
///   ξ_t = col(u_[t−L,t), x_{t−L}, w_[t−L,t))   (dimension mL + n(L+1)):
///   x_t     = Phi_orig ξ_t,
///   x_aux_t = Phi_aux  ξ_t,
///   x_t     = Phi x_aux_t   on the reachable set.
struct PhiOracles {
  Mat Phi;       ///< n × n_aux
  Mat Phi_orig;  ///< n × (mL + n(L+1))
  Mat Phi_aux;   ///< n_aux × (mL + n(L+1))
  int L = 0, n = 0, m = 0, p = 0;
};

/// Build the embedding matrices from the true model at window length L.
PhiOracles build_phi_oracles(const LtiModel& model, int L);

/// Map a prior belief on x to the consistency-matched prior belief on the
/// auxiliary state: mean Phi_aux Phi_orig⁺ mu and covariance
/// Phi_aux Phi_orig⁺ Sigma Phi_orig⁺ᵀ Phi_auxᵀ. Requires Phi_orig to have
/// full row rank (controllable model with L ≥ controllability index).
GaussianBelief matched_prior(const GaussianBelief& true_prior,
                             const PhiOracles& oracles);

/// Covariance of the depth-L noise response ρ_t = O_L w_t:
/// O_L Sigma_w O_Lᵀ (pL × pL). The consistency condition that makes the
/// auxiliary model distributionally exact.
Mat noise_response_covariance(const LtiModel& model, int L);

/// The (G, H, Γ) predictor matrices computed directly from the true model
/// — the independent targets that data recovery must reproduce.
RecoveredQuantities model_quantities(const LtiModel& model, int L);

/// Auxiliary state assembled from true signal history: column windows
/// hold times t−L … t−1 (u window m × L, noise-free outputs p × L, process
/// noise n × L). Used by twin simulations.
Vec aux_state_from_history(const LtiModel& model, int L, const Mat& u_window,
                           const Mat& yo_window, const Mat& w_window);

}  // namespace stochpc::validation
