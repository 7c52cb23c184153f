#pragma once

#include <optional>

#include "stochpc/plant.hpp"
#include "stochpc/types.hpp"

/// Everything built from offline input–output data: Hankel partitioning,
/// persistency of excitation, recovery of the (G, H, Γ) predictor
/// matrices, and assembly of the auxiliary state-space model whose state
/// stacks past inputs, noise-free outputs, and noise responses.
namespace stochpc {

/// Offline input–output trajectory; column t is the sample at time t.
struct OfflineData {
  Mat u_d;  ///< m × T_d
  Mat y_d;  ///< p × T_d
  int T_d() const { return static_cast<int>(u_d.cols()); }
  void validate() const;
};

/// Depth-2L Hankel blocks of the offline data split into past (1) and
/// future (2) halves; h = T_d − 2L + 1 columns each.
struct DataMatrices {
  Mat U1, U2;  ///< mL × h
  Mat Y1, Y2;  ///< pL × h
  int h = 0;
  int L = 0, m = 0, p = 0;
};

/// Data-recovered predictor matrices:
///   Y2 = Γ_U U1 + Γ_Y Y1 + G U2   (noise-free),   H = Γ_U + Γ_Y G form
/// the depth-L forced-response Toeplitz; Gamma1_* are the first block rows
/// (one-step predictors).
struct RecoveredQuantities {
  Mat G;         ///< pL × mL, strictly causal forced response
  Mat H;         ///< pL × mL, L-step forced response (= Γ_U + Γ_Y·G)
  Mat Gamma_U;   ///< pL × mL
  Mat Gamma_Y;   ///< pL × pL
  Mat Gamma1_U;  ///< p × mL
  Mat Gamma1_Y;  ///< p × pL
  int L = 0, m = 0, p = 0;
};

/// Auxiliary realization over the stacked state
///   x_aux_t = col(u_[t−L,t),  y°_[t−L,t),  ρ_[t−L,t)),
/// where y° is the noise-free output and ρ_s ∈ R^{pL} the depth-L output
/// response to the process noise entering at time s. Dimension
/// n_aux = mL + pL + pL².
struct AuxModel {
  Mat A_bold;        ///< n_aux × n_aux
  Mat B_bold;        ///< n_aux × m
  Mat C_bold;        ///< p × n_aux
  Mat Sigma_w_bold;  ///< n_aux × n_aux (only the trailing pL×pL block nonzero)
  int L = 0, m = 0, p = 0;
  int n_aux() const { return m * L + p * L + p * L * L; }

  /// View the auxiliary model as a plain LTI plant (shared measurement
  /// noise covariance), so estimation/control code runs on it unchanged.
  LtiModel to_lti(const Mat& Sigma_v) const;
};

/// Block Hankel matrix of depth K: block (i, j) = seq column (i + j),
/// i = 0..K−1, j = 0..len−K. Shape (K·dim) × (len−K+1).
Mat hankel(const Mat& seq, int depth);

/// True when hankel(seq, order) has full row rank (order·dim), using the
/// library-wide SVD rank tolerance.
bool is_persistently_exciting(const Mat& seq, int order);

/// Split depth-2L Hankel matrices of the data into past/future halves.
DataMatrices partition(const OfflineData& data, int L);

/// Recover (G, H, Γ) from the data by least squares:
///   [Γ_U, Γ_Y, G] = Y2 · pinv(col(U1, Y1, U2)),    H = Γ_U + Γ_Y G.
/// Pass tikhonov_lambda > 0 to replace the pseudoinverse with the
/// ridge-regularized right inverse (noise robustness).
RecoveredQuantities recover_quantities(
    const DataMatrices& dm, std::optional<double> tikhonov_lambda = {});

/// Selector stacks used by the auxiliary model: with S_j picking the j-th
/// p-block of a pL vector, col(E, F) stacks the shifted selector rows so
/// that F maps a ρ window to the total noise response at the current step
/// and E maps it to the responses at the L previous steps.
void window_selectors(int p, int L, Mat& E, Mat& F);

/// Assemble the auxiliary model from recovered quantities and the chosen
/// noise-response covariance Sigma_rho (pL × pL, PSD).
AuxModel build_aux_model(const RecoveredQuantities& rq, int L, int m, int p,
                         const Mat& Sigma_rho);

}  // namespace stochpc
