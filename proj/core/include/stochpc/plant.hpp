#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "stochpc/types.hpp"

/// Linear time-invariant plants with Gaussian process/measurement noise,
/// noise realization sampling, closed-loop simulation, and trajectory CSV.
namespace stochpc {

/// x_{t+1} = A x_t + B u_t + w_t,   y_t = C x_t + v_t,
/// w ~ N(0, Sigma_w) (PSD),  v ~ N(0, Sigma_v) (PD), mutually independent.
struct LtiModel {
  Mat A;        ///< n × n
  Mat B;        ///< n × m
  Mat C;        ///< p × n
  Mat Sigma_w;  ///< n × n, symmetric PSD
  Mat Sigma_v;  ///< p × p, symmetric PD

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int p() const { return static_cast<int>(C.rows()); }

  /// Throws DimensionError / Error on inconsistent shapes or covariances
  /// failing their definiteness requirements.
  void validate() const;
};

/// One sampled disturbance path: column t holds the draw at time t.
struct NoiseRealization {
  Mat w_seq;           ///< n × T
  Mat v_seq;           ///< p × T
  std::uint64_t seed;  ///< seed the realization was drawn from
};

/// Recorded closed-loop run. x_seq has one more column than u_seq/y_seq
/// (the terminal state); column j corresponds to time t0 + j.
struct Trajectory {
  Mat x_seq;  ///< n × (T+1)
  Mat u_seq;  ///< m × T
  Mat y_seq;  ///< p × T
  int t0 = 0;
};

/// Measurement-feedback policy: maps (t, y_t) to u_t.
using PolicyCallback = std::function<Vec(int, const Vec&)>;

/// One state transition x⁺ = A x + B u + w.
Vec step(const LtiModel& model, const Vec& x, const Vec& u, const Vec& w);

/// One measurement y = C x + v.
Vec output(const LtiModel& model, const Vec& x, const Vec& v);

/// Symmetric PSD square root F with F Fᵀ = S, via eigendecomposition with
/// negative eigenvalues clamped to zero; tolerant of semidefinite
/// covariances where a Cholesky factorization would fail.
Mat psd_sqrt(const Mat& S);

/// Draw T steps of (w_t, v_t) from the model's noise covariances with the
/// counter RNG (streams: process_noise, measurement_noise). Covariance
/// square roots come from a symmetric eigendecomposition with negative
/// eigenvalues clamped to zero, so any PSD input is accepted.
NoiseRealization sample_noise(const LtiModel& model, int horizon,
                              std::uint64_t seed);

/// Draw x0 ~ N(mu, Sigma) from the initial_state stream of the seed.
Vec sample_initial_state(const Vec& mu, const Mat& Sigma, std::uint64_t seed);

/// Simulate y-feedback closed loop for T steps from x0 against a recorded
/// noise realization. The controller is called once per step in time order.
Trajectory simulate_closed_loop(const LtiModel& model,
                                const PolicyCallback& controller,
                                const Vec& x0, const NoiseRealization& noise,
                                int T);

/// Extended observability matrix col(C, CA, …, CA^{L−1})  (pL × n).
Mat extended_observability(const Mat& A, const Mat& C, int L);

/// Extended controllability matrix [A^{L−1}B, …, AB, B]  (n × mL).
Mat extended_controllability(const Mat& A, const Mat& B, int L);

/// Checks the depth-L identifiability conditions: extended observability
/// and extended controllability at depth L both have rank n.
struct AssumptionReport {
  bool observable = false;
  bool controllable = false;
  bool ok() const { return observable && controllable; }
};
AssumptionReport check_assumption_dims(const LtiModel& model, int L);

/// Smallest depth L ≤ n at which check_assumption_dims passes; throws
/// Error when the model is not minimal.
int minimal_window_length(const LtiModel& model);

/// Write `t,x1..xn,u1..um,y1..yp` rows (x of the same step, terminal state
/// dropped). Values use max-precision %.17g so a read-back is exact.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

/// Read a trajectory CSV. Accepts both the full header and the x-less
/// `t,u1..um,y1..yp` form used by offline input–output data.
struct CsvData {
  Mat x_seq;  ///< n × T, empty when the file has no state columns
  Mat u_seq;  ///< m × T
  Mat y_seq;  ///< p × T
  int t0 = 0;
};
CsvData read_trajectory_csv(const std::string& path);

}  // namespace stochpc
