#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "stochpc/chance.hpp"
#include "stochpc/datadriven.hpp"
#include "stochpc/estimation.hpp"
#include "stochpc/plant.hpp"
#include "stochpc/types.hpp"

/// Receding-horizon controllers: stochastic output-feedback predictive
/// control (model-based and data-driven), a deterministic MPC baseline,
/// and the trajectory-space benchmarks DeePC and SPC. All controllers are
/// measurement-feedback callables (t, y_t) → u_t.
namespace stochpc {

/// Horizon bundle: estimation window L, prediction horizon N, control
/// horizon N_c (re-plan every N_c steps, 1 ≤ N_c ≤ N).
struct HorizonConfig {
  int L = 1;
  int N = 1;
  int N_c = 1;
  void validate() const;
};

/// Quadratic tracking cost Σ ‖y − r‖²_Q + ‖u‖²_R (Q PSD, R PD).
struct CostWeights {
  Mat Q;
  Mat R;
};

/// Piecewise-constant reference: value of the piece with the largest
/// start_t ≤ t; zero before the first piece (and everywhere when empty).
struct ReferenceSchedule {
  struct Piece {
    int start_t = 0;
    Vec value;
  };
  std::vector<Piece> pieces;
  Vec at(int t, int p) const;
  /// p × N window of references for times t0 … t0+N−1.
  Mat window(int t0, int N, int p) const;
};

/// One committed plan: nominal inputs/states over the horizon, the fixed
/// feedback gain, and the Kalman gains for the execution segment.
struct PolicySchedule {
  int k0 = 0;             ///< plan start time
  Mat u_nom;              ///< m × N
  Mat x_nom;              ///< n × (N+1)
  Mat K;                  ///< m × n feedback gain (zero for MPC)
  std::vector<Mat> gains; ///< measurement-update gains, relative steps 0..N−1
};

/// Everything a planning step exposes to observers.
struct ControlStepInfo {
  int k = 0;             ///< plan start time
  int qp_solves = 0;     ///< QP solves in this planning step
  double cost = 0;       ///< planned nominal cost (NaN when the plan is held)
  bool infeasible = false;  ///< planning failed at this step
  bool held_plan = false;   ///< executing a shifted/padded previous plan
  PolicySchedule schedule;  ///< the committed plan
  GaussianBelief belief;    ///< belief the plan was computed from
};

/// Current estimator/plan state of a receding-horizon controller.
struct ControllerState {
  GaussianBelief belief;   ///< belief for the next planning step
  PolicySchedule schedule; ///< active plan
  int plan_time = 0;       ///< next time a plan will be computed
};

/// Measurement-feedback controller interface. operator() must be called
/// with consecutive t starting at 0.
class Controller {
 public:
  virtual ~Controller() = default;
  Vec operator()(int t, const Vec& y);
  void set_control_step_hook(std::function<void(const ControlStepInfo&)> h) {
    hook_ = std::move(h);
  }
  virtual int input_dim() const = 0;
  /// Estimator-based controllers expose their internal state; trajectory-
  /// space controllers return nullptr.
  virtual const ControllerState* state() const { return nullptr; }
  /// Offer pre-control input–output history, one column per step, oldest
  /// first (e.g. a warmup segment). Must be called before the first
  /// control step. Estimator-based controllers refine their belief with
  /// filter updates; trajectory-space controllers prime their history
  /// windows; the default ignores it.
  virtual void observe_history(const Mat& u_past, const Mat& y_past);

 protected:
  virtual Vec control(int t, const Vec& y) = 0;
  void notify(const ControlStepInfo& info) const {
    if (hook_) hook_(info);
  }

 private:
  std::function<void(const ControlStepInfo&)> hook_;
  int next_t_ = 0;
};

/// Stochastic predictive controller on an explicit model: fixed DARE gain,
/// finite-horizon Kalman schedule, joint-covariance tightening, IRA-solved
/// nominal plan, affine policy execution, belief handoff every N_c steps.
struct SmpcParams {
  LtiModel model;
  HorizonConfig horizon;
  PolytopeSpec constraints;
  CostWeights weights;
  ReferenceSchedule refs;
  GaussianBelief prior;
  IraOptions ira;
  QpOptions qp;
};
std::unique_ptr<Controller> make_smpc_controller(const SmpcParams& params);

/// Data-driven stochastic predictive controller: recovers the predictor
/// matrices from offline data, assembles the auxiliary model, and runs the
/// identical receding-horizon loop against it. The prior lives in the
/// auxiliary state space (dimension mL + pL + pL²).
struct SddpcParams {
  OfflineData data;
  HorizonConfig horizon;
  PolytopeSpec constraints;
  CostWeights weights;
  ReferenceSchedule refs;
  Mat Sigma_rho;  ///< pL × pL noise-response covariance
  Mat Sigma_v;    ///< p × p measurement noise covariance
  GaussianBelief aux_prior;
  std::optional<double> tikhonov_lambda;  ///< ridge recovery when set
  IraOptions ira;
  QpOptions qp;
};
std::unique_ptr<Controller> make_sddpc_controller(const SddpcParams& params);

/// Deterministic MPC baseline: certainty-equivalent plan on the Kalman
/// mean, hard constraints (no tightening), open-loop execution of the
/// first N_c inputs, same belief handoff.
struct MpcParams {
  LtiModel model;
  HorizonConfig horizon;  ///< L unused
  PolytopeSpec constraints;
  CostWeights weights;
  ReferenceSchedule refs;
  GaussianBelief prior;
  QpOptions qp;
};
std::unique_ptr<Controller> make_mpc_controller(const MpcParams& params);

/// Data-enabled predictive control benchmark: optimizes over Hankel-
/// trajectory preimages with slack on the output history (weight lambda_y)
/// and Tikhonov weight lambda_g on the preimage, hard constraints.
struct DeepcParams {
  OfflineData data;
  HorizonConfig horizon;
  PolytopeSpec constraints;
  CostWeights weights;
  ReferenceSchedule refs;
  double lambda_y = 1e6;
  double lambda_g = 1e3;
  QpOptions qp;
};
std::unique_ptr<Controller> make_deepc_controller(const DeepcParams& params);

/// Subspace predictive control benchmark: precomputed least-squares
/// multi-step predictor (ridge parameter lambda), QP over future inputs,
/// hard constraints.
struct SpcParams {
  OfflineData data;
  HorizonConfig horizon;
  PolytopeSpec constraints;
  CostWeights weights;
  ReferenceSchedule refs;
  double lambda = 1e-3;  ///< 0 selects the exact pseudoinverse predictor
  QpOptions qp;
};
std::unique_ptr<Controller> make_spc_controller(const SpcParams& params);

}  // namespace stochpc
