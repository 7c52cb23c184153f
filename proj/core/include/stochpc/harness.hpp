#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stochpc/controllers.hpp"
#include "stochpc/plant.hpp"
#include "stochpc/types.hpp"

/// Experiment front end: JSON-configured seeded closed-loop runs, the
/// model-based vs data-driven equivalence checker, Monte-Carlo validation
/// of the predicted input/output distributions, multi-controller
/// comparisons on shared noise, and offline data collection. Everything is
/// deterministic given the configured seed; reports never contain wall
/// times or other run-dependent values.
namespace stochpc::harness {

enum class ControllerKind { Smpc, Sddpc, Mpc, Deepc, Spc };

std::string to_string(ControllerKind kind);
ControllerKind controller_kind_from_string(const std::string& name);

/// Where a data-driven controller's offline trajectory comes from: a CSV
/// on disk, or fresh excitation of the configured plant (i.i.d. normal
/// inputs scaled by input_scale, simulated with or without noise).
struct DataSource {
  std::optional<std::string> csv_path;
  int length = 400;
  double input_scale = 1.0;
  bool noise_free = false;
  std::uint64_t seed = 12345;
};

/// Full description of one closed-loop experiment.
struct ExperimentConfig {
  std::string name = "experiment";
  ControllerKind controller = ControllerKind::Smpc;
  LtiModel plant;
  HorizonConfig horizon;
  PolytopeSpec constraints;
  CostWeights weights;
  ReferenceSchedule refs;
  GaussianBelief prior;  ///< plant-state prior; also the x0 distribution
  int steps = 0;         ///< controlled steps
  std::uint64_t seed = 0;
  Mat warmup_inputs;  ///< m × T_w inputs applied before control starts

  IraOptions ira;
  QpOptions qp;

  // Data-driven settings (ignored by model-based controllers).
  DataSource data_source;
  Mat Sigma_rho;  ///< pL × pL; empty selects the 1e-4·I default
  std::optional<GaussianBelief> aux_prior;  ///< default: N(0, I)
  std::optional<double> tikhonov_lambda;    ///< ridge recovery when set
  double lambda_y = 1e6;  ///< output-slack weight (DeePC)
  double lambda_g = 1e3;  ///< preimage-norm weight (DeePC)
  double lambda = 1e-3;   ///< predictor ridge (SPC); 0 = pseudoinverse

  // Monte-Carlo validation settings.
  int mc_samples = 100000;
  double mc_z_threshold = 4.0;

  /// Throws ConfigError on any inconsistency.
  void validate() const;
};

/// One logged closed-loop step.
struct StepRecord {
  int t = 0;
  Vec u, y, r;
  double stage_cost = 0;  ///< ‖y − r‖²_Q + ‖u‖²_R
  Vec violation_u;        ///< per input row: max(0, e_iᵀu − f_i)
  Vec violation_y;        ///< per output row
};

/// One logged planning event.
struct PlanRecord {
  int k = 0;
  int qp_solves = 0;
  double cost = 0;  ///< NaN when the plan was held
  bool infeasible = false;
  bool held = false;
};

struct RunReport {
  std::string name;
  std::string controller;
  std::uint64_t seed = 0;
  int steps = 0;
  std::vector<StepRecord> records;
  std::vector<PlanRecord> plans;
  double cumulative_cost = 0;
  double violation_rate_u = 0;    ///< violating (t, row) pairs / (T·q_u)
  double violation_rate_y = 0;
  double violation_amount_u = 0;  ///< Σ_t Σ_i max(0, e_iᵀu_t − f_i)
  double violation_amount_y = 0;
  int held_plans = 0;
  double wall_time_s = 0;  ///< measured, intentionally never serialized
  Trajectory trajectory;   ///< warmup + controlled segment, t0 = −T_w
};

/// Load or generate the offline data a data-driven controller trains on.
OfflineData collect_offline_data(const LtiModel& plant, const DataSource& src);

/// Instantiate the configured controller (collects offline data when the
/// controller is data-driven and `data` is null).
std::unique_ptr<Controller> build_controller(const ExperimentConfig& cfg,
                                             const OfflineData* data = nullptr);

/// Run the configured experiment with noise and x0 drawn from cfg.seed.
RunReport run_experiment(const ExperimentConfig& cfg);

/// Same, against caller-provided initial state and noise (shared-noise
/// comparisons and twin runs). noise must cover warmup + controlled steps.
RunReport run_experiment_with_noise(const ExperimentConfig& cfg, const Vec& x0,
                                    const NoiseRealization& noise);

/// Random minimal LTI plant: A entries i.i.d. normal rescaled to a random
/// spectral radius in [0.5, 0.9], dense B and C, Σ_w = SSᵀ from a random
/// factor, Σ_v = 1e-8·I; resamples until depth-n observability and
/// controllability both hold. Minimal ⇒ stabilizable and detectable.
LtiModel random_minimal_system(int n, int m, int p, std::uint64_t seed);

/// Configuration of the model-based vs data-driven twin comparison.
struct EquivalenceConfig {
  std::optional<LtiModel> plant;  ///< explicit system; else a random batch
  int systems = 10;               ///< batch size when plant is not given
  int max_n = 4, max_m = 2, max_p = 2;
  int N = 6;
  int N_c = 2;
  int control_steps = 4;  ///< planning cycles; total steps = N_c · cycles
  std::uint64_t seed = 0;
  double tolerance = 1e-6;
  double input_bound = 5.0;   ///< per-channel box bound on inputs
  double output_bound = 5.0;  ///< per-channel |y_i| bound
  double risk_u = 0.2, risk_y = 0.2;
  int window_length = 0;  ///< 0 = per-system minimal; else used as-is
  std::optional<Mat> Sigma_rho_override;  ///< sensitivity-check hook

  void validate() const;
};

struct EquivalenceSystemResult {
  int index = 0;
  int n = 0, m = 0, p = 0, L = 0;
  double trajectory_deviation = 0;     ///< max over x,u,y of the rel gap
  double nominal_input_deviation = 0;  ///< first-plan u_nom gap
  int held_plans = 0;
  std::string diagnostic;  ///< nonempty when an assumption check failed
};

struct EquivalenceReport {
  std::vector<EquivalenceSystemResult> systems;
  double max_deviation = 0;
  double max_nominal_deviation = 0;
  double tolerance = 0;
  bool pass = false;
};

/// Twin experiment: generate noise-free persistently exciting data from
/// the plant, match the data-driven controller's noise-response covariance
/// and prior to the plant's, then run the model-based and the data-driven
/// stochastic controllers against one shared noise realization and report
/// the worst relative deviation between the two closed-loop trajectories.
EquivalenceReport equivalence_check(const EquivalenceConfig& cfg);

/// Monte-Carlo check of the predicted closed-loop distributions.
struct McReport {
  int samples = 0;
  int horizon = 0;
  double max_z_mean_u = 0, max_z_cov_u = 0;
  double max_z_mean_y = 0, max_z_cov_y = 0;
  double max_z = 0;
  double threshold = 4.0;
  bool pass = false;
};

/// Freeze the first planning step's policy (nominal plan, feedback gain,
/// filter gains and predicted input/output variances), replay `samples`
/// independent noise and initial-state draws through the plant, the filter
/// and the affine policy, and compare empirical means and covariances of
/// (u_t, y_t) against the predictions. z-scores are deviations divided by
/// the CLT standard error; pass ⇔ max z ≤ threshold.
McReport mc_validate_distribution(const ExperimentConfig& cfg, int samples,
                                  double z_threshold = 4.0);

/// One row of the controller comparison table.
struct ComparisonRow {
  std::string name;
  std::string controller;
  double cumulative_cost = 0;
  double violation_rate_u = 0;
  double violation_amount_u = 0;
  double violation_rate_y = 0;
  double violation_amount_y = 0;
  int held_plans = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

/// Run every config against ONE shared noise realization and initial
/// state (drawn from the first config's seed and prior); all configs must
/// agree on plant dimensions, step count and warmup length.
ComparisonTable compare_controllers(const std::vector<ExperimentConfig>& cfgs);

// --- JSON / CSV I/O (implemented in harness_io) ---------------------------

/// Parse an experiment config from a JSON file. Throws ConfigError with a
/// field-path message on malformed input.
ExperimentConfig load_experiment_config(const std::string& path);

/// Parse a comparison config: a shared experiment config plus a
/// "controllers" array; each entry either a controller name or an object
/// of per-controller overrides.
std::vector<ExperimentConfig> load_compare_configs(const std::string& path);

/// Parse an equivalence-check config.
EquivalenceConfig load_equivalence_config(const std::string& path);

std::string report_to_json(const RunReport& report);
std::string report_to_json(const EquivalenceReport& report);
std::string report_to_json(const McReport& report);
std::string table_to_csv(const ComparisonTable& table);

/// Write a whole text file (parent directory must exist).
void write_text_file(const std::string& path, const std::string& content);

}  // namespace stochpc::harness
