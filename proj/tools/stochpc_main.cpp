// stochpc — stochastic predictive control experiment runner.
//
// Subcommands:
//   run           closed-loop experiment → trajectory.csv + report.json
//   equivalence   model-based vs data-driven twin check → equivalence.json
//   mc-validate   Monte-Carlo check of predicted distributions → mc_report.json
//   compare       shared-noise controller comparison → comparison.csv
//   collect-data  offline input–output data generation → offline_data.csv
//
// Exit codes: 0 success, 2 configuration/validation failure, 3 statistical
// or equivalence check failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stochpc/harness.hpp"

namespace {

namespace fs = std::filesystem;
using namespace stochpc;
using namespace stochpc::harness;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCheckFailed = 3;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file")
      ->required();
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--out", args.out_dir, "output directory (created)");
}

std::string out_path(const CommonArgs& args, const std::string& file) {
  fs::create_directories(args.out_dir);
  return (fs::path(args.out_dir) / file).string();
}

int cmd_run(const CommonArgs& args) {
  ExperimentConfig cfg = load_experiment_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  const RunReport report = run_experiment(cfg);
  write_trajectory_csv(report.trajectory, out_path(args, "trajectory.csv"));
  write_text_file(out_path(args, "report.json"), report_to_json(report));
  std::cout << "run: " << report.steps << " steps, cumulative cost "
            << report.cumulative_cost << ", held plans " << report.held_plans
            << "\n";
  return kExitOk;
}

int cmd_equivalence(const CommonArgs& args) {
  EquivalenceConfig cfg = load_equivalence_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  const EquivalenceReport report = equivalence_check(cfg);
  write_text_file(out_path(args, "equivalence.json"), report_to_json(report));
  std::cout << "equivalence: max deviation " << report.max_deviation
            << " (tolerance " << report.tolerance << ") over "
            << report.systems.size() << " system(s) → "
            << (report.pass ? "pass" : "FAIL") << "\n";
  for (const auto& res : report.systems)
    if (!res.diagnostic.empty())
      std::cerr << "  system " << res.index << ": " << res.diagnostic << "\n";
  return report.pass ? kExitOk : kExitCheckFailed;
}

int cmd_mc_validate(const CommonArgs& args) {
  ExperimentConfig cfg = load_experiment_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  const McReport report =
      mc_validate_distribution(cfg, cfg.mc_samples, cfg.mc_z_threshold);
  write_text_file(out_path(args, "mc_report.json"), report_to_json(report));
  std::cout << "mc-validate: max z " << report.max_z << " (threshold "
            << report.threshold << ", " << report.samples << " samples) → "
            << (report.pass ? "pass" : "FAIL") << "\n";
  return report.pass ? kExitOk : kExitCheckFailed;
}

int cmd_compare(const CommonArgs& args) {
  std::vector<ExperimentConfig> cfgs = load_compare_configs(args.config_path);
  if (args.seed)
    for (auto& cfg : cfgs) cfg.seed = *args.seed;
  const ComparisonTable table = compare_controllers(cfgs);
  write_text_file(out_path(args, "comparison.csv"), table_to_csv(table));
  std::cout << table_to_csv(table);
  return kExitOk;
}

int cmd_collect_data(const CommonArgs& args) {
  ExperimentConfig cfg = load_experiment_config(args.config_path);
  if (args.seed) cfg.data_source.seed = *args.seed;
  const OfflineData data = collect_offline_data(cfg.plant, cfg.data_source);
  Trajectory traj;
  traj.x_seq = Mat::Zero(0, data.T_d() + 1);
  traj.u_seq = data.u_d;
  traj.y_seq = data.y_d;
  traj.t0 = 0;
  write_trajectory_csv(traj, out_path(args, "offline_data.csv"));
  std::cout << "collect-data: " << data.T_d() << " samples written\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic predictive control toolkit"};
  app.require_subcommand(1);

  CommonArgs run_args, eq_args, mc_args, cmp_args, data_args;
  CLI::App* run = app.add_subcommand("run", "closed-loop experiment");
  add_common(run, run_args);
  CLI::App* eq = app.add_subcommand(
      "equivalence", "model-based vs data-driven twin check");
  add_common(eq, eq_args);
  CLI::App* mc = app.add_subcommand(
      "mc-validate", "Monte-Carlo check of the predicted distributions");
  add_common(mc, mc_args);
  CLI::App* cmp =
      app.add_subcommand("compare", "shared-noise controller comparison");
  add_common(cmp, cmp_args);
  CLI::App* dat =
      app.add_subcommand("collect-data", "offline data generation");
  add_common(dat, data_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(run_args);
    if (eq->parsed()) return cmd_equivalence(eq_args);
    if (mc->parsed()) return cmd_mc_validate(mc_args);
    if (cmp->parsed()) return cmd_compare(cmp_args);
    if (dat->parsed()) return cmd_collect_data(data_args);
  } catch (const stochpc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
