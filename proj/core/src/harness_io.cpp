#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stochpc/harness.hpp"

namespace stochpc::harness {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError("config field '" + where + "': " + what);
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  return j;
}

Mat mat_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(where, "expected a non-empty array of rows");
  const auto& first = j.front();
  if (!first.is_array() || first.empty())
    fail(where, "rows must be non-empty arrays");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(first.size());
  Mat M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      fail(where, "rows must all have the same length");
    for (Eigen::Index k = 0; k < cols; ++k) {
      const auto& v = row[static_cast<std::size_t>(k)];
      if (!v.is_number()) fail(where, "entries must be numbers");
      M(i, k) = v.get<double>();
    }
  }
  return M;
}

Vec vec_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto& e = j[static_cast<std::size_t>(i)];
    if (!e.is_number()) fail(where, "entries must be numbers");
    v(i) = e.get<double>();
  }
  return v;
}

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <typename T>
T scalar_from(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(key, e.what());
  }
}

// Identity-per-channel two-sided rows |z_i| ≤ bound.
void default_box(int dim, double bound, Mat& E, Vec& f) {
  E = Mat::Zero(2 * dim, dim);
  for (int i = 0; i < dim; ++i) {
    E(2 * i, i) = 1.0;
    E(2 * i + 1, i) = -1.0;
  }
  f = Vec::Constant(2 * dim, bound);
}

LtiModel plant_from_json(const json& root) {
  if (root.contains("plant")) {
    const json& j = root.at("plant");
    if (!j.is_object()) fail("plant", "expected an object");
    for (const char* key : {"A", "B", "C", "Sigma_w", "Sigma_v"})
      if (!j.contains(key)) fail(std::string("plant.") + key, "missing");
    LtiModel model;
    model.A = mat_from_json(j.at("A"), "plant.A");
    model.B = mat_from_json(j.at("B"), "plant.B");
    model.C = mat_from_json(j.at("C"), "plant.C");
    model.Sigma_w = mat_from_json(j.at("Sigma_w"), "plant.Sigma_w");
    model.Sigma_v = mat_from_json(j.at("Sigma_v"), "plant.Sigma_v");
    return model;
  }
  if (root.contains("plant_random")) {
    const json& j = root.at("plant_random");
    if (!j.is_object()) fail("plant_random", "expected an object");
    const int n = scalar_from<int>(j, "n", 2);
    const int m = scalar_from<int>(j, "m", 1);
    const int p = scalar_from<int>(j, "p", 1);
    const auto seed = scalar_from<std::uint64_t>(j, "seed", 0);
    return random_minimal_system(n, m, p, seed);
  }
  throw ConfigError("config needs either 'plant' or 'plant_random'");
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.name = scalar_from<std::string>(j, "name", "experiment");
  cfg.plant = plant_from_json(j);
  const int n = cfg.plant.n(), m = cfg.plant.m(), p = cfg.plant.p();

  cfg.controller = controller_kind_from_string(
      scalar_from<std::string>(j, "controller", "smpc"));
  cfg.seed = scalar_from<std::uint64_t>(j, "seed", 0);
  cfg.steps = scalar_from<int>(j, "steps", 50);

  if (j.contains("horizon")) {
    const json& h = j.at("horizon");
    cfg.horizon.L = scalar_from<int>(h, "L", 10);
    cfg.horizon.N = scalar_from<int>(h, "N", 30);
    cfg.horizon.N_c = scalar_from<int>(h, "N_c", 10);
  } else {
    cfg.horizon = {10, 30, 10};
  }

  if (j.contains("constraints")) {
    const json& c = j.at("constraints");
    if (c.contains("E_u")) cfg.constraints.E_u = mat_from_json(c.at("E_u"), "constraints.E_u");
    if (c.contains("f_u")) cfg.constraints.f_u = vec_from_json(c.at("f_u"), "constraints.f_u");
    if (c.contains("E_y")) cfg.constraints.E_y = mat_from_json(c.at("E_y"), "constraints.E_y");
    if (c.contains("f_y")) cfg.constraints.f_y = vec_from_json(c.at("f_y"), "constraints.f_y");
    if (c.contains("E_u") != c.contains("f_u"))
      fail("constraints", "E_u and f_u must be given together");
    if (c.contains("E_y") != c.contains("f_y"))
      fail("constraints", "E_y and f_y must be given together");
    if (!c.contains("E_u") && c.contains("input_bound"))
      default_box(m, scalar_from<double>(c, "input_bound", 0.6),
                  cfg.constraints.E_u, cfg.constraints.f_u);
    if (!c.contains("E_y") && c.contains("output_bound"))
      default_box(p, scalar_from<double>(c, "output_bound", 0.4),
                  cfg.constraints.E_y, cfg.constraints.f_y);
    cfg.constraints.p_u = scalar_from<double>(c, "p_u", 0.2);
    cfg.constraints.p_y = scalar_from<double>(c, "p_y", 0.2);
  } else {
    default_box(m, 0.6, cfg.constraints.E_u, cfg.constraints.f_u);
    default_box(p, 0.4, cfg.constraints.E_y, cfg.constraints.f_y);
    cfg.constraints.p_u = 0.2;
    cfg.constraints.p_y = 0.2;
  }

  if (j.contains("weights")) {
    const json& w = j.at("weights");
    cfg.weights.Q = w.contains("Q") ? mat_from_json(w.at("Q"), "weights.Q")
                                    : Mat(1e4 * Mat::Identity(p, p));
    cfg.weights.R = w.contains("R") ? mat_from_json(w.at("R"), "weights.R")
                                    : Mat(Mat::Identity(m, m));
  } else {
    cfg.weights.Q = 1e4 * Mat::Identity(p, p);
    cfg.weights.R = Mat::Identity(m, m);
  }

  if (j.contains("references")) {
    const json& refs = j.at("references");
    if (!refs.is_array()) fail("references", "expected an array");
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const json& piece = refs[i];
      ReferenceSchedule::Piece out;
      out.start_t = scalar_from<int>(piece, "start_t", 0);
      if (!piece.contains("value")) fail("references.value", "missing");
      out.value = vec_from_json(piece.at("value"), "references.value");
      cfg.refs.pieces.push_back(std::move(out));
    }
  }

  if (j.contains("prior")) {
    const json& pr = j.at("prior");
    if (!pr.contains("mean") || !pr.contains("cov"))
      fail("prior", "needs 'mean' and 'cov'");
    cfg.prior.mu = vec_from_json(pr.at("mean"), "prior.mean");
    cfg.prior.Sigma = mat_from_json(pr.at("cov"), "prior.cov");
  } else {
    cfg.prior.mu = Vec::Zero(n);
    cfg.prior.Sigma = Mat::Identity(n, n);
  }

  if (j.contains("warmup_inputs"))
    cfg.warmup_inputs = mat_from_json(j.at("warmup_inputs"), "warmup_inputs");

  if (j.contains("ira")) {
    const json& ira = j.at("ira");
    cfg.ira.alpha = scalar_from<double>(ira, "alpha", cfg.ira.alpha);
    cfg.ira.eps = scalar_from<double>(ira, "eps", cfg.ira.eps);
    cfg.ira.max_outer = scalar_from<int>(ira, "max_outer", cfg.ira.max_outer);
  }
  if (j.contains("qp")) {
    const json& qp = j.at("qp");
    cfg.qp.eps_abs = scalar_from<double>(qp, "eps_abs", cfg.qp.eps_abs);
    cfg.qp.eps_rel = scalar_from<double>(qp, "eps_rel", cfg.qp.eps_rel);
    cfg.qp.max_iter = scalar_from<int>(qp, "max_iter", cfg.qp.max_iter);
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    if (d.contains("csv")) {
      cfg.data_source.csv_path = d.at("csv").get<std::string>();
    } else {
      cfg.data_source.length = scalar_from<int>(d, "length", 400);
      cfg.data_source.input_scale = scalar_from<double>(d, "input_scale", 1.0);
      cfg.data_source.noise_free = scalar_from<bool>(d, "noise_free", false);
      cfg.data_source.seed = scalar_from<std::uint64_t>(d, "seed", 12345);
    }
  }

  if (j.contains("sigma_rho")) {
    const json& s = j.at("sigma_rho");
    const int pl = p * cfg.horizon.L;
    if (s.is_number())
      cfg.Sigma_rho = s.get<double>() * Mat::Identity(pl, pl);
    else
      cfg.Sigma_rho = mat_from_json(s, "sigma_rho");
  }
  if (j.contains("aux_prior")) {
    const json& pr = j.at("aux_prior");
    if (!pr.contains("mean") || !pr.contains("cov"))
      fail("aux_prior", "needs 'mean' and 'cov'");
    GaussianBelief b;
    b.mu = vec_from_json(pr.at("mean"), "aux_prior.mean");
    b.Sigma = mat_from_json(pr.at("cov"), "aux_prior.cov");
    cfg.aux_prior = std::move(b);
  }
  if (j.contains("tikhonov_lambda") && !j.at("tikhonov_lambda").is_null())
    cfg.tikhonov_lambda = j.at("tikhonov_lambda").get<double>();
  cfg.lambda_y = scalar_from<double>(j, "lambda_y", cfg.lambda_y);
  cfg.lambda_g = scalar_from<double>(j, "lambda_g", cfg.lambda_g);
  cfg.lambda = scalar_from<double>(j, "lambda", cfg.lambda);

  if (j.contains("mc")) {
    const json& mc = j.at("mc");
    cfg.mc_samples = scalar_from<int>(mc, "samples", cfg.mc_samples);
    cfg.mc_z_threshold =
        scalar_from<double>(mc, "z_threshold", cfg.mc_z_threshold);
  }

  cfg.validate();
  return cfg;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_from_json(load_json_file(path));
}

std::vector<ExperimentConfig> load_compare_configs(const std::string& path) {
  const json root = load_json_file(path);
  if (!root.contains("controllers"))
    throw ConfigError("compare config needs a 'controllers' array");
  const json& list = root.at("controllers");
  if (!list.is_array() || list.empty())
    fail("controllers", "expected a non-empty array");

  json base = root;
  base.erase("controllers");

  std::vector<ExperimentConfig> cfgs;
  for (std::size_t i = 0; i < list.size(); ++i) {
    json merged = base;
    const json& entry = list[i];
    if (entry.is_string()) {
      merged["controller"] = entry.get<std::string>();
      merged["name"] = entry.get<std::string>();
    } else if (entry.is_object()) {
      merged.update(entry);
      if (!entry.contains("name") && entry.contains("controller"))
        merged["name"] = entry.at("controller");
    } else {
      fail("controllers", "entries must be names or objects");
    }
    cfgs.push_back(experiment_from_json(merged));
  }
  return cfgs;
}

EquivalenceConfig load_equivalence_config(const std::string& path) {
  const json j = load_json_file(path);
  EquivalenceConfig cfg;
  if (j.contains("plant")) cfg.plant = plant_from_json(j);
  cfg.systems = scalar_from<int>(j, "systems", cfg.systems);
  cfg.max_n = scalar_from<int>(j, "max_n", cfg.max_n);
  cfg.max_m = scalar_from<int>(j, "max_m", cfg.max_m);
  cfg.max_p = scalar_from<int>(j, "max_p", cfg.max_p);
  cfg.N = scalar_from<int>(j, "N", cfg.N);
  cfg.N_c = scalar_from<int>(j, "N_c", cfg.N_c);
  cfg.control_steps = scalar_from<int>(j, "control_steps", cfg.control_steps);
  cfg.seed = scalar_from<std::uint64_t>(j, "seed", cfg.seed);
  cfg.tolerance = scalar_from<double>(j, "tolerance", cfg.tolerance);
  cfg.input_bound = scalar_from<double>(j, "input_bound", cfg.input_bound);
  cfg.output_bound = scalar_from<double>(j, "output_bound", cfg.output_bound);
  cfg.risk_u = scalar_from<double>(j, "risk_u", cfg.risk_u);
  cfg.risk_y = scalar_from<double>(j, "risk_y", cfg.risk_y);
  cfg.window_length = scalar_from<int>(j, "window_length", cfg.window_length);
  if (j.contains("sigma_rho_override"))
    cfg.Sigma_rho_override =
        mat_from_json(j.at("sigma_rho_override"), "sigma_rho_override");
  cfg.validate();
  return cfg;
}

std::string report_to_json(const RunReport& report) {
  json j;
  j["name"] = report.name;
  j["controller"] = report.controller;
  j["seed"] = report.seed;
  j["steps"] = report.steps;
  j["cumulative_cost"] = report.cumulative_cost;
  j["violation_rate_u"] = report.violation_rate_u;
  j["violation_amount_u"] = report.violation_amount_u;
  j["violation_rate_y"] = report.violation_rate_y;
  j["violation_amount_y"] = report.violation_amount_y;
  j["held_plans"] = report.held_plans;
  json plans = json::array();
  for (const auto& plan : report.plans) {
    json pj;
    pj["k"] = plan.k;
    pj["qp_solves"] = plan.qp_solves;
    pj["cost"] = plan.cost;
    pj["infeasible"] = plan.infeasible;
    pj["held"] = plan.held;
    plans.push_back(std::move(pj));
  }
  j["plans"] = std::move(plans);
  json records = json::array();
  for (const auto& rec : report.records) {
    json rj;
    rj["t"] = rec.t;
    rj["u"] = vec_to_json(rec.u);
    rj["y"] = vec_to_json(rec.y);
    rj["r"] = vec_to_json(rec.r);
    rj["stage_cost"] = rec.stage_cost;
    rj["violation_u"] = vec_to_json(rec.violation_u);
    rj["violation_y"] = vec_to_json(rec.violation_y);
    records.push_back(std::move(rj));
  }
  j["records"] = std::move(records);
  return j.dump(2) + "\n";
}

std::string report_to_json(const EquivalenceReport& report) {
  json j;
  j["pass"] = report.pass;
  j["tolerance"] = report.tolerance;
  j["max_deviation"] = report.max_deviation;
  j["max_nominal_deviation"] = report.max_nominal_deviation;
  json systems = json::array();
  for (const auto& res : report.systems) {
    json sj;
    sj["index"] = res.index;
    sj["n"] = res.n;
    sj["m"] = res.m;
    sj["p"] = res.p;
    sj["L"] = res.L;
    sj["trajectory_deviation"] = res.trajectory_deviation;
    sj["nominal_input_deviation"] = res.nominal_input_deviation;
    sj["held_plans"] = res.held_plans;
    sj["diagnostic"] = res.diagnostic;
    systems.push_back(std::move(sj));
  }
  j["systems"] = std::move(systems);
  return j.dump(2) + "\n";
}

std::string report_to_json(const McReport& report) {
  json j;
  j["pass"] = report.pass;
  j["samples"] = report.samples;
  j["horizon"] = report.horizon;
  j["threshold"] = report.threshold;
  j["max_z"] = report.max_z;
  j["max_z_mean_u"] = report.max_z_mean_u;
  j["max_z_cov_u"] = report.max_z_cov_u;
  j["max_z_mean_y"] = report.max_z_mean_y;
  j["max_z_cov_y"] = report.max_z_cov_y;
  return j.dump(2) + "\n";
}

std::string table_to_csv(const ComparisonTable& table) {
  std::ostringstream out;
  out << "controller,name,cumulative_cost,violation_rate_u,"
         "violation_amount_u,violation_rate_y,violation_amount_y,held_plans\n";
  for (const auto& row : table.rows) {
    out << row.controller << ',' << row.name << ','
        << format_double(row.cumulative_cost) << ','
        << format_double(row.violation_rate_u) << ','
        << format_double(row.violation_amount_u) << ','
        << format_double(row.violation_rate_y) << ','
        << format_double(row.violation_amount_y) << ',' << row.held_plans
        << '\n';
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_text_file: cannot open " + path);
  out << content;
  if (!out) throw Error("write_text_file: write failed for " + path);
}

}  // namespace stochpc::harness
