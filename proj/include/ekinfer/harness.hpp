#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ekinfer/eki.hpp"
#include "ekinfer/filters.hpp"
#include "ekinfer/io.hpp"
#include "ekinfer/models.hpp"
#include "ekinfer/predictive.hpp"
#include "ekinfer/quadrature.hpp"
#include "ekinfer/sloppiness.hpp"
#include "ekinfer/tempersmc.hpp"

namespace ekinfer {

inline constexpr int kSchemaVersion = 1;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_keys(const json& obj, const std::set<std::string>& allowed,
                       const std::string& context) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + context);
}

inline Matrix json_matrix(const json& j, const std::string& context) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ConfigError(context + " must be a 2-D array");
  int rows = static_cast<int>(j.size());
  int cols = static_cast<int>(j[0].size());
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols) throw ConfigError(context + " is ragged");
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline Vector json_vector(const json& j, const std::string& context) {
  if (!j.is_array()) throw ConfigError(context + " must be an array");
  Vector v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace detail

struct ExperimentConfig {
  json model_spec;
  std::string method;
  int N = 1000;
  double ess_target = 0.5;
  int M_noise = 1000;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = ".";
  std::string transform = "none";            // eki parameter transform
  std::string enkf_variant = "perturbed_obs";
  std::string weight_formula = "tempered_ratio";
};

inline const std::set<std::string>& valid_methods() {
  static const std::set<std::string> m = {"smc", "ieki", "cw-ieki", "enkf", "pf", "kalman"};
  return m;
}

inline bool is_filter_method(const std::string& method) {
  return method == "enkf" || method == "pf" || method == "kalman";
}

inline ExperimentConfig parse_experiment_config(const json& j) {
  detail::check_keys(j,
                     {"schema_version", "model", "method", "N", "ess_target", "M_noise", "seed",
                      "output_dir", "transform", "enkf_variant", "weight_formula"},
                     "experiment config");
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != kSchemaVersion)
    throw ConfigError("missing or unsupported schema_version (expected " +
                      std::to_string(kSchemaVersion) + ")");
  if (!j.contains("model") || !j.contains("method"))
    throw ConfigError("config requires 'model' and 'method'");

  ExperimentConfig cfg;
  cfg.model_spec = j["model"];
  cfg.method = j["method"].get<std::string>();
  if (!valid_methods().count(cfg.method)) {
    std::string opts;
    for (const auto& m : valid_methods()) opts += (opts.empty() ? "" : ", ") + m;
    throw ConfigError("unknown method '" + cfg.method + "'; valid options: " + opts);
  }
  if (j.contains("N")) cfg.N = j["N"].get<int>();
  if (j.contains("ess_target")) cfg.ess_target = j["ess_target"].get<double>();
  if (j.contains("M_noise")) cfg.M_noise = j["M_noise"].get<int>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("transform")) cfg.transform = j["transform"].get<std::string>();
  if (j.contains("enkf_variant")) cfg.enkf_variant = j["enkf_variant"].get<std::string>();
  if (j.contains("weight_formula")) cfg.weight_formula = j["weight_formula"].get<std::string>();
  if (cfg.transform != "none" && cfg.transform != "logit")
    throw ConfigError("transform must be 'none' or 'logit'");
  if (cfg.enkf_variant != "perturbed_obs" && cfg.enkf_variant != "gaussian_obs")
    throw ConfigError("enkf_variant must be 'perturbed_obs' or 'gaussian_obs'");
  if (cfg.weight_formula != "tempered_ratio" && cfg.weight_formula != "unscaled_logdet")
    throw ConfigError("weight_formula must be 'tempered_ratio' or 'unscaled_logdet'");

  const std::string model_name = cfg.model_spec.value("name", "");
  const bool is_ssm = model_name == "lgssm";
  if (is_filter_method(cfg.method) && !is_ssm)
    throw ConfigError("method '" + cfg.method + "' requires an 'lgssm' model spec");
  if (!is_filter_method(cfg.method) && is_ssm)
    throw ConfigError("method '" + cfg.method + "' requires a static model spec");
  return cfg;
}

struct BuiltStaticModel {
  StaticModel model;
  std::optional<ScalarSigmaSpec> scalar_sigma;   // present when a quadrature oracle exists
  std::optional<SurrogateFixture> fixture;       // present for surrogate datasets
};

inline BuiltStaticModel build_static_model(const json& spec) {
  if (!spec.contains("name")) throw ConfigError("model spec requires 'name'");
  const std::string name = spec["name"].get<std::string>();
  BuiltStaticModel out;
  if (name == "linear_gaussian") {
    detail::check_keys(spec, {"name", "a", "gamma0", "prior_mean", "prior_var", "y"},
                       "linear_gaussian model");
    Matrix A(1, 1), g0(1, 1), c0(1, 1);
    A(0, 0) = spec.value("a", 1.0);
    g0(0, 0) = spec.value("gamma0", 1.0);
    c0(0, 0) = spec.value("prior_var", 1.0);
    Vector mu(1), y(1);
    mu(0) = spec.value("prior_mean", 0.0);
    y(0) = spec.value("y", 1.0);
    out.model = make_linear_gaussian(A, g0, mu, c0, y);
  } else if (name == "scalar_sigma") {
    detail::check_keys(
        spec, {"name", "n", "theta_true", "sigma_true", "data_seed", "mu0", "tau0", "sigma_upper"},
        "scalar_sigma model");
    ScalarSigmaSpec ss;
    out.model = make_scalar_sigma_model(
        spec.value("n", 10), spec.value("theta_true", 1.0), spec.value("sigma_true", 1.0),
        spec.value("data_seed", std::uint64_t{1}), &ss, spec.value("mu0", 0.0),
        spec.value("tau0", 2.0), spec.value("sigma_upper", 10.0));
    out.scalar_sigma = ss;
  } else if (name == "mineralisation") {
    detail::check_keys(spec, {"name", "T", "R", "theta_true", "sigma_true", "data_seed"},
                       "mineralisation model");
    Vector theta_true = spec.contains("theta_true")
                            ? detail::json_vector(spec["theta_true"], "theta_true")
                            : (Vector(3) << 100.0, 0.01, 0.05).finished();
    SurrogateFixture fx;
    out.model = make_mineralisation_surrogate(spec.value("T", 10), spec.value("R", 4), theta_true,
                                              spec.value("sigma_true", 2.0),
                                              spec.value("data_seed", std::uint64_t{1}), &fx);
    out.fixture = fx;
  } else {
    throw ConfigError("unknown model '" + name +
                      "'; valid options: linear_gaussian, scalar_sigma, mineralisation, lgssm");
  }
  return out;
}

struct BuiltSsm {
  LGSSM lgssm;
  SSM ssm;
  Matrix data;  // T x d_y
};

inline BuiltSsm build_ssm(const json& spec) {
  detail::check_keys(spec, {"name", "F", "Q", "H", "R", "x0_mean", "C0", "T", "data_seed"},
                     "lgssm model");
  BuiltSsm out;
  out.lgssm.F = detail::json_matrix(spec.at("F"), "F");
  out.lgssm.Q = detail::json_matrix(spec.at("Q"), "Q");
  out.lgssm.H = detail::json_matrix(spec.at("H"), "H");
  out.lgssm.R = detail::json_matrix(spec.at("R"), "R");
  out.lgssm.C0 = detail::json_matrix(spec.at("C0"), "C0");
  out.lgssm.x0_mean = detail::json_vector(spec.at("x0_mean"), "x0_mean");
  out.ssm = make_lgssm_ssm(out.lgssm);
  const int T = spec.value("T", 50);
  const std::uint64_t data_seed = spec.value("data_seed", std::uint64_t{1});
  auto rng = make_stream(data_seed, 0x55a0ULL);
  out.data.resize(T, out.ssm.dim_y);
  Vector x = out.ssm.init_sample(rng);
  for (int t = 0; t < T; ++t) {
    x = out.ssm.transition_sample(x, rng);
    out.data.row(t) = out.ssm.obs_sample(x, rng).transpose();
  }
  return out;
}

inline json report_to_json(const RunReport& rep, const std::string& samples_file) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["method"] = rep.method;
  j["alphas"] = rep.alphas;
  j["ess"] = rep.ess;
  j["repeats"] = rep.repeats;
  j["acceptance"] = rep.acceptance;
  if (!rep.h_schedule.empty()) j["hs"] = rep.h_schedule;
  j["g_evals"] = rep.g_evals;
  j["g_evals_formula"] = rep.g_evals_formula;
  j["seed"] = rep.seed;
  j["samples_file"] = samples_file;
  return j;
}

inline json fixture_to_json(const SurrogateFixture& fx) {
  json j;
  j["grid"] = std::vector<double>(fx.grid.begin(), fx.grid.end());
  j["replicates"] = fx.replicates;
  j["y"] = std::vector<double>(fx.y.begin(), fx.y.end());
  j["theta_true"] = std::vector<double>(fx.theta_true.begin(), fx.theta_true.end());
  j["sigma_true"] = fx.sigma_true;
  j["seed"] = fx.seed;
  return j;
}

// Dispatch one experiment; writes samples.csv, report.json and (for static
// methods) predictive.csv into the output directory.
inline RunReport run_command(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);

  if (is_filter_method(cfg.method)) {
    auto built = build_ssm(cfg.model_spec);
    FilterOutput fo;
    std::string method = cfg.method;
    if (cfg.method == "kalman")
      fo = kalman_filter(built.lgssm, built.data);
    else if (cfg.method == "enkf")
      fo = enkf(built.ssm, built.data, cfg.N,
                cfg.enkf_variant == "gaussian_obs" ? EnkfVariant::gaussian_obs
                                                   : EnkfVariant::perturbed_obs,
                cfg.seed);
    else
      fo = bootstrap_pf(built.ssm, built.data, cfg.N, cfg.seed);

    std::vector<std::string> names;
    for (int i = 0; i < fo.means.cols(); ++i) names.push_back("x" + std::to_string(i + 1));
    write_samples_csv(cfg.output_dir / "filter_means.csv", names, fo.means.transpose());
    json j;
    j["schema_version"] = kSchemaVersion;
    j["method"] = method;
    j["loglik"] = fo.loglik;
    j["seed"] = cfg.seed;
    j["samples_file"] = "filter_means.csv";
    write_json_atomic(cfg.output_dir / "report.json", j);
    RunReport rep;
    rep.method = method;
    rep.seed = cfg.seed;
    return rep;
  }

  auto built = build_static_model(cfg.model_spec);
  RunReport rep;
  if (cfg.method == "smc") {
    SmcConfig sc;
    sc.N = cfg.N;
    sc.ess_target_fraction = cfg.ess_target;
    sc.seed = cfg.seed;
    rep = smc_run(built.model, sc);
  } else {
    EkiConfig ec;
    ec.N = cfg.N;
    ec.ess_target_fraction = cfg.ess_target;
    ec.M_noise = cfg.M_noise;
    ec.seed = cfg.seed;
    ec.transform = cfg.transform == "logit" ? ParamTransform::logit : ParamTransform::none;
    ec.weight_formula = cfg.weight_formula == "unscaled_logdet" ? CwWeightFormula::unscaled_logdet
                                                              : CwWeightFormula::tempered_ratio;
    if (cfg.method == "ieki" && built.model.noise.dim_phi != 0)
      throw ConfigError("method 'ieki' requires a model with known noise (d_phi = 0)");
    rep = cw_ieki_run(built.model, ec);
  }

  write_samples_csv(cfg.output_dir / "samples.csv", rep.param_names, rep.samples);
  auto pred = posterior_predictive(rep.samples, built.model, cfg.seed);
  {
    std::ostringstream os;
    os << "coordinate,median,lower_2.5,upper_97.5\n";
    for (int i = 0; i < pred.median.size(); ++i)
      os << i + 1 << "," << format_double(pred.median(i)) << "," << format_double(pred.lower(i))
         << "," << format_double(pred.upper(i)) << "\n";
    write_file_atomic(cfg.output_dir / "predictive.csv", os.str());
  }
  json j = report_to_json(rep, "samples.csv");
  j["predictive_g_evals"] = pred.g_evals;
  if (built.fixture) write_json_atomic(cfg.output_dir / "fixture.json", fixture_to_json(*built.fixture));
  write_json_atomic(cfg.output_dir / "report.json", j);
  return rep;
}

struct CompareRow {
  std::string method;
  double ess_target = 0.0;
  long long g_evals = 0;
  double speedup = 0.0;
  Vector posterior_mean;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  std::vector<std::string> param_names;
  Vector smc_mean;
  std::optional<QuadratureSummary> oracle;
};

// Runs every config (all must share the same static model spec), tabulates
// evaluation counts and speedups relative to the first SMC row.
inline CompareReport compare_command(const std::vector<ExperimentConfig>& cfgs) {
  if (cfgs.size() < 2) throw ConfigError("compare requires at least 2 configs");
  for (const auto& c : cfgs) {
    if (is_filter_method(c.method)) throw ConfigError("compare supports static methods only");
    if (c.model_spec != cfgs.front().model_spec)
      throw ConfigError("compare requires all configs to share the same model");
  }

  CompareReport out;
  long long smc_evals = -1;
  for (const auto& c : cfgs) {
    auto built = build_static_model(c.model_spec);
    RunReport rep;
    if (c.method == "smc") {
      SmcConfig sc;
      sc.N = c.N;
      sc.ess_target_fraction = c.ess_target;
      sc.seed = c.seed;
      rep = smc_run(built.model, sc);
    } else {
      EkiConfig ec;
      ec.N = c.N;
      ec.ess_target_fraction = c.ess_target;
      ec.M_noise = c.M_noise;
      ec.seed = c.seed;
      ec.transform = c.transform == "logit" ? ParamTransform::logit : ParamTransform::none;
      rep = cw_ieki_run(built.model, ec);
    }
    CompareRow row;
    row.method = c.method;
    row.ess_target = c.ess_target;
    row.g_evals = rep.g_evals;
    row.posterior_mean = rep.samples.rowwise().mean();
    if (c.method == "smc" && smc_evals < 0) {
      smc_evals = rep.g_evals;
      out.smc_mean = row.posterior_mean;
      out.param_names = rep.param_names;
    }
    out.rows.push_back(std::move(row));
    if (out.param_names.empty()) out.param_names = rep.param_names;
  }
  if (smc_evals < 0) throw ConfigError("compare requires at least one smc config as baseline");
  for (auto& row : out.rows)
    row.speedup = static_cast<double>(smc_evals) / static_cast<double>(row.g_evals);

  const auto& spec = cfgs.front().model_spec;
  if (spec.value("name", "") == "scalar_sigma") {
    auto built = build_static_model(spec);
    out.oracle = scalar_sigma_posterior_quadrature(*built.scalar_sigma);
  }
  return out;
}

inline void write_compare_report(const CompareReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream os;
  os << "method,ess_target,g_evals,speedup\n";
  char buf[32];
  for (const auto& row : rep.rows) {
    std::snprintf(buf, sizeof(buf), "%.2f", row.speedup);
    os << row.method << "," << format_double(row.ess_target) << "," << row.g_evals << "," << buf
       << "\n";
  }
  write_file_atomic(dir / "compare.csv", os.str());

  json j;
  j["schema_version"] = kSchemaVersion;
  j["param_names"] = rep.param_names;
  j["rows"] = json::array();
  for (const auto& row : rep.rows) {
    json r;
    r["method"] = row.method;
    r["ess_target"] = row.ess_target;
    r["g_evals"] = row.g_evals;
    r["speedup"] = row.speedup;
    r["posterior_mean"] = std::vector<double>(row.posterior_mean.begin(), row.posterior_mean.end());
    Vector diff = row.posterior_mean - rep.smc_mean;
    r["mean_discrepancy_vs_smc"] = std::vector<double>(diff.begin(), diff.end());
    if (rep.oracle) {
      r["mean_discrepancy_vs_oracle"] = {row.posterior_mean(0) - rep.oracle->theta_mean,
                                         row.posterior_mean(1) - rep.oracle->sigma_mean};
    }
    j["rows"].push_back(r);
  }
  if (rep.oracle) {
    j["oracle"] = {{"theta_mean", rep.oracle->theta_mean},
                   {"theta_var", rep.oracle->theta_var},
                   {"sigma_mean", rep.oracle->sigma_mean},
                   {"sigma_var", rep.oracle->sigma_var}};
  }
  write_json_atomic(dir / "compare.json", j);
}

}  // namespace ekinfer
