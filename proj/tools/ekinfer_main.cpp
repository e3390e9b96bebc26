// ekinfer: command-line driver for the inference toolkit.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ekinfer/harness.hpp"

namespace fs = std::filesystem;
using ekinfer::json;

namespace {

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<std::string> out_dir) {
  json j = ekinfer::read_json(config_path);
  if (seed) j["seed"] = *seed;
  if (out_dir) j["output_dir"] = *out_dir;
  auto cfg = ekinfer::parse_experiment_config(j);
  auto rep = ekinfer::run_command(cfg);
  std::cout << "method=" << (rep.method.empty() ? cfg.method : rep.method)
            << " g_evals=" << rep.g_evals << " iterations=" << rep.alphas.size()
            << " out=" << cfg.output_dir.string() << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths, const std::string& out_dir) {
  std::vector<ekinfer::ExperimentConfig> cfgs;
  for (const auto& p : config_paths)
    cfgs.push_back(ekinfer::parse_experiment_config(ekinfer::read_json(p)));
  auto rep = ekinfer::compare_command(cfgs);
  ekinfer::write_compare_report(rep, out_dir);
  for (const auto& row : rep.rows)
    std::cout << row.method << " ess_target=" << row.ess_target << " g_evals=" << row.g_evals
              << " speedup=" << row.speedup << "\n";
  return 0;
}

int cmd_sloppiness(const std::string& samples_path, const std::string& transform,
                   const std::string& bounds_path, int top_k, const std::string& out_dir) {
  auto table = ekinfer::read_csv(samples_path);
  ekinfer::Matrix samples = table.values.transpose();  // d x S

  ekinfer::SensitivityTransform tr = transform == "logit"
                                         ? ekinfer::SensitivityTransform::logit_transform
                                         : ekinfer::SensitivityTransform::log_transform;
  ekinfer::Vector lower, upper;
  if (tr == ekinfer::SensitivityTransform::logit_transform) {
    if (bounds_path.empty())
      throw ekinfer::ConfigError("logit transform requires --bounds <file>");
    json b = ekinfer::read_json(bounds_path);
    lower = ekinfer::detail::json_vector(b.at("lower"), "bounds.lower");
    upper = ekinfer::detail::json_vector(b.at("upper"), "bounds.upper");
  }
  auto result = ekinfer::sensitivity_matrix(samples, tr, lower, upper);
  if (top_k <= 0) top_k = static_cast<int>(result.eigenvalues.size());
  auto rows = ekinfer::eigenvector_report(result, top_k);

  fs::create_directories(out_dir);
  {
    std::ostringstream os;
    os << "k,eigenvalue,ratio_to_stiffest";
    for (const auto& name : table.header) os << ",v_" << name;
    os << "\n";
    for (const auto& row : rows) {
      os << row.k << "," << ekinfer::format_double(row.eigenvalue) << ","
         << ekinfer::format_double(row.ratio_to_stiffest);
      for (int i = 0; i < row.components.size(); ++i)
        os << "," << ekinfer::format_double(row.components(i));
      os << "\n";
    }
    ekinfer::write_file_atomic(fs::path(out_dir) / "eigenvector_report.csv", os.str());
  }
  {
    ekinfer::Matrix proj(top_k, samples.cols());
    std::vector<std::string> names;
    for (int k = 0; k < top_k; ++k) {
      auto ep = ekinfer::eigenparameter_samples(samples, result.eigenvectors.col(k), tr, lower,
                                                upper);
      proj.row(k) = ep.values.transpose();
      names.push_back("alpha_" + std::to_string(k + 1));
    }
    ekinfer::write_samples_csv(fs::path(out_dir) / "eigenparameters.csv", names, proj);
  }
  std::cout << "wrote eigenvector_report.csv and eigenparameters.csv to " << out_dir << "\n";
  return 0;
}

int cmd_predict(const std::string& samples_path, const std::string& model_path,
                std::uint64_t seed, const std::string& out_dir) {
  auto table = ekinfer::read_csv(samples_path);
  json spec = ekinfer::read_json(model_path);
  if (spec.contains("model")) spec = spec["model"];
  auto built = ekinfer::build_static_model(spec);
  auto pred = ekinfer::posterior_predictive(table.values.transpose(), built.model, seed);
  fs::create_directories(out_dir);
  std::ostringstream os;
  os << "coordinate,median,lower_2.5,upper_97.5\n";
  for (int i = 0; i < pred.median.size(); ++i)
    os << i + 1 << "," << ekinfer::format_double(pred.median(i)) << ","
       << ekinfer::format_double(pred.lower(i)) << "," << ekinfer::format_double(pred.upper(i))
       << "\n";
  ekinfer::write_file_atomic(fs::path(out_dir) / "predictive.csv", os.str());
  std::cout << "wrote predictive.csv to " << out_dir << " (g_evals=" << pred.g_evals << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inference toolkit: ensemble Kalman inversion, tempering SMC, filters"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
  auto* run = app.add_subcommand("run", "run one experiment from a JSON config");
  run->add_option("--config", config_path, "experiment config file")->required();
  std::uint64_t seed_val = 0;
  bool seed_set = false;
  run->add_option("--seed", seed_val, "override the config seed")->each([&](const std::string&) {
    seed_set = true;
  });
  std::string run_out;
  run->add_option("--out", run_out, "override the output directory");

  std::vector<std::string> compare_configs;
  std::string compare_out = ".";
  auto* cmp = app.add_subcommand("compare", "run several configs and tabulate cost/speedup");
  cmp->add_option("--configs", compare_configs, "experiment config files")->required()
      ->expected(-2);
  cmp->add_option("--out", compare_out, "output directory");

  std::string slop_samples, slop_transform = "log", slop_bounds, slop_out = ".";
  int slop_topk = 0;
  auto* slop = app.add_subcommand("sloppiness", "sensitivity/eigenparameter analysis of samples");
  slop->add_option("--samples", slop_samples, "posterior samples CSV")->required();
  slop->add_option("--transform", slop_transform, "log or logit")
      ->check(CLI::IsMember({"log", "logit"}));
  slop->add_option("--bounds", slop_bounds, "JSON file with lower/upper bounds (logit)");
  slop->add_option("--top-k", slop_topk, "number of eigenparameters to report");
  slop->add_option("--out", slop_out, "output directory");

  std::string pred_samples, pred_model, pred_out = ".";
  std::uint64_t pred_seed = 0;
  auto* pred = app.add_subcommand("predict", "posterior predictive bands from samples");
  pred->add_option("--samples", pred_samples, "posterior samples CSV")->required();
  pred->add_option("--model", pred_model, "model config JSON")->required();
  pred->add_option("--seed", pred_seed, "rng seed");
  pred->add_option("--out", pred_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      if (seed_set) seed_override = seed_val;
      if (!run_out.empty()) out_override = run_out;
      return cmd_run(config_path, seed_override, out_override);
    }
    if (cmp->parsed()) return cmd_compare(compare_configs, compare_out);
    if (slop->parsed())
      return cmd_sloppiness(slop_samples, slop_transform, slop_bounds, slop_topk, slop_out);
    if (pred->parsed()) return cmd_predict(pred_samples, pred_model, pred_seed, pred_out);
  } catch (const ekinfer::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
