// Command-line front end: fit a configured model to CSV data, generate
// simulation-study datasets, or run a lower-bound model comparison.
#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ncvb/engine.hpp"
#include "ncvb/init.hpp"
#include "ncvb/io.hpp"
#include "ncvb/selection.hpp"

namespace fs = std::filesystem;
using namespace ncvb;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

int env_threads() {
  if (const char* s = std::getenv("NCVB_THREADS")) return std::atoi(s);
  return 0;
}

PriorSpec make_prior(const Dataset& ds, const ModelConfig& cfg,
                     const GlmFit& glm) {
  PriorSpec prior;
  prior.Sigma_beta =
      cfg.sigma_beta_scale * MatrixXd::Identity(ds.p(), ds.p());
  if (cfg.nu && cfg.S) {
    prior.nu = *cfg.nu;
    prior.S = *cfg.S;
  } else {
    const IwPrior iw = prior_scale_from_data(ds, glm, cfg.c);
    prior.nu = cfg.nu.value_or(iw.nu);
    prior.S = cfg.S.value_or(iw.S);
  }
  return prior;
}

FitResult run_fit(const Dataset& ds, const ModelConfig& cfg) {
  const GlmFit glm = glm_irls(ds);
  const PriorSpec prior = make_prior(ds, cfg, glm);
  VariationalState st = init_state(ds, prior, glm, cfg.parametrization);
  return fit(ds, prior, cfg.parametrization, cfg.options, std::move(st));
}

void print_summary(std::ostream& os, const std::string& label,
                   const FitResult& res) {
  os << "model: " << label << "\n"
     << "converged: " << (res.converged ? "yes" : "no") << " after "
     << res.iterations << " cycles\n"
     << "elbo: " << res.elbo_trace.back() << "\n";
  for (const auto& s : res.fixed_effects)
    os << "  " << s.name << "  mean " << s.mean << "  sd " << s.sd << "\n";
  for (const auto& s : res.random_effect_sd)
    os << "  " << s.name << "  mean " << s.mean << "  sd " << s.sd << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational fitting of Poisson and logistic mixed models"};
  app.require_subcommand(1);

  // fit
  std::string data_path, model_path, out_dir = ".", parametrization_flag;
  double tol = -1.0;
  int max_iter = -1, quad_points = -1;
  std::int64_t seed = -1;
  bool deterministic = false;
  auto* cmd_fit = app.add_subcommand("fit", "Fit one model to a CSV dataset");
  cmd_fit->add_option("--data", data_path, "CSV data file")->required();
  cmd_fit->add_option("--model", model_path, "JSON model config")->required();
  cmd_fit->add_option("--parametrization", parametrization_flag,
                      "centered|noncentered|partial-fixed|partial-adaptive");
  cmd_fit->add_option("--tol", tol, "relative ELBO tolerance");
  cmd_fit->add_option("--max-iter", max_iter, "maximum cycles");
  cmd_fit->add_option("--quad-points", quad_points, "Gauss-Hermite order");
  cmd_fit->add_option("--seed", seed, "seed recorded in the result");
  cmd_fit->add_option("--out", out_dir, "output directory");
  cmd_fit->add_flag("--deterministic", deterministic,
                    "serial cluster loops, reproducible output");

  // simulate
  std::string design_name;
  int replicates = 100;
  std::uint64_t sim_seed = 1;
  auto* cmd_sim =
      app.add_subcommand("simulate", "Generate simulation-study datasets");
  cmd_sim->add_option("--design", design_name, "poisson-intercept|logistic-intercept")
      ->required();
  cmd_sim->add_option("--replicates", replicates, "number of datasets");
  cmd_sim->add_option("--seed", sim_seed, "RNG seed");
  cmd_sim->add_option("--out", out_dir, "output directory")->required();

  // select
  std::string models_path;
  auto* cmd_sel =
      app.add_subcommand("select", "Fit several models and rank by ELBO");
  cmd_sel->add_option("--data", data_path, "CSV data file")->required();
  cmd_sel->add_option("--models", models_path, "JSON array of model configs")
      ->required();
  cmd_sel->add_option("--out", out_dir, "output directory");
  cmd_sel->add_flag("--deterministic", deterministic,
                    "serial cluster loops, reproducible output");

  CLI11_PARSE(app, argc, argv);

  try {
    fs::create_directories(out_dir);
    if (cmd_fit->parsed()) {
      ModelConfig cfg = model_config_from_json(slurp(model_path));
      if (!parametrization_flag.empty())
        cfg.parametrization = parametrization_from_name(parametrization_flag);
      if (tol > 0) cfg.options.tolerance = tol;
      if (max_iter > 0) cfg.options.max_iterations = max_iter;
      if (quad_points > 0) cfg.options.quad_points = quad_points;
      if (seed >= 0) cfg.options.seed = static_cast<std::uint64_t>(seed);
      cfg.options.deterministic = deterministic;
      cfg.options.threads = env_threads();

      const Dataset ds = ingest_csv(read_csv_file(data_path), cfg);
      const FitResult res = run_fit(ds, cfg);
      write_file(fs::path(out_dir) / "result.json",
                 result_to_json(res, cfg, deterministic));
      write_file(fs::path(out_dir) / "elbo_trace.csv", elbo_trace_to_csv(res));
      print_summary(std::cout, cfg.label, res);
      return res.converged ? 0 : 2;
    }

    if (cmd_sim->parsed()) {
      SimDesignTag tag;
      if (design_name == "poisson-intercept")
        tag = SimDesignTag::PoissonIntercept;
      else if (design_name == "logistic-intercept")
        tag = SimDesignTag::LogisticIntercept;
      else
        throw DataError("unknown design: " + design_name);
      const auto datasets = simulate_design(make_design(tag, replicates, sim_seed));
      std::ostringstream manifest;
      manifest << "replicate,file,rows\n";
      for (int rep = 0; rep < replicates; ++rep) {
        std::ostringstream name;
        name << "rep_" << std::setw(3) << std::setfill('0') << rep << ".csv";
        write_file(fs::path(out_dir) / name.str(),
                   emit_simulated_csv(datasets[rep]));
        manifest << rep << "," << name.str() << ","
                 << datasets[rep].n_obs() << "\n";
      }
      write_file(fs::path(out_dir) / "manifest.csv", manifest.str());
      std::cout << "wrote " << replicates << " datasets to " << out_dir << "\n";
      return 0;
    }

    if (cmd_sel->parsed()) {
      auto configs = model_config_list_from_json(slurp(models_path));
      if (configs.size() < 2)
        throw DataError("select: need at least two model configs");
      const CsvTable table = read_csv_file(data_path);
      std::vector<std::string> labels;
      std::vector<FitResult> fits;
      for (auto& cfg : configs) {
        cfg.options.deterministic = deterministic;
        cfg.options.threads = env_threads();
        labels.push_back(cfg.label);
        try {
          fits.push_back(run_fit(ingest_csv(table, cfg), cfg));
        } catch (const std::exception& e) {
          std::cerr << "model '" << cfg.label << "' failed: " << e.what()
                    << "\n";
          fits.emplace_back();  // dataset_hash 0 marks failure
        }
      }
      const ModelComparison cmp = compare_models(labels, fits);
      write_file(fs::path(out_dir) / "comparison.csv", comparison_to_csv(cmp));
      std::cout << comparison_to_csv(cmp);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
