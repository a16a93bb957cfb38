// CSV ingestion/emission and the JSON model-config and result schemas used
// by the CLI.
#ifndef NCVB_IO_HPP
#define NCVB_IO_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ncvb/engine.hpp"
#include "ncvb/model.hpp"

namespace ncvb {

struct ModelConfig {
  Family family = Family::Poisson;
  std::string response;
  std::string cluster_id;
  std::optional<std::string> offset;
  std::vector<std::string> random_effects;        // intercept implied first
  std::vector<std::string> fixed_effects_subject; // G1
  std::vector<std::string> fixed_effects_within;  // G2
  double sigma_beta_scale = 1000.0;
  std::optional<double> nu;          // default: from data, nu = r
  std::optional<MatrixXd> S;         // default: from data, S = r R_hat
  double c = 1.0;
  Parametrization parametrization = Parametrization::PartialFixed;
  FitOptions options;
  std::string label;
};

ModelConfig model_config_from_json(const std::string& json_text);
std::string model_config_to_json(const ModelConfig& config);
std::vector<ModelConfig> model_config_list_from_json(const std::string& json_text);
std::uint64_t config_hash(const ModelConfig& config);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(std::istream& in, const std::string& path_for_errors);
CsvTable read_csv_file(const std::string& path);

// Groups rows by cluster id (file order preserved within clusters) and
// validates the resulting dataset.
Dataset ingest_csv(const CsvTable& table, const ModelConfig& config);

// Inverse of ingest for simulated intercept-plus-slope datasets: columns
// id, y, x and (Poisson) E.
std::string emit_simulated_csv(const Dataset& ds);

std::string result_to_json(const FitResult& result, const ModelConfig& config,
                           bool deterministic);
std::string elbo_trace_to_csv(const FitResult& result);

}  // namespace ncvb

#endif
