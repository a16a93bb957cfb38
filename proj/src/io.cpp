#include "ncvb/io.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace ncvb {

using nlohmann::json;

namespace {

ModelConfig config_from(const json& j) {
  ModelConfig cfg;
  cfg.label = j.value("label", std::string("model"));
  cfg.family = family_from_name(j.at("family").get<std::string>());
  cfg.response = j.at("response").get<std::string>();
  cfg.cluster_id = j.at("cluster").get<std::string>();
  if (j.contains("offset") && !j["offset"].is_null())
    cfg.offset = j["offset"].get<std::string>();
  if (j.contains("random_effects"))
    cfg.random_effects = j["random_effects"].get<std::vector<std::string>>();
  if (j.contains("fixed_effects_subject"))
    cfg.fixed_effects_subject =
        j["fixed_effects_subject"].get<std::vector<std::string>>();
  if (j.contains("fixed_effects_within"))
    cfg.fixed_effects_within =
        j["fixed_effects_within"].get<std::vector<std::string>>();
  if (j.contains("prior")) {
    const auto& pr = j["prior"];
    cfg.sigma_beta_scale = pr.value("sigma_beta_scale", 1000.0);
    cfg.c = pr.value("c", 1.0);
    if (pr.contains("nu") && !pr["nu"].is_null())
      cfg.nu = pr["nu"].get<double>();
    if (pr.contains("S") && !pr["S"].is_null()) {
      const auto rows = pr["S"].get<std::vector<std::vector<double>>>();
      MatrixXd S(rows.size(), rows.empty() ? 0 : rows[0].size());
      for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < rows[a].size(); ++b) S(a, b) = rows[a][b];
      cfg.S = S;
    }
  }
  if (j.contains("parametrization"))
    cfg.parametrization =
        parametrization_from_name(j["parametrization"].get<std::string>());
  if (j.contains("options")) {
    const auto& op = j["options"];
    cfg.options.tolerance = op.value("tolerance", 1e-6);
    cfg.options.max_iterations = op.value("max_iterations", 500);
    cfg.options.quad_points = op.value("quad_points", 10);
    cfg.options.damping = op.value("damping", 1.0);
    cfg.options.seed = op.value("seed", std::uint64_t{0});
  }
  return cfg;
}

json config_to(const ModelConfig& cfg) {
  json j;
  j["label"] = cfg.label;
  j["family"] = family_name(cfg.family);
  j["response"] = cfg.response;
  j["cluster"] = cfg.cluster_id;
  if (cfg.offset) j["offset"] = *cfg.offset;
  j["random_effects"] = cfg.random_effects;
  j["fixed_effects_subject"] = cfg.fixed_effects_subject;
  j["fixed_effects_within"] = cfg.fixed_effects_within;
  json pr;
  pr["sigma_beta_scale"] = cfg.sigma_beta_scale;
  pr["c"] = cfg.c;
  if (cfg.nu) pr["nu"] = *cfg.nu;
  if (cfg.S) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index a = 0; a < cfg.S->rows(); ++a) {
      std::vector<double> row;
      for (Eigen::Index b = 0; b < cfg.S->cols(); ++b)
        row.push_back((*cfg.S)(a, b));
      rows.push_back(row);
    }
    pr["S"] = rows;
  }
  j["prior"] = pr;
  j["parametrization"] = parametrization_name(cfg.parametrization);
  j["options"] = {{"tolerance", cfg.options.tolerance},
                  {"max_iterations", cfg.options.max_iterations},
                  {"quad_points", cfg.options.quad_points},
                  {"damping", cfg.options.damping},
                  {"seed", cfg.options.seed}};
  return j;
}

}  // namespace

ModelConfig model_config_from_json(const std::string& json_text) {
  return config_from(json::parse(json_text));
}

std::string model_config_to_json(const ModelConfig& config) {
  return config_to(config).dump(2);
}

std::vector<ModelConfig> model_config_list_from_json(
    const std::string& json_text) {
  const json j = json::parse(json_text);
  if (!j.is_array()) throw DataError("model list must be a JSON array");
  std::vector<ModelConfig> out;
  for (const auto& item : j) out.push_back(config_from(item));
  return out;
}

std::uint64_t config_hash(const ModelConfig& config) {
  const std::string s = config_to(config).dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

CsvTable read_csv(std::istream& in, const std::string& path_for_errors) {
  CsvTable t;
  std::string line;
  int lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    std::stringstream ss(s);
    while (std::getline(ss, cur, ',')) parts.push_back(cur);
    if (!s.empty() && s.back() == ',') parts.push_back("");
    return parts;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (t.header.empty()) {
      t.header = split(line);
      continue;
    }
    const auto parts = split(line);
    if (parts.size() != t.header.size())
      throw DataError(path_for_errors + ":" + std::to_string(lineno) +
                      ": expected " + std::to_string(t.header.size()) +
                      " fields, got " + std::to_string(parts.size()));
    std::vector<double> row;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(parts[k], &pos));
        if (pos != parts[k].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw DataError(path_for_errors + ":" + std::to_string(lineno) +
                        ": non-numeric value '" + parts[k] + "' in column " +
                        t.header[k]);
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty())
    throw DataError(path_for_errors + ": empty file (missing header)");
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_csv(in, path);
}

namespace {

std::size_t column_index(const CsvTable& t, const std::string& name) {
  for (std::size_t k = 0; k < t.header.size(); ++k)
    if (t.header[k] == name) return k;
  throw DataError("column '" + name + "' not found in data header");
}

}  // namespace

Dataset ingest_csv(const CsvTable& table, const ModelConfig& config) {
  if (config.offset && config.family == Family::Bernoulli)
    throw DataError("offset column is not allowed for the bernoulli family");
  const std::size_t y_col = column_index(table, config.response);
  const std::size_t id_col = column_index(table, config.cluster_id);
  std::vector<std::size_t> re_cols, g1_cols, g2_cols;
  for (const auto& c : config.random_effects)
    re_cols.push_back(column_index(table, c));
  for (const auto& c : config.fixed_effects_subject)
    g1_cols.push_back(column_index(table, c));
  for (const auto& c : config.fixed_effects_within)
    g2_cols.push_back(column_index(table, c));
  std::optional<std::size_t> off_col;
  if (config.offset) off_col = column_index(table, *config.offset);

  // Group rows by cluster id in order of first appearance.
  std::vector<double> ids;
  std::vector<std::vector<std::size_t>> groups;
  std::map<double, std::size_t> where;
  for (std::size_t rrow = 0; rrow < table.rows.size(); ++rrow) {
    const double id = table.rows[rrow][id_col];
    auto it = where.find(id);
    if (it == where.end()) {
      where[id] = groups.size();
      ids.push_back(id);
      groups.push_back({rrow});
    } else {
      groups[it->second].push_back(rrow);
    }
  }

  Dataset ds;
  ds.family = config.family;
  ds.r = 1 + static_cast<int>(re_cols.size());
  ds.g1 = static_cast<int>(g1_cols.size());
  ds.g2 = static_cast<int>(g2_cols.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& rows = groups[g];
    const Eigen::Index ni = static_cast<Eigen::Index>(rows.size());
    ClusterData c;
    c.y.resize(ni);
    c.XR = MatrixXd::Ones(ni, ds.r);
    c.xG1.resize(ds.g1);
    c.XG2.resize(ni, ds.g2);
    c.offset = VectorXd::Ones(ni);
    for (Eigen::Index j = 0; j < ni; ++j) {
      const auto& row = table.rows[rows[j]];
      c.y(j) = row[y_col];
      for (std::size_t k = 0; k < re_cols.size(); ++k)
        c.XR(j, 1 + static_cast<int>(k)) = row[re_cols[k]];
      for (std::size_t k = 0; k < g2_cols.size(); ++k)
        c.XG2(j, static_cast<int>(k)) = row[g2_cols[k]];
      if (off_col) c.offset(j) = row[*off_col];
    }
    for (std::size_t k = 0; k < g1_cols.size(); ++k) {
      c.xG1(static_cast<int>(k)) = table.rows[rows[0]][g1_cols[k]];
      for (Eigen::Index j = 1; j < ni; ++j)
        if (table.rows[rows[j]][g1_cols[k]] != c.xG1(static_cast<int>(k)))
          throw DataError("column '" + config.fixed_effects_subject[k] +
                          "' is declared subject-level but varies within "
                          "cluster id " + std::to_string(ids[g]));
    }
    ds.clusters.push_back(std::move(c));
  }
  validate_dataset(ds);
  return ds;
}

std::string emit_simulated_csv(const Dataset& ds) {
  std::ostringstream os;
  const bool poisson = ds.family == Family::Poisson;
  os << "id,y,x";
  if (poisson) os << ",E";
  os << "\n";
  os.precision(17);
  for (int i = 0; i < ds.n(); ++i) {
    const auto& c = ds.clusters[i];
    for (Eigen::Index j = 0; j < c.size(); ++j) {
      os << (i + 1) << "," << c.y(j) << "," << c.XG2(j, 0);
      if (poisson) os << "," << c.offset(j);
      os << "\n";
    }
  }
  return os.str();
}

std::string result_to_json(const FitResult& result, const ModelConfig& config,
                           bool deterministic) {
  json j;
  j["schema_version"] = 1;
  j["label"] = config.label;
  j["config_hash"] = config_hash(config);
  j["seed"] = config.options.seed;
  j["family"] = family_name(config.family);
  j["parametrization"] = parametrization_name(config.parametrization);
  j["converged"] = result.converged;
  j["iterations"] = result.iterations;
  j["elbo"] = result.elbo_trace.empty() ? 0.0 : result.elbo_trace.back();
  j["dataset_hash"] = result.dataset_hash;
  json fe = json::array();
  for (const auto& s : result.fixed_effects)
    fe.push_back({{"name", s.name}, {"mean", s.mean}, {"sd", s.sd}});
  j["fixed_effects"] = fe;
  json re = json::array();
  for (const auto& s : result.random_effect_sd)
    re.push_back({{"name", s.name}, {"mean", s.mean}, {"sd", s.sd}});
  j["random_effect_sd"] = re;
  j["wall_time_s"] = deterministic ? 0.0 : result.wall_time;
  return j.dump(2) + "\n";
}

std::string elbo_trace_to_csv(const FitResult& result) {
  std::ostringstream os;
  os << "cycle,elbo\n";
  os.precision(17);
  for (std::size_t i = 0; i < result.elbo_trace.size(); ++i)
    os << (i + 1) << "," << result.elbo_trace[i] << "\n";
  return os.str();
}

}  // namespace ncvb
