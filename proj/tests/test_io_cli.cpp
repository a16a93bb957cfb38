#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "ncvb/io.hpp"
#include "ncvb/selection.hpp"

using namespace ncvb;
namespace fs = std::filesystem;

namespace {

const char* kPoissonCsv =
    "id,y,x,E\n"
    "1,2,0,1\n"
    "1,1,1,1\n"
    "2,0,0,1\n"
    "2,1,1,1\n"
    "3,4,0,2\n"
    "3,3,1,2\n";

ModelConfig poisson_config() {
  return model_config_from_json(R"({
    "label": "toy",
    "family": "poisson",
    "response": "y",
    "cluster": "id",
    "offset": "E",
    "fixed_effects_within": ["x"]
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ncvb_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static inline int counter = 0;
};

int run(const std::string& cmd) { return std::system(cmd.c_str()); }

}  // namespace

TEST_CASE("CSV parsing reports malformed rows with line numbers") {
  {
    std::istringstream in("a,b\n1,2\n3\n");
    CHECK_THROWS_WITH_AS(read_csv(in, "f.csv"),
                         doctest::Contains("f.csv:3"), DataError);
  }
  {
    std::istringstream in("a,b\n1,zap\n");
    CHECK_THROWS_WITH_AS(read_csv(in, "f.csv"),
                         doctest::Contains("non-numeric value 'zap'"),
                         DataError);
  }
  {
    std::istringstream in("");
    CHECK_THROWS_WITH_AS(read_csv(in, "f.csv"),
                         doctest::Contains("missing header"), DataError);
  }
  std::istringstream in("a,b\r\n1,2\r\n\r\n3,4\n");
  const CsvTable t = read_csv(in, "f.csv");
  CHECK(t.rows.size() == 2);
  CHECK(t.rows[1][1] == 4.0);
}

TEST_CASE("CSV ingestion groups clusters in order of first appearance") {
  std::istringstream in(kPoissonCsv);
  const CsvTable t = read_csv(in, "toy.csv");
  const Dataset ds = ingest_csv(t, poisson_config());
  CHECK(ds.family == Family::Poisson);
  CHECK(ds.n() == 3);
  CHECK(ds.r == 1);
  CHECK(ds.g1 == 0);
  CHECK(ds.g2 == 1);
  CHECK(ds.clusters[0].y(0) == 2.0);
  CHECK(ds.clusters[2].offset(0) == 2.0);
  CHECK(ds.clusters[1].XG2(1, 0) == 1.0);
  CHECK(ds.clusters[0].XR.isOnes());
}

TEST_CASE("ingestion rejects offsets for binary outcomes") {
  ModelConfig cfg = poisson_config();
  cfg.family = Family::Bernoulli;
  std::istringstream in(kPoissonCsv);
  const CsvTable t = read_csv(in, "toy.csv");
  CHECK_THROWS_WITH_AS(ingest_csv(t, cfg),
                       doctest::Contains("offset column is not allowed"),
                       DataError);
}

TEST_CASE("ingestion enforces subject-level constancy") {
  ModelConfig cfg = poisson_config();
  cfg.offset.reset();
  cfg.fixed_effects_within.clear();
  cfg.fixed_effects_subject = {"x"};  // x varies inside each cluster
  std::istringstream in(kPoissonCsv);
  const CsvTable t = read_csv(in, "toy.csv");
  CHECK_THROWS_WITH_AS(ingest_csv(t, cfg),
                       doctest::Contains("varies within cluster"), DataError);
}

TEST_CASE("model config JSON round trip preserves every field") {
  ModelConfig cfg = poisson_config();
  cfg.parametrization = Parametrization::Noncentered;
  cfg.options.tolerance = 1e-7;
  cfg.options.quad_points = 15;
  cfg.nu = 3.0;
  MatrixXd S(1, 1);
  S << 0.8;
  cfg.S = S;
  const ModelConfig back = model_config_from_json(model_config_to_json(cfg));
  CHECK(back.label == cfg.label);
  CHECK(back.family == cfg.family);
  CHECK(back.offset == cfg.offset);
  CHECK(back.parametrization == cfg.parametrization);
  CHECK(back.options.tolerance == cfg.options.tolerance);
  CHECK(back.options.quad_points == cfg.options.quad_points);
  CHECK(*back.nu == 3.0);
  CHECK((*back.S)(0, 0) == 0.8);
  CHECK(config_hash(back) == config_hash(cfg));
  cfg.options.tolerance = 1e-6;
  CHECK(config_hash(back) != config_hash(cfg));
}

TEST_CASE("simulated datasets survive a CSV round trip") {
  const auto datasets =
      simulate_design(make_design(SimDesignTag::PoissonIntercept, 1, 9));
  const std::string csv = emit_simulated_csv(datasets[0]);
  std::istringstream in(csv);
  ModelConfig cfg = poisson_config();
  const Dataset back = ingest_csv(read_csv(in, "sim.csv"), cfg);
  CHECK(back.content_hash() == datasets[0].content_hash());
}

#ifdef GLMMVB_PATH

TEST_CASE("command line fit writes results and is reproducible") {
  TempDir tmp;
  spit(tmp.path / "data.csv", kPoissonCsv);
  spit(tmp.path / "model.json", model_config_to_json(poisson_config()));
  const std::string base = std::string(GLMMVB_PATH) + " fit --data " +
                           (tmp.path / "data.csv").string() + " --model " +
                           (tmp.path / "model.json").string() +
                           " --deterministic --seed 4";
  const int rc1 = run(base + " --out " + (tmp.path / "r1").string() +
                      " > /dev/null 2>&1");
  const int rc2 = run(base + " --out " + (tmp.path / "r2").string() +
                      " > /dev/null 2>&1");
  CHECK(WEXITSTATUS(rc1) == 0);
  CHECK(WEXITSTATUS(rc2) == 0);
  const std::string j1 = slurp(tmp.path / "r1" / "result.json");
  CHECK(j1 == slurp(tmp.path / "r2" / "result.json"));
  CHECK(slurp(tmp.path / "r1" / "elbo_trace.csv") ==
        slurp(tmp.path / "r2" / "elbo_trace.csv"));
  CHECK(j1.find("\"wall_time_s\": 0.0") != std::string::npos);
  CHECK(j1.find("\"converged\": true") != std::string::npos);
}

TEST_CASE("command line distinguishes hard errors from non-convergence") {
  TempDir tmp;
  spit(tmp.path / "data.csv", kPoissonCsv);
  spit(tmp.path / "model.json", model_config_to_json(poisson_config()));
  // Missing file: hard error.
  const int rc_missing =
      run(std::string(GLMMVB_PATH) + " fit --data /nonexistent.csv --model " +
          (tmp.path / "model.json").string() + " --out " +
          (tmp.path / "o").string() + " > /dev/null 2>&1");
  CHECK(WEXITSTATUS(rc_missing) == 1);
  // Iteration cap too low: exit code 2, result still written.
  const int rc_cap =
      run(std::string(GLMMVB_PATH) + " fit --data " +
          (tmp.path / "data.csv").string() + " --model " +
          (tmp.path / "model.json").string() + " --max-iter 2 --out " +
          (tmp.path / "cap").string() + " > /dev/null 2>&1");
  CHECK(WEXITSTATUS(rc_cap) == 2);
  CHECK(slurp(tmp.path / "cap" / "result.json").find("\"converged\": false") !=
        std::string::npos);
}

TEST_CASE("command line simulate and select pipeline") {
  TempDir tmp;
  const int rc_sim = run(std::string(GLMMVB_PATH) +
                         " simulate --design poisson-intercept --replicates 2"
                         " --seed 3 --out " +
                         (tmp.path / "sims").string() + " > /dev/null 2>&1");
  REQUIRE(WEXITSTATUS(rc_sim) == 0);
  CHECK(fs::exists(tmp.path / "sims" / "manifest.csv"));
  REQUIRE(fs::exists(tmp.path / "sims" / "rep_000.csv"));

  ModelConfig with_slope = poisson_config();
  with_slope.label = "slope";
  ModelConfig intercept_only = poisson_config();
  intercept_only.label = "flat";
  intercept_only.fixed_effects_within.clear();
  spit(tmp.path / "models.json",
       "[" + model_config_to_json(with_slope) + "," +
           model_config_to_json(intercept_only) + "]");
  const int rc_sel = run(std::string(GLMMVB_PATH) + " select --data " +
                         (tmp.path / "sims" / "rep_000.csv").string() +
                         " --models " + (tmp.path / "models.json").string() +
                         " --deterministic --out " +
                         (tmp.path / "sel").string() + " > /dev/null 2>&1");
  REQUIRE(WEXITSTATUS(rc_sel) == 0);
  const std::string cmp = slurp(tmp.path / "sel" / "comparison.csv");
  CHECK(cmp.find("model,elbo,converged,probability") == 0);
  CHECK(cmp.find("slope") != std::string::npos);
  CHECK(cmp.find("flat") != std::string::npos);
}

#endif  // GLMMVB_PATH
