// Core data model for clustered GLMM fitting: families, cluster data,
// priors, parametrization policy and the variational state shared by the
// update engine.
#ifndef NCVB_MODEL_HPP
#define NCVB_MODEL_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncvb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Family { Poisson, Bernoulli };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// One grouped-data cluster. XR carries the random-effects design (first
// column all ones when nonzero), xG1 the subject-level covariate row shared
// by every observation of the cluster, XG2 the within-cluster fixed-effects
// design. offset holds E_i for Poisson responses and is all ones otherwise.
struct ClusterData {
  VectorXd y;
  MatrixXd XR;
  VectorXd xG1;
  MatrixXd XG2;
  VectorXd offset;

  Eigen::Index size() const { return y.size(); }
};

struct Dataset {
  std::vector<ClusterData> clusters;
  Family family = Family::Poisson;
  int r = 0;   // random-effect dimension
  int g1 = 0;  // subject-level fixed effects eligible for centering
  int g2 = 0;  // within-cluster fixed effects

  int n() const { return static_cast<int>(clusters.size()); }
  int p() const { return r + g1 + g2; }
  Eigen::Index n_obs() const;
  // FNV-1a over the raw numeric content.
  std::uint64_t content_hash() const;
  // Hash of the observed side only (family, responses, offsets, cluster
  // sizes). Models with different design columns built from the same data
  // share it; used to guard model comparisons.
  std::uint64_t response_hash() const;
};

struct PriorSpec {
  MatrixXd Sigma_beta;  // p x p SPD
  double nu = 0.0;      // inverse-Wishart degrees of freedom, >= r
  MatrixXd S;           // r x r SPD scale
};

enum class Parametrization {
  Centered,         // W_i = 0
  Noncentered,      // W_i = I
  PartialFixed,     // W_i set at initialization, then frozen
  PartialAdaptive,  // W_i refreshed at the top of every cycle
};

std::string parametrization_name(Parametrization p);
Parametrization parametrization_from_name(const std::string& name);

// All variational parameters. V[i] and W_tilde[i] are kept consistent with
// W[i] through build_cluster_design; nu_q stays n + nu after initialization.
struct VariationalState {
  VectorXd mu_beta;
  MatrixXd Sigma_beta;
  double nu_q = 0.0;
  MatrixXd S_q;
  std::vector<VectorXd> mu_alpha;
  std::vector<MatrixXd> Sigma_alpha;
  std::vector<MatrixXd> W;
  std::vector<MatrixXd> V;
  std::vector<MatrixXd> W_tilde;
};

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
};

struct FitResult {
  VariationalState state;
  std::vector<double> elbo_trace;
  bool converged = false;
  int iterations = 0;
  std::vector<ParameterSummary> fixed_effects;
  std::vector<ParameterSummary> random_effect_sd;
  double wall_time = 0.0;
  std::uint64_t dataset_hash = 0;
};

struct ClusterDesign {
  MatrixXd V;        // n_i x p
  MatrixXd W_tilde;  // r x p
  MatrixXd C;        // r x (r + g1)
};

// Builds C_i = [I_r  e_1 x_i^{G1}^T], V_i = [X_i^R W C_i  X_i^{G2}] and
// W_tilde_i = [(I - W) C_i  0] for one cluster.
ClusterDesign build_cluster_design(const ClusterData& cluster, int g1, int p,
                                   const MatrixXd& W);

void validate_dataset(const Dataset& ds);

// Advisory check: true when the named values are constant within every
// cluster (the requirement for a G1 column).
bool constant_within_clusters(const std::vector<VectorXd>& column_per_cluster,
                              double tol = 1e-12);

// Posterior mean and SD of sqrt(D_kk) under IW(nu, S); the diagonal marginal
// of D_kk is inverse-gamma with shape (nu - r + 1)/2 and scale S_kk/2.
ParameterSummary random_effect_sd_summary(double nu, const MatrixXd& S, int r,
                                          int k);

}  // namespace ncvb

#endif
