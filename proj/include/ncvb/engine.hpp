// Fixed-point variational updates: the linear mixed model cycle, tuning
// matrix computation, the GLMM update steps, the lower bound and the full
// fitting loop. Per-cluster work runs under OpenMP; cross-cluster sums are
// reduced in a fixed order so results do not depend on the thread count.
#ifndef NCVB_ENGINE_HPP
#define NCVB_ENGINE_HPP

#include <cstdint>
#include <vector>

#include "ncvb/model.hpp"
#include "ncvb/special_math.hpp"

namespace ncvb {

enum class ElboCheck { Monitor, Strict };

struct FitOptions {
  double tolerance = 1e-6;  // absolute relative ELBO change
  int max_iterations = 500;
  int quad_points = 10;
  double damping = 1.0;  // in (0, 1]; 1 means none
  std::uint64_t seed = 0;
  ElboCheck elbo_check = ElboCheck::Monitor;
  int threads = 0;            // 0 = OpenMP default
  bool deterministic = false; // serial cluster loops
};

// Per-cluster caches refreshed at the top of each half-step: moments of the
// linear predictor under q, kappa for Poisson, F/G per family, and the
// quadrature recentering shared across B^{(0,1,2)} within one cycle.
struct ClusterWorkspace {
  VectorXd mu;     // V mu_beta + XR mu_alpha
  VectorXd sigma;  // sqrt diag(V Sigma_beta V^T + XR Sigma_alpha XR^T)
  VectorXd kappa;  // Poisson only
  VectorXd F;      // diagonal of F_ij
  VectorXd G;
  std::vector<GhqRecentering> recenter;  // Bernoulli only
};

// W = (X^T X / sigma2 + D^{-1})^{-1} D^{-1}
MatrixXd compute_w_lmm(const MatrixXd& X, double sigma2, const MatrixXd& D);

// W = (I_f + D^{-1})^{-1} D^{-1} with the family-specific observed
// information; falls back to W = I (with a warning on stderr) when the
// inner matrix is not factorizable.
MatrixXd compute_w_glmm(Family family, const ClusterData& cluster,
                        const MatrixXd& D_est, const VectorXd& eta);

struct LmmCluster {
  VectorXd y;
  MatrixXd X;
};

enum class LmmWPolicy { Optimal, Identity, Zero };

struct LmmFit {
  VectorXd mu_beta;
  MatrixXd Sigma_beta;
  std::vector<VectorXd> mu_alpha;
  std::vector<MatrixXd> Sigma_alpha;
  std::vector<MatrixXd> W;
  int iterations = 0;
  bool converged = false;
};

// Linear mixed model cycle with known sigma2 and D and a flat prior on the
// fixed effects. With the optimal W the cycle is exact after one pass.
LmmFit lmm_fit(const std::vector<LmmCluster>& clusters, double sigma2,
               const MatrixXd& D, LmmWPolicy policy, double tol = 1e-10,
               int max_iter = 200);

ClusterWorkspace refresh_workspace(const VariationalState& state,
                                   const ClusterData& cluster, Family family,
                                   const QuadratureRule& rule, int cluster_index);

void update_beta(VariationalState& state, const Dataset& ds,
                 const PriorSpec& prior,
                 const std::vector<ClusterWorkspace>& workspaces,
                 double damping = 1.0);

void update_alpha(VariationalState& state, const Dataset& ds, int i,
                  const ClusterWorkspace& workspace, double damping = 1.0);

void update_Sq(VariationalState& state, const Dataset& ds,
               const PriorSpec& prior);

// Simplified closed-form lower bound; valid immediately after a full cycle.
double elbo(const VariationalState& state, const Dataset& ds,
            const PriorSpec& prior, const QuadratureRule& rule);

FitResult fit(const Dataset& ds, const PriorSpec& prior,
              Parametrization parametrization, const FitOptions& options,
              VariationalState init);

}  // namespace ncvb

#endif
