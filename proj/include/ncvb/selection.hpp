// Lower-bound model comparison and the simulation-study harness.
#ifndef NCVB_SELECTION_HPP
#define NCVB_SELECTION_HPP

#include <random>
#include <string>
#include <vector>

#include "ncvb/model.hpp"

namespace ncvb {

struct ModelComparisonEntry {
  std::string label;
  double elbo = 0.0;
  bool converged = false;
  bool failed = false;
  double probability = 0.0;
};

struct ModelComparison {
  std::vector<ModelComparisonEntry> entries;  // sorted by descending elbo
};

// Posterior model probabilities proportional to exp(elbo) under equal model
// priors, computed with log-sum-exp. All fits must carry the same dataset
// hash.
ModelComparison compare_models(const std::vector<std::string>& labels,
                               const std::vector<FitResult>& fits);

enum class SimDesignTag { PoissonIntercept, LogisticIntercept };

struct SimDesign {
  SimDesignTag tag = SimDesignTag::PoissonIntercept;
  int replicates = 100;
  std::uint64_t seed = 1;
  // Overrides for selection experiments; defaults reproduce the random
  // intercept designs (beta0 = beta1 = -0.5, sigma = 0.1, n = 100, n_i = 2
  // for Poisson; beta0 = 0, beta1 = 5, sigma = sqrt(1.5), n = 50, n_i = 8
  // for logistic).
  double beta0 = 0.0, beta1 = 0.0, sigma = 0.0;
  bool use_default_truth = true;
};

SimDesign make_design(SimDesignTag tag, int replicates, std::uint64_t seed);

std::vector<Dataset> simulate_design(const SimDesign& design);

struct RmseRow {
  std::string name;
  double mean = 0.0;
  double sd_mean = 0.0;
  double rmse = 0.0;
};

// Per-parameter mean of posterior means, mean posterior SD, and RMSE against
// the supplied reference values (one per parameter, recycled over fits).
std::vector<RmseRow> rmse_report(const std::vector<FitResult>& fits,
                                 const std::vector<double>& reference);

std::string comparison_to_csv(const ModelComparison& cmp);
std::string rmse_to_csv(const std::vector<RmseRow>& rows);

}  // namespace ncvb

#endif
