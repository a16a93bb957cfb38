// Starting values: pooled GLM fit by IRLS, the data-driven inverse-Wishart
// prior scale, and assembly of the initial variational state.
#ifndef NCVB_INIT_HPP
#define NCVB_INIT_HPP

#include "ncvb/model.hpp"

namespace ncvb {

struct GlmFit {
  VectorXd beta_hat;                  // length p
  std::vector<VectorXd> weights;      // diagonal of M_i(beta_hat)
  std::vector<VectorXd> eta_hat;      // fitted linear predictors (no offset)
  bool converged = false;
  std::vector<double> deviance_trace;
  bool ridged = false;  // separation fallback engaged
};

// Pooled GLM with the random effects set to zero. Design column order is
// [XR  1 x^{G1}  XG2] matching the beta layout used everywhere else.
GlmFit glm_irls(const Dataset& ds, double tol = 1e-10, int max_iter = 100);

struct IwPrior {
  double nu;
  MatrixXd S;
};

// nu = r, S = r * R_hat with R_hat = c (n^{-1} sum XR^T M_i XR)^{-1}.
IwPrior prior_scale_from_data(const Dataset& ds, const GlmFit& fit,
                              double c = 1.0);

VariationalState init_state(const Dataset& ds, const PriorSpec& prior,
                            const GlmFit& fit, Parametrization parametrization);

}  // namespace ncvb

#endif
