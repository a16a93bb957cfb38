#include "ncvb/init.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

#include "ncvb/engine.hpp"
#include "ncvb/special_math.hpp"

namespace ncvb {

namespace {

// Pooled design with the beta column order [XR  1 x^{G1}  XG2].
MatrixXd pooled_design(const Dataset& ds) {
  const int p = ds.p();
  MatrixXd X(ds.n_obs(), p);
  Eigen::Index row = 0;
  for (const auto& c : ds.clusters) {
    const Eigen::Index ni = c.size();
    X.block(row, 0, ni, ds.r) = c.XR;
    for (int k = 0; k < ds.g1; ++k)
      X.block(row, ds.r + k, ni, 1).setConstant(c.xG1(k));
    if (ds.g2 > 0) X.block(row, ds.r + ds.g1, ni, ds.g2) = c.XG2;
    row += ni;
  }
  return X;
}

}  // namespace

GlmFit glm_irls(const Dataset& ds, double tol, int max_iter) {
  const int p = ds.p();
  const MatrixXd X = pooled_design(ds);
  VectorXd y(ds.n_obs()), offset(ds.n_obs());
  {
    Eigen::Index row = 0;
    for (const auto& c : ds.clusters) {
      y.segment(row, c.size()) = c.y;
      offset.segment(row, c.size()) = c.offset;
      row += c.size();
    }
  }

  {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      std::ostringstream os;
      os << "glm_irls: pooled design is rank deficient (rank " << qr.rank()
         << " of " << p << "); check for collinear columns";
      throw DataError(os.str());
    }
  }

  GlmFit fit;
  fit.beta_hat = VectorXd::Zero(p);
  double ridge = 0.0;
  double prev_dev = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iter; ++iter) {
    const VectorXd eta = X * fit.beta_hat;
    VectorXd mu(y.size()), w(y.size());
    double dev = 0.0;
    for (Eigen::Index j = 0; j < y.size(); ++j) {
      if (ds.family == Family::Poisson) {
        mu(j) = offset(j) * std::exp(eta(j));
        w(j) = mu(j);
        dev += 2.0 * ((y(j) > 0 ? y(j) * std::log(y(j) / mu(j)) : 0.0) -
                      (y(j) - mu(j)));
      } else {
        mu(j) = logistic(eta(j));
        w(j) = std::max(mu(j) * (1.0 - mu(j)), 1e-12);
        dev -= 2.0 * (y(j) * std::log(std::max(mu(j), 1e-300)) +
                      (1.0 - y(j)) * std::log(std::max(1.0 - mu(j), 1e-300)));
      }
    }
    fit.deviance_trace.push_back(dev);
    if (iter > 0 && std::abs(dev - prev_dev) <=
                        tol * (std::abs(prev_dev) + 1e-12)) {
      fit.converged = true;
      break;
    }
    prev_dev = dev;

    const VectorXd z = eta + (y - mu).cwiseQuotient(w);
    MatrixXd A = X.transpose() * w.asDiagonal() * X;
    if (ridge > 0.0) A.diagonal().array() += ridge;
    fit.beta_hat = spd_solve(symmetrize(A), X.transpose() * (w.asDiagonal() * z),
                             "glm_irls: normal equations");
    if (ds.family == Family::Bernoulli && ridge == 0.0 &&
        fit.beta_hat.cwiseAbs().maxCoeff() > 30.0) {
      std::cerr << "glm_irls: possible separation (|beta| > 30); "
                   "refitting with ridge 1e-6\n";
      ridge = 1e-6;
      fit.ridged = true;
      fit.beta_hat.setZero();
      prev_dev = std::numeric_limits<double>::infinity();
    }
  }

  // Per-cluster weights and linear predictors at the final coefficients.
  Eigen::Index row = 0;
  for (const auto& c : ds.clusters) {
    const Eigen::Index ni = c.size();
    const VectorXd eta_i = X.middleRows(row, ni) * fit.beta_hat;
    VectorXd w_i(ni);
    for (Eigen::Index j = 0; j < ni; ++j) {
      if (ds.family == Family::Poisson) {
        w_i(j) = c.offset(j) * std::exp(eta_i(j));
      } else {
        const double m = logistic(eta_i(j));
        w_i(j) = m * (1.0 - m);
      }
    }
    fit.eta_hat.push_back(eta_i);
    fit.weights.push_back(w_i);
    row += ni;
  }
  return fit;
}

IwPrior prior_scale_from_data(const Dataset& ds, const GlmFit& fit, double c) {
  const int r = ds.r;
  MatrixXd info = MatrixXd::Zero(r, r);
  for (int i = 0; i < ds.n(); ++i)
    info.noalias() += ds.clusters[i].XR.transpose() *
                      fit.weights[i].asDiagonal() * ds.clusters[i].XR;
  info /= ds.n();
  const MatrixXd R_hat =
      c * spd_inverse(symmetrize(info), "prior_scale_from_data");
  return IwPrior{static_cast<double>(r), r * R_hat};
}

VariationalState init_state(const Dataset& ds, const PriorSpec& prior,
                            const GlmFit& fit,
                            Parametrization parametrization) {
  const int n = ds.n();
  const int r = ds.r;
  const MatrixXd R_hat = prior_scale_from_data(ds, fit, 1.0).S / r;

  VariationalState st;
  st.mu_beta = fit.beta_hat;
  {
    MatrixXd info = MatrixXd::Zero(ds.p(), ds.p());
    const MatrixXd X = pooled_design(ds);
    Eigen::Index row = 0;
    for (int i = 0; i < n; ++i) {
      const Eigen::Index ni = ds.clusters[i].size();
      info.noalias() += X.middleRows(row, ni).transpose() *
                        fit.weights[i].asDiagonal() * X.middleRows(row, ni);
      row += ni;
    }
    st.Sigma_beta = spd_inverse(symmetrize(info), "init_state: Sigma_beta");
  }
  st.nu_q = n + prior.nu;
  st.S_q = prior.S + n * R_hat;

  st.mu_alpha.resize(n);
  st.Sigma_alpha.assign(n, R_hat);
  st.W.resize(n);
  st.V.resize(n);
  st.W_tilde.resize(n);
  for (int i = 0; i < n; ++i) {
    switch (parametrization) {
      case Parametrization::Centered:
        st.W[i] = MatrixXd::Zero(r, r);
        break;
      case Parametrization::Noncentered:
        st.W[i] = MatrixXd::Identity(r, r);
        break;
      default:
        st.W[i] = compute_w_glmm(ds.family, ds.clusters[i], R_hat,
                                 fit.eta_hat[i]);
    }
    const ClusterDesign d =
        build_cluster_design(ds.clusters[i], ds.g1, ds.p(), st.W[i]);
    st.V[i] = d.V;
    st.W_tilde[i] = d.W_tilde;
    st.mu_alpha[i] = (MatrixXd::Identity(r, r) - st.W[i]) * d.C *
                     fit.beta_hat.head(r + ds.g1);
  }
  return st;
}

}  // namespace ncvb
