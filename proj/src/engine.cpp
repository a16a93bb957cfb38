#include "ncvb/engine.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ncvb {

MatrixXd compute_w_lmm(const MatrixXd& X, double sigma2, const MatrixXd& D) {
  if (!(sigma2 > 0.0)) throw NumericalError("compute_w_lmm: sigma2 must be > 0");
  const MatrixXd D_inv = spd_inverse(D, "compute_w_lmm: D");
  const MatrixXd A = X.transpose() * X / sigma2 + D_inv;
  return spd_solve(A, D_inv, "compute_w_lmm");
}

MatrixXd compute_w_glmm(Family family, const ClusterData& cluster,
                        const MatrixXd& D_est, const VectorXd& eta) {
  const int r = static_cast<int>(cluster.XR.cols());
  MatrixXd info = MatrixXd::Zero(r, r);
  for (Eigen::Index j = 0; j < cluster.size(); ++j) {
    double w;
    if (family == Family::Poisson) {
      w = cluster.y(j);  // response approximation to E_ij exp(eta_ij)
    } else {
      const double s = logistic(eta(j));
      w = s * (1.0 - s);
    }
    info.noalias() += w * cluster.XR.row(j).transpose() * cluster.XR.row(j);
  }
  try {
    const MatrixXd D_inv = spd_inverse(D_est, "compute_w_glmm: D");
    return spd_solve(info + D_inv, D_inv, "compute_w_glmm");
  } catch (const NumericalError& e) {
    std::cerr << "compute_w_glmm: falling back to noncentered W = I ("
              << e.what() << ")\n";
    return MatrixXd::Identity(r, r);
  }
}

LmmFit lmm_fit(const std::vector<LmmCluster>& clusters, double sigma2,
               const MatrixXd& D, LmmWPolicy policy, double tol,
               int max_iter) {
  const int n = static_cast<int>(clusters.size());
  if (n == 0) throw DataError("lmm_fit: no clusters");
  const int r = static_cast<int>(clusters[0].X.cols());
  const MatrixXd D_inv = spd_inverse(D, "lmm_fit: D");
  const MatrixXd I = MatrixXd::Identity(r, r);

  LmmFit out;
  out.W.resize(n);
  out.mu_alpha.assign(n, VectorXd::Zero(r));
  out.Sigma_alpha.resize(n);
  std::vector<MatrixXd> XtX(n), coupling(n);
  std::vector<VectorXd> Xty(n);
  for (int i = 0; i < n; ++i) {
    const auto& c = clusters[i];
    XtX[i] = c.X.transpose() * c.X;
    Xty[i] = c.X.transpose() * c.y;
    switch (policy) {
      case LmmWPolicy::Optimal:
        out.W[i] = compute_w_lmm(c.X, sigma2, D);
        break;
      case LmmWPolicy::Identity:
        out.W[i] = I;
        break;
      case LmmWPolicy::Zero:
        out.W[i] = MatrixXd::Zero(r, r);
        break;
    }
    // D^{-1}(I - W) - X^T X W / sigma2, the cross term of Algorithm 1.
    coupling[i] = D_inv * (I - out.W[i]) - XtX[i] * out.W[i] / sigma2;
    out.Sigma_alpha[i] = spd_inverse(D_inv + XtX[i] / sigma2, "lmm_fit: alpha");
  }

  MatrixXd prec = MatrixXd::Zero(r, r);
  for (int i = 0; i < n; ++i) {
    const MatrixXd IW = I - out.W[i];
    prec.noalias() += IW.transpose() * D_inv * IW +
                      out.W[i].transpose() * XtX[i] * out.W[i] / sigma2;
  }
  out.Sigma_beta = spd_inverse(symmetrize(prec), "lmm_fit: beta precision");

  out.mu_beta = VectorXd::Zero(r);
  for (int iter = 1; iter <= max_iter; ++iter) {
    VectorXd rhs = VectorXd::Zero(r);
    for (int i = 0; i < n; ++i)
      rhs.noalias() += out.W[i].transpose() * Xty[i] / sigma2 +
                       coupling[i].transpose() * out.mu_alpha[i];
    const VectorXd mu_beta_new = out.Sigma_beta * rhs;
    double change = (mu_beta_new - out.mu_beta).cwiseAbs().maxCoeff();
    out.mu_beta = mu_beta_new;
    for (int i = 0; i < n; ++i) {
      const VectorXd mu_new =
          out.Sigma_alpha[i] * (Xty[i] / sigma2 + coupling[i] * out.mu_beta);
      change = std::max(change,
                        (mu_new - out.mu_alpha[i]).cwiseAbs().maxCoeff());
      out.mu_alpha[i] = mu_new;
    }
    out.iterations = iter;
    if (change < tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

ClusterWorkspace refresh_workspace(const VariationalState& state,
                                   const ClusterData& cluster, Family family,
                                   const QuadratureRule& rule,
                                   int cluster_index) {
  const MatrixXd& V = state.V[cluster_index];
  const MatrixXd& XR = cluster.XR;
  const Eigen::Index ni = cluster.size();

  ClusterWorkspace ws;
  ws.mu = V * state.mu_beta + XR * state.mu_alpha[cluster_index];
  const VectorXd var =
      ((V * state.Sigma_beta).cwiseProduct(V).rowwise().sum() +
       (XR * state.Sigma_alpha[cluster_index]).cwiseProduct(XR).rowwise().sum());
  ws.sigma = var.cwiseMax(0.0).cwiseSqrt();

  if (family == Family::Poisson) {
    ws.kappa.resize(ni);
    for (Eigen::Index j = 0; j < ni; ++j) {
      const double ex = ws.mu(j) + 0.5 * var(j);
      if (ex > 700.0) {
        std::ostringstream os;
        os << "refresh_workspace: exp overflow in kappa at cluster "
           << cluster_index << " row " << j << " (exponent " << ex
           << "); consider rescaling covariates";
        throw NumericalError(os.str());
      }
      ws.kappa(j) = std::exp(ex);
    }
    ws.G = cluster.offset.cwiseProduct(ws.kappa);
    ws.F = ws.G;
  } else {
    ws.F.resize(ni);
    ws.G.resize(ni);
    ws.recenter.resize(ni);
    for (Eigen::Index j = 0; j < ni; ++j) {
      if (ws.sigma(j) == 0.0) {
        ws.G(j) = b_deriv(1, ws.mu(j));
        ws.F(j) = b_deriv(2, ws.mu(j));
      } else {
        ws.recenter[j] = ghq_recenter(1, ws.mu(j), ws.sigma(j));
        ws.G(j) = adaptive_ghq_b_at(1, ws.mu(j), ws.sigma(j), rule,
                                    ws.recenter[j]);
        ws.F(j) = adaptive_ghq_b_at(2, ws.mu(j), ws.sigma(j), rule,
                                    ws.recenter[j]);
      }
    }
  }
  return ws;
}

namespace {

MatrixXd invert_with_retry(const MatrixXd& A, const char* what) {
  try {
    return spd_inverse(A, what);
  } catch (const NumericalError&) {
    return spd_inverse(symmetrize(A), what);
  }
}

}  // namespace

void update_beta(VariationalState& state, const Dataset& ds,
                 const PriorSpec& prior,
                 const std::vector<ClusterWorkspace>& workspaces,
                 double damping) {
  const int p = ds.p();
  const MatrixXd Sigma_beta_prior_inv =
      spd_inverse(prior.Sigma_beta, "update_beta: prior Sigma_beta");
  const MatrixXd Sq_inv = spd_inverse(state.S_q, "update_beta: S_q");

  MatrixXd prec = Sigma_beta_prior_inv;
  VectorXd grad = -Sigma_beta_prior_inv * state.mu_beta;
  for (int i = 0; i < ds.n(); ++i) {
    const MatrixXd& Wt = state.W_tilde[i];
    const MatrixXd& V = state.V[i];
    const auto& ws = workspaces[i];
    prec.noalias() += state.nu_q * Wt.transpose() * Sq_inv * Wt;
    prec.noalias() += V.transpose() * ws.F.asDiagonal() * V;
    grad.noalias() += state.nu_q * Wt.transpose() *
                      (Sq_inv * (state.mu_alpha[i] - Wt * state.mu_beta));
    grad.noalias() += V.transpose() * (ds.clusters[i].y - ws.G);
  }
  state.Sigma_beta = invert_with_retry(symmetrize(prec), "update_beta");
  state.mu_beta += damping * (state.Sigma_beta * grad);
  (void)p;
}

void update_alpha(VariationalState& state, const Dataset& ds, int i,
                  const ClusterWorkspace& workspace, double damping) {
  const MatrixXd Sq_inv = spd_inverse(state.S_q, "update_alpha: S_q");
  const ClusterData& c = ds.clusters[i];
  const MatrixXd& XR = c.XR;
  MatrixXd prec = state.nu_q * Sq_inv;
  prec.noalias() += XR.transpose() * workspace.F.asDiagonal() * XR;
  state.Sigma_alpha[i] = invert_with_retry(symmetrize(prec), "update_alpha");
  VectorXd grad =
      -state.nu_q *
      (Sq_inv * (state.mu_alpha[i] - state.W_tilde[i] * state.mu_beta));
  grad.noalias() += XR.transpose() * (c.y - workspace.G);
  state.mu_alpha[i] += damping * (state.Sigma_alpha[i] * grad);
}

void update_Sq(VariationalState& state, const Dataset& ds,
               const PriorSpec& prior) {
  MatrixXd S = prior.S;
  for (int i = 0; i < ds.n(); ++i) {
    const VectorXd resid =
        state.mu_alpha[i] - state.W_tilde[i] * state.mu_beta;
    S.noalias() += resid * resid.transpose() + state.Sigma_alpha[i] +
                   state.W_tilde[i] * state.Sigma_beta *
                       state.W_tilde[i].transpose();
  }
  state.S_q = symmetrize(S);
  spd_factor(state.S_q, "update_Sq: result");  // SPD guard
}

namespace {

double s_y_cluster(const VariationalState& state, const Dataset& ds, int i,
                   const QuadratureRule& rule) {
  const ClusterData& c = ds.clusters[i];
  const MatrixXd& V = state.V[i];
  const VectorXd mu = V * state.mu_beta + c.XR * state.mu_alpha[i];
  if (ds.family == Family::Poisson) {
    const VectorXd var =
        (V * state.Sigma_beta).cwiseProduct(V).rowwise().sum() +
        (c.XR * state.Sigma_alpha[i]).cwiseProduct(c.XR).rowwise().sum();
    double s = 0.0;
    for (Eigen::Index j = 0; j < c.size(); ++j) {
      const double ex = mu(j) + 0.5 * var(j);
      if (ex > 700.0)
        throw NumericalError("elbo: exp overflow in kappa at cluster " +
                             std::to_string(i) + " row " + std::to_string(j));
      s += c.y(j) * (std::log(c.offset(j)) + mu(j)) -
           c.offset(j) * std::exp(ex) - std::lgamma(c.y(j) + 1.0);
    }
    return s;
  }
  const VectorXd var =
      (V * state.Sigma_beta).cwiseProduct(V).rowwise().sum() +
      (c.XR * state.Sigma_alpha[i]).cwiseProduct(c.XR).rowwise().sum();
  const VectorXd sigma = var.cwiseMax(0.0).cwiseSqrt();
  const VectorXd b0 = vector_b_batch(0, mu, sigma, rule);
  return c.y.dot(mu) - b0.sum();
}

}  // namespace

double elbo(const VariationalState& state, const Dataset& ds,
            const PriorSpec& prior, const QuadratureRule& rule) {
  const int n = ds.n();
  const int r = ds.r;
  const int p = ds.p();
  double L = 0.0;
  for (int i = 0; i < n; ++i) {
    L += s_y_cluster(state, ds, i, rule);
    L += 0.5 * spd_logdet(state.Sigma_alpha[i], "elbo: Sigma_alpha");
  }
  const MatrixXd prior_inv = spd_inverse(prior.Sigma_beta, "elbo: Sigma_beta");
  L += 0.5 * (spd_logdet(state.Sigma_beta, "elbo: Sigma_beta^q") -
              spd_logdet(prior.Sigma_beta, "elbo: Sigma_beta prior"));
  L -= 0.5 * (prior_inv * state.Sigma_beta).trace();
  L -= 0.5 * state.mu_beta.dot(prior_inv * state.mu_beta);
  L -= 0.5 * state.nu_q * spd_logdet(state.S_q, "elbo: S_q");
  L += 0.5 * prior.nu * spd_logdet(prior.S, "elbo: S");
  L += log_multigamma(state.nu_q, r);
  L -= log_multigamma(prior.nu, r);
  L += 0.5 * (p + n * r) + 0.5 * n * r * std::log(2.0);
  return L;
}

namespace {

void rebuild_design(VariationalState& state, const Dataset& ds, int i) {
  const ClusterDesign d =
      build_cluster_design(ds.clusters[i], ds.g1, ds.p(), state.W[i]);
  state.V[i] = d.V;
  state.W_tilde[i] = d.W_tilde;
}

template <typename F>
void parallel_over_clusters(int n, const FitOptions& opts, F&& body) {
  const bool serial = opts.deterministic || opts.threads == 1;
  if (serial) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr err;
#ifdef _OPENMP
  const int nt = opts.threads > 0 ? opts.threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
  for (int i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
#else
  for (int i = 0; i < n; ++i) body(i);
#endif
  if (err) std::rethrow_exception(err);
}

}  // namespace

FitResult fit(const Dataset& ds, const PriorSpec& prior,
              Parametrization parametrization, const FitOptions& options,
              VariationalState init) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = ds.n();
  const int r = ds.r;
  FitResult res;
  res.state = std::move(init);
  res.dataset_hash = ds.response_hash();
  VariationalState& st = res.state;
  if (st.nu_q != n + prior.nu)
    throw NumericalError("fit: state violates nu_q = n + nu");

  const QuadratureRule rule = gauss_hermite_rule(options.quad_points);
  std::vector<ClusterWorkspace> ws(n);
  double prev_elbo = 0.0;

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    try {
      if (parametrization == Parametrization::PartialAdaptive) {
        const MatrixXd D_est = st.S_q / (st.nu_q - r - 1);
        parallel_over_clusters(n, options, [&](int i) {
          const VectorXd eta =
              st.V[i] * st.mu_beta + ds.clusters[i].XR * st.mu_alpha[i];
          const MatrixXd W_new =
              compute_w_glmm(ds.family, ds.clusters[i], D_est, eta);
          // Keep the implied posterior mean of alpha_i unchanged under the
          // reparametrization alpha_tilde = alpha - W C beta^{RG1}.
          const ClusterDesign d = build_cluster_design(ds.clusters[i], ds.g1,
                                                       ds.p(), W_new);
          st.mu_alpha[i] += (st.W[i] - W_new) * d.C *
                            st.mu_beta.head(r + ds.g1);
          st.W[i] = W_new;
          st.V[i] = d.V;
          st.W_tilde[i] = d.W_tilde;
        });
      }

      parallel_over_clusters(n, options, [&](int i) {
        ws[i] = refresh_workspace(st, ds.clusters[i], ds.family, rule, i);
      });
      update_beta(st, ds, prior, ws, options.damping);

      parallel_over_clusters(n, options, [&](int i) {
        ws[i] = refresh_workspace(st, ds.clusters[i], ds.family, rule, i);
        update_alpha(st, ds, i, ws[i], options.damping);
      });

      update_Sq(st, ds, prior);

      const double L = elbo(st, ds, prior, rule);
      res.elbo_trace.push_back(L);
      res.iterations = iter;
      if (iter > 1) {
        if (options.elbo_check == ElboCheck::Strict && L < prev_elbo &&
            (prev_elbo - L) > 100.0 * options.tolerance * std::abs(prev_elbo))
          throw NumericalError(
              "fit: lower bound decreased under strict monitoring at cycle " +
              std::to_string(iter));
        if (std::abs(L - prev_elbo) <
            options.tolerance * std::abs(prev_elbo)) {
          res.converged = true;
          prev_elbo = L;
          break;
        }
      }
      prev_elbo = L;
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << e.what() << " [cycle " << iter << ", elbo trace length "
         << res.elbo_trace.size() << ", |mu_beta| "
         << st.mu_beta.norm() << "]";
      throw NumericalError(os.str());
    }
  }

  // Posterior summaries.
  for (int k = 0; k < ds.p(); ++k) {
    ParameterSummary s;
    s.name = "beta_" + std::to_string(k);
    s.mean = st.mu_beta(k);
    s.sd = std::sqrt(st.Sigma_beta(k, k));
    res.fixed_effects.push_back(s);
  }
  for (int k = 0; k < r; ++k)
    res.random_effect_sd.push_back(
        random_effect_sd_summary(st.nu_q, st.S_q, r, k));
  res.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return res;
}

}  // namespace ncvb
