#include <doctest.h>

#include <algorithm>
#include <random>

#include "ncvb/init.hpp"
#include "ncvb/engine.hpp"
#include "test_util.hpp"

using namespace ncvb;

namespace {

MatrixXd pooled(const Dataset& ds) {
  MatrixXd X(ds.n_obs(), ds.p());
  Eigen::Index row = 0;
  for (const auto& c : ds.clusters) {
    X.block(row, 0, c.size(), ds.r) = c.XR;
    for (int k = 0; k < ds.g1; ++k)
      X.block(row, ds.r + k, c.size(), 1).setConstant(c.xG1(k));
    if (ds.g2 > 0) X.block(row, ds.r + ds.g1, c.size(), ds.g2) = c.XG2;
    row += c.size();
  }
  return X;
}

}  // namespace

TEST_CASE("pooled Poisson intercept fit is the log rate") {
  Dataset ds = testutil::make_toy(Family::Poisson, 6, 5, 0.4, 0.0, 0.0, 1);
  ds.g2 = 0;
  for (auto& c : ds.clusters) c.XG2.resize(c.size(), 0);
  const GlmFit fit = glm_irls(ds);
  CHECK(fit.converged);
  double total = 0.0, n_obs = 0.0;
  for (const auto& c : ds.clusters) {
    total += c.y.sum();
    n_obs += static_cast<double>(c.size());
  }
  CHECK(fit.beta_hat(0) == doctest::Approx(std::log(total / n_obs)).epsilon(1e-9));
}

TEST_CASE("pooled logistic intercept fit is the empirical logit") {
  Dataset ds = testutil::make_toy(Family::Bernoulli, 10, 6, 0.2, 0.0, 0.0, 2);
  ds.g2 = 0;
  for (auto& c : ds.clusters) c.XG2.resize(c.size(), 0);
  const GlmFit fit = glm_irls(ds);
  CHECK(fit.converged);
  double total = 0.0, n_obs = 0.0;
  for (const auto& c : ds.clusters) {
    total += c.y.sum();
    n_obs += static_cast<double>(c.size());
  }
  const double pbar = total / n_obs;
  CHECK(fit.beta_hat(0) ==
        doctest::Approx(std::log(pbar / (1.0 - pbar))).epsilon(1e-9));
}

TEST_CASE("pooled fit zeroes the score equations") {
  for (Family family : {Family::Poisson, Family::Bernoulli}) {
    const Dataset ds = testutil::make_toy(family, 12, 4, 0.3, -0.6, 0.3, 3);
    const GlmFit fit = glm_irls(ds);
    REQUIRE(fit.converged);
    const MatrixXd X = pooled(ds);
    VectorXd score = VectorXd::Zero(ds.p());
    Eigen::Index row = 0;
    for (const auto& c : ds.clusters) {
      const VectorXd eta = X.middleRows(row, c.size()) * fit.beta_hat;
      for (Eigen::Index j = 0; j < c.size(); ++j) {
        const double mu = family == Family::Poisson
                              ? c.offset(j) * std::exp(eta(j))
                              : logistic(eta(j));
        score += (c.y(j) - mu) * X.row(row + j).transpose();
      }
      row += c.size();
    }
    CHECK(score.cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("pooled fit rejects collinear designs") {
  Dataset ds = testutil::make_toy(Family::Poisson, 5, 4, 0.2, 0.1, 0.2, 4);
  ds.g2 = 2;
  for (auto& c : ds.clusters) {
    MatrixXd X2(c.size(), 2);
    X2.col(0) = c.XG2.col(0);
    X2.col(1) = 2.0 * c.XG2.col(0);  // exact copy of the first column
    c.XG2 = X2;
  }
  CHECK_THROWS_WITH_AS(glm_irls(ds), doctest::Contains("rank deficient"),
                       DataError);
}

TEST_CASE("data-driven scale matrix follows the weighted cross-product") {
  const Dataset ds = testutil::make_toy(Family::Poisson, 7, 3, 0.2, -0.1, 0.3, 5);
  const GlmFit fit = glm_irls(ds);
  const IwPrior iw = prior_scale_from_data(ds, fit);
  CHECK(iw.nu == doctest::Approx(1.0));
  double info = 0.0;
  for (int i = 0; i < ds.n(); ++i) info += fit.weights[i].sum();
  info /= ds.n();
  CHECK(iw.S(0, 0) == doctest::Approx(1.0 / info).epsilon(1e-10));
  // The multiplier scales linearly.
  const IwPrior iw3 = prior_scale_from_data(ds, fit, 3.0);
  CHECK(iw3.S(0, 0) == doctest::Approx(3.0 * iw.S(0, 0)).epsilon(1e-12));
}

TEST_CASE("initial state satisfies the structural invariants") {
  const Dataset ds = testutil::make_toy(Family::Bernoulli, 9, 5, 0.1, 0.8, 0.4, 6);
  const GlmFit glm = glm_irls(ds);
  const IwPrior iw = prior_scale_from_data(ds, glm);
  PriorSpec prior;
  prior.Sigma_beta = 1000.0 * MatrixXd::Identity(ds.p(), ds.p());
  prior.nu = iw.nu;
  prior.S = iw.S;
  for (Parametrization par :
       {Parametrization::Centered, Parametrization::Noncentered,
        Parametrization::PartialFixed}) {
    const VariationalState st = init_state(ds, prior, glm, par);
    CHECK(st.nu_q == doctest::Approx(ds.n() + prior.nu));
    CHECK((st.mu_beta - glm.beta_hat).norm() == 0.0);
    REQUIRE(static_cast<int>(st.W.size()) == ds.n());
    for (int i = 0; i < ds.n(); ++i) {
      if (par == Parametrization::Centered) CHECK(st.W[i].isZero());
      if (par == Parametrization::Noncentered) {
        CHECK(st.W[i].isIdentity(1e-14));
        CHECK(st.mu_alpha[i].isZero(1e-14));
      }
      if (par == Parametrization::PartialFixed) {
        CHECK(st.W[i](0, 0) > 0.0);
        CHECK(st.W[i](0, 0) < 1.0);
      }
      const ClusterDesign d =
          build_cluster_design(ds.clusters[i], ds.g1, ds.p(), st.W[i]);
      CHECK((st.V[i] - d.V).norm() == 0.0);
      CHECK((st.W_tilde[i] - d.W_tilde).norm() == 0.0);
      // mu_alpha reproduces the pooled predictor under the deviation split.
      const VectorXd expect = (MatrixXd::Identity(ds.r, ds.r) - st.W[i]) *
                              d.C * glm.beta_hat.head(ds.r + ds.g1);
      CHECK((st.mu_alpha[i] - expect).norm() < 1e-14);
    }
  }
}

TEST_CASE("pooled fit does not depend on cluster order") {
  const Dataset ds = testutil::make_toy(Family::Poisson, 8, 4, 0.2, -0.4, 0.3, 7);
  Dataset shuffled = ds;
  std::mt19937_64 gen(12);
  std::shuffle(shuffled.clusters.begin(), shuffled.clusters.end(), gen);
  const GlmFit a = glm_irls(ds);
  const GlmFit b = glm_irls(shuffled);
  CHECK((a.beta_hat - b.beta_hat).cwiseAbs().maxCoeff() < 1e-10);
}
