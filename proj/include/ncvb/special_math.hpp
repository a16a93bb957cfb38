// Special functions and quadrature: digamma, multivariate log-gamma,
// Gauss-Hermite rules and the adaptive univariate quadrature used for the
// logistic expectations B^{(r)}(mu, sigma).
#ifndef NCVB_SPECIAL_MATH_HPP
#define NCVB_SPECIAL_MATH_HPP

#include <Eigen/Dense>
#include <vector>

#include "ncvb/model.hpp"

namespace ncvb {

double digamma(double x);

// sum_{l=1}^r log Gamma((nu + 1 - l)/2) + r(r-1)/4 * log(pi)
double log_multigamma(double nu, int r);

struct QuadratureRule {
  int order = 0;
  VectorXd nodes;
  VectorXd weights;
};

// Golub-Welsch rule for the weight e^{-x^2}, exact on polynomials of degree
// 2m - 1. Valid for 1 <= m <= 100.
QuadratureRule gauss_hermite_rule(int m);

inline double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// b(x) = log(1 + e^x) and its first two derivatives.
double log1pexp(double x);
double b_deriv(int r_order, double x);

struct GhqRecentering {
  double mu_hat = 0.0;
  double sigma_hat = 1.0;
};

// Mode and curvature of log{ b^{(r)}(sigma x + mu) phi(x;0,1) }.
GhqRecentering ghq_recenter(int r_order, double mu, double sigma);

// B^{(r)}(mu, sigma) = int b^{(r)}(sigma x + mu) phi(x;0,1) dx via the
// recentred Gauss-Hermite sum. sigma = 0 returns b^{(r)}(mu) directly.
double adaptive_ghq_b(int r_order, double mu, double sigma,
                      const QuadratureRule& rule);

// Same integral evaluated with a caller-supplied recentering (so the mode
// search done once at r = 1 can be reused for r = 0 and r = 2).
double adaptive_ghq_b_at(int r_order, double mu, double sigma,
                         const QuadratureRule& rule,
                         const GhqRecentering& rec);

VectorXd vector_b_batch(int r_order, const VectorXd& mu, const VectorXd& sigma,
                        const QuadratureRule& rule);

// Cholesky-backed SPD helpers. Throw NumericalError on factorization failure.
Eigen::LLT<MatrixXd> spd_factor(const MatrixXd& A, const char* what);
MatrixXd spd_solve(const MatrixXd& A, const MatrixXd& B,
                   const char* what = "spd_solve");
double spd_logdet(const MatrixXd& A, const char* what = "spd_logdet");
MatrixXd spd_inverse(const MatrixXd& A, const char* what = "spd_inverse");
MatrixXd symmetrize(const MatrixXd& A);

}  // namespace ncvb

#endif
