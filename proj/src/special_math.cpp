#include "ncvb/special_math.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace ncvb {

double digamma(double x) {
  if (!(x > 0.0)) throw NumericalError("digamma: argument must be positive");
  double result = 0.0;
  // Shift into the asymptotic regime, then the standard series in 1/x^2.
  while (x < 8.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 -
                            inv2 * (1.0 / 252.0 -
                                    inv2 * (1.0 / 240.0 - inv2 / 132.0))));
  return result;
}

double log_multigamma(double nu, int r) {
  if (!(nu > r - 1))
    throw NumericalError("log_multigamma: need nu > r - 1");
  double sum = 0.25 * r * (r - 1) * std::log(M_PI);
  for (int l = 1; l <= r; ++l) sum += std::lgamma(0.5 * (nu + 1 - l));
  return sum;
}

QuadratureRule gauss_hermite_rule(int m) {
  if (m < 1 || m > 100)
    throw NumericalError("gauss_hermite_rule: order must be in [1, 100]");
  // Golub-Welsch on the symmetric Jacobi matrix of the Hermite recurrence.
  MatrixXd J = MatrixXd::Zero(m, m);
  for (int k = 1; k < m; ++k) {
    const double off = std::sqrt(0.5 * k);
    J(k, k - 1) = off;
    J(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(J, Eigen::EigenvaluesOnly);
  QuadratureRule rule;
  rule.order = m;
  rule.nodes = es.eigenvalues();
  rule.weights = VectorXd(m);
  // Weights from the orthonormal-polynomial Christoffel sum rather than the
  // eigenvector first components: the tail weights are exponentially small
  // and need relative (not absolute) accuracy.
  for (int k = 0; k < m; ++k) {
    const double x = rule.nodes(k);
    double pm1 = 0.0, p = std::pow(M_PI, -0.25);
    double sum = p * p;
    for (int j = 0; j + 1 < m; ++j) {
      const double pnext =
          (x * p - std::sqrt(0.5 * j) * pm1) / std::sqrt(0.5 * (j + 1));
      pm1 = p;
      p = pnext;
      sum += p * p;
    }
    rule.weights(k) = 1.0 / sum;
  }
  // Enforce exact symmetry of the node set about zero.
  for (int k = 0; k < m / 2; ++k) {
    const double x = 0.5 * (rule.nodes(m - 1 - k) - rule.nodes(k));
    rule.nodes(k) = -x;
    rule.nodes(m - 1 - k) = x;
    const double w = 0.5 * (rule.weights(k) + rule.weights(m - 1 - k));
    rule.weights(k) = w;
    rule.weights(m - 1 - k) = w;
  }
  if (m % 2 == 1) rule.nodes(m / 2) = 0.0;
  return rule;
}

double log1pexp(double x) {
  if (x <= -37.0) return std::exp(x);
  if (x <= 18.0) return std::log1p(std::exp(x));
  if (x <= 33.3) return x + std::exp(-x);
  return x;
}

double b_deriv(int r_order, double x) {
  switch (r_order) {
    case 0: return log1pexp(x);
    case 1: return logistic(x);
    case 2: {
      const double s = logistic(x);
      return s * (1.0 - s);
    }
    default:
      throw NumericalError("b_deriv: order must be 0, 1 or 2");
  }
}

namespace {

// First and second derivatives of log b^{(r)}(sigma x + mu) w.r.t. x.
void log_b_derivs(int r_order, double mu, double sigma, double x, double& d1,
                  double& d2) {
  const double u = sigma * x + mu;
  const double s = logistic(u);
  switch (r_order) {
    case 0: {
      const double b = log1pexp(u);
      const double ratio = s / b;  // b > 0 always
      d1 = sigma * ratio;
      d2 = sigma * sigma * (s * (1.0 - s) / b - ratio * ratio);
      break;
    }
    case 1:
      d1 = sigma * (1.0 - s);
      d2 = -sigma * sigma * s * (1.0 - s);
      break;
    case 2:
      d1 = sigma * (1.0 - 2.0 * s);
      d2 = -2.0 * sigma * sigma * s * (1.0 - s);
      break;
    default:
      throw NumericalError("ghq_recenter: order must be 0, 1 or 2");
  }
}

}  // namespace

GhqRecentering ghq_recenter(int r_order, double mu, double sigma) {
  // Maximize g(x) = log b^{(r)}(sigma x + mu) - x^2/2. g is concave with
  // g'' <= -1, so Newton from 0 converges; bisection is kept as a fallback.
  double x = 0.0;
  bool ok = false;
  for (int it = 0; it < 50; ++it) {
    double d1, d2;
    log_b_derivs(r_order, mu, sigma, x, d1, d2);
    const double g1 = d1 - x;
    const double g2 = d2 - 1.0;
    const double step = g1 / g2;
    x -= step;
    if (std::abs(step) < 1e-10) {
      ok = true;
      break;
    }
  }
  if (!ok || !std::isfinite(x)) {
    // Bracket the root of g' by doubling, then bisect.
    auto gprime = [&](double t) {
      double d1, d2;
      log_b_derivs(r_order, mu, sigma, t, d1, d2);
      return d1 - t;
    };
    double lo = -1.0, hi = 1.0;
    for (int it = 0; it < 60 && gprime(lo) < 0.0; ++it) lo *= 2.0;
    for (int it = 0; it < 60 && gprime(hi) > 0.0; ++it) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (gprime(mid) > 0.0)
        lo = mid;
      else
        hi = mid;
    }
    x = 0.5 * (lo + hi);
  }
  double d1, d2;
  log_b_derivs(r_order, mu, sigma, x, d1, d2);
  GhqRecentering rec;
  rec.mu_hat = x;
  rec.sigma_hat = 1.0 / std::sqrt(1.0 - d2);
  return rec;
}

namespace {

// The recentred Gauss-Hermite sum degrades once sigma gets large: the
// logistic regime switch then spans many quadrature widths and a degree-19
// polynomial cannot track it (error around 1e-2 at sigma = 5). Above the
// threshold below we instead split off the exact piecewise-linear part of b
// and integrate the remaining exponentially-decaying smooth remainder over
// the half line with composite Gauss-Legendre panels.
constexpr double kSplitSigma = 1.5;

const Eigen::ArrayXd& legendre_nodes() {
  static const Eigen::ArrayXd nodes = [] {
    const int m = 10;
    MatrixXd J = MatrixXd::Zero(m, m);
    for (int k = 1; k < m; ++k) {
      const double off = k / std::sqrt(4.0 * k * k - 1.0);
      J(k, k - 1) = off;
      J(k - 1, k) = off;
    }
    return Eigen::ArrayXd(
        Eigen::SelfAdjointEigenSolver<MatrixXd>(J, Eigen::EigenvaluesOnly)
            .eigenvalues());
  }();
  return nodes;
}

const Eigen::ArrayXd& legendre_weights() {
  static const Eigen::ArrayXd weights = [] {
    const Eigen::ArrayXd& x = legendre_nodes();
    Eigen::ArrayXd w(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      // Christoffel sum over orthonormal Legendre values, total mass 2.
      double pm1 = 0.0, p = std::sqrt(0.5), sum = p * p;
      for (int j = 0; j + 1 < x.size(); ++j) {
        const double aj = (j + 1.0) / std::sqrt((2.0 * j + 1.0) * (2.0 * j + 3.0));
        const double ajm1 = j == 0 ? 0.0 : j / std::sqrt(4.0 * j * j - 1.0);
        const double pnext = (x(k) * p - ajm1 * pm1) / aj;
        pm1 = p;
        p = pnext;
        sum += p * p;
      }
      w(k) = 1.0 / sum;
    }
    return w;
  }();
  return weights;
}

double normal_pdf(double u, double mu, double sigma) {
  const double z = (u - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Remainder of b^{(r)} after removing the exact part, folded onto u >= 0.
// All three integrands are smooth there and bounded by e^{-u}.
double folded_remainder(int r_order, double u, double mu, double sigma) {
  const double np = normal_pdf(u, mu, sigma);
  const double nm = normal_pdf(-u, mu, sigma);
  switch (r_order) {
    case 0: return log1pexp(-u) * (np + nm);
    case 1: return logistic(-u) * (nm - np);
    default: return b_deriv(2, u) * (np + nm);
  }
}

double split_b(int r_order, double mu, double sigma) {
  const double z = mu / sigma;
  double value = 0.0;
  if (r_order == 0)
    value = mu * normal_cdf(z) + sigma * std::exp(-0.5 * z * z) /
                                     std::sqrt(2.0 * M_PI);
  else if (r_order == 1)
    value = normal_cdf(z);
  // Composite panels out to where both the e^{-u} decay and the Gaussian
  // factor are negligible.
  const double upper = std::min(45.0, std::abs(mu) + 10.0 * sigma);
  const int panels = std::max(1, static_cast<int>(std::ceil(upper / 3.0)));
  const double h = upper / panels;
  const Eigen::ArrayXd& xs = legendre_nodes();
  const Eigen::ArrayXd& ws = legendre_weights();
  double tail = 0.0;
  for (int s = 0; s < panels; ++s) {
    const double mid = (s + 0.5) * h;
    for (Eigen::Index k = 0; k < xs.size(); ++k)
      tail += 0.5 * h * ws(k) *
              folded_remainder(r_order, mid + 0.5 * h * xs(k), mu, sigma);
  }
  return value + tail;
}

}  // namespace

double adaptive_ghq_b_at(int r_order, double mu, double sigma,
                         const QuadratureRule& rule,
                         const GhqRecentering& rec) {
  if (sigma == 0.0) return b_deriv(r_order, mu);
  if (sigma > kSplitSigma) return split_b(r_order, mu, sigma);
  const double sqrt2 = std::sqrt(2.0);
  const double inv_sqrt_2pi = 0.3989422804014326779;
  double sum = 0.0;
  for (int k = 0; k < rule.order; ++k) {
    const double xk = rule.nodes(k);
    const double t = rec.mu_hat + sqrt2 * rec.sigma_hat * xk;
    const double wexp = std::exp(std::log(rule.weights(k)) + xk * xk);
    sum += wexp * b_deriv(r_order, sigma * t + mu) *
           inv_sqrt_2pi * std::exp(-0.5 * t * t);
  }
  const double value = sqrt2 * rec.sigma_hat * sum;
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << "adaptive_ghq_b: non-finite result at r=" << r_order << " mu=" << mu
       << " sigma=" << sigma;
    throw NumericalError(os.str());
  }
  return value;
}

double adaptive_ghq_b(int r_order, double mu, double sigma,
                      const QuadratureRule& rule) {
  if (sigma < 0.0) throw NumericalError("adaptive_ghq_b: sigma must be >= 0");
  if (sigma == 0.0) return b_deriv(r_order, mu);
  return adaptive_ghq_b_at(r_order, mu, sigma, rule,
                           ghq_recenter(r_order, mu, sigma));
}

VectorXd vector_b_batch(int r_order, const VectorXd& mu, const VectorXd& sigma,
                        const QuadratureRule& rule) {
  if (mu.size() != sigma.size())
    throw ShapeError("vector_b_batch: mu and sigma lengths differ");
  VectorXd out(mu.size());
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    try {
      // Recentering is shared across r-orders: computed for r = 1 and reused.
      if (sigma(j) == 0.0) {
        out(j) = b_deriv(r_order, mu(j));
      } else {
        const GhqRecentering rec = ghq_recenter(1, mu(j), sigma(j));
        out(j) = adaptive_ghq_b_at(r_order, mu(j), sigma(j), rule, rec);
      }
    } catch (const NumericalError& e) {
      throw NumericalError("vector_b_batch: element " + std::to_string(j) +
                           ": " + e.what());
    }
  }
  return out;
}

Eigen::LLT<MatrixXd> spd_factor(const MatrixXd& A, const char* what) {
  Eigen::LLT<MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(A),
                                               Eigen::EigenvaluesOnly);
    std::ostringstream os;
    os << what << ": matrix is not positive definite (smallest eigenvalue "
       << es.eigenvalues().minCoeff() << ")";
    throw NumericalError(os.str());
  }
  return llt;
}

MatrixXd spd_solve(const MatrixXd& A, const MatrixXd& B, const char* what) {
  return spd_factor(A, what).solve(B);
}

double spd_logdet(const MatrixXd& A, const char* what) {
  const auto llt = spd_factor(A, what);
  return 2.0 * MatrixXd(llt.matrixL()).diagonal().array().log().sum();
}

MatrixXd spd_inverse(const MatrixXd& A, const char* what) {
  return spd_factor(A, what).solve(MatrixXd::Identity(A.rows(), A.cols()));
}

MatrixXd symmetrize(const MatrixXd& A) { return 0.5 * (A + A.transpose()); }

}  // namespace ncvb
