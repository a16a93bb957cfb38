#include <doctest.h>

#include <cmath>
#include <random>

#include "ncvb/special_math.hpp"
#include "oracles.hpp"

using namespace ncvb;

TEST_CASE("digamma matches frozen values and the recurrence") {
  CHECK(digamma(1.0) == doctest::Approx(-0.57721566490153286).epsilon(1e-12));
  CHECK(digamma(0.5) == doctest::Approx(-1.9635100260214235).epsilon(1e-12));
  CHECK(digamma(10.0) == doctest::Approx(2.2517525890667211).epsilon(1e-12));
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> unif(0.1, 20.0);
  for (int t = 0; t < 50; ++t) {
    const double x = unif(gen);
    CHECK(digamma(x + 1.0) ==
          doctest::Approx(digamma(x) + 1.0 / x).epsilon(1e-11));
  }
}

TEST_CASE("log_multigamma reduces to lgamma and satisfies the r=2 identity") {
  CHECK(log_multigamma(7.0, 1) ==
        doctest::Approx(std::lgamma(3.5)).epsilon(1e-13));
  // Gamma_2(a) = pi^{1/2} Gamma(a) Gamma(a - 1/2), with a = nu/2.
  for (double nu : {3.0, 5.5, 12.0}) {
    const double a = 0.5 * nu;
    const double expect =
        0.5 * std::log(M_PI) + std::lgamma(a) + std::lgamma(a - 0.5);
    CHECK(log_multigamma(nu, 2) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("gauss_hermite_rule integrates monomials exactly up to degree 2m-1") {
  // int x^{2k} e^{-x^2} dx = (2k-1)!! sqrt(pi) / 2^k
  for (int m = 1; m <= 20; ++m) {
    const QuadratureRule rule = gauss_hermite_rule(m);
    REQUIRE(rule.nodes.size() == m);
    CHECK(rule.weights.sum() == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-13));
    double moment_exact = std::sqrt(M_PI);
    for (int k = 1; 2 * k <= 2 * m - 1; ++k) {
      moment_exact *= (2.0 * k - 1.0) / 2.0;
      const double got =
          (rule.weights.array() * rule.nodes.array().pow(2 * k)).sum();
      CHECK(got == doctest::Approx(moment_exact).epsilon(1e-10));
    }
    // Odd moments vanish by symmetry.
    const double odd = (rule.weights.array() * rule.nodes.array().pow(3)).sum();
    CHECK(std::abs(odd) < 1e-12);
  }
}

TEST_CASE("logistic derivatives at zero and tails") {
  CHECK(b_deriv(0, 0.0) == doctest::Approx(std::log(2.0)));
  CHECK(b_deriv(1, 0.0) == doctest::Approx(0.5));
  CHECK(b_deriv(2, 0.0) == doctest::Approx(0.25));
  CHECK(log1pexp(-800.0) == doctest::Approx(0.0));
  CHECK(log1pexp(800.0) == doctest::Approx(800.0));
  CHECK(log1pexp(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  // b'' = b'(1 - b') everywhere.
  for (double x : {-30.0, -3.0, 0.7, 12.0, 35.0}) {
    const double s = b_deriv(1, x);
    CHECK(b_deriv(2, x) == doctest::Approx(s * (1.0 - s)).epsilon(1e-12));
  }
}

TEST_CASE("recentering finds the integrand mode") {
  for (int r_order : {0, 1, 2}) {
    for (double mu : {-4.0, -1.0, 0.0, 2.5}) {
      for (double sigma : {0.3, 1.0, 3.0}) {
        const GhqRecentering rec = ghq_recenter(r_order, mu, sigma);
        auto logf = [&](double x) {
          return std::log(b_deriv(r_order, sigma * x + mu)) - 0.5 * x * x;
        };
        const double h = 1e-5;
        const double d1 = (logf(rec.mu_hat + h) - logf(rec.mu_hat - h)) / (2 * h);
        CHECK(std::abs(d1) < 1e-4);
        CHECK(rec.sigma_hat > 0.0);
        CHECK(rec.sigma_hat <= 1.0 + 1e-12);  // curvature is at least 1
      }
    }
  }
}

TEST_CASE("adaptive quadrature matches dense trapezoid integration") {
  const QuadratureRule rule = gauss_hermite_rule(10);
  for (int r_order : {0, 1, 2}) {
    for (double mu : {-5.0, -2.0, 0.0, 1.5, 4.0}) {
      for (double sigma : {0.1, 0.8, 2.0, 5.0}) {
        const double got = adaptive_ghq_b(r_order, mu, sigma, rule);
        const double want = oracle::trapezoid_b(r_order, mu, sigma);
        CHECK(got == doctest::Approx(want).epsilon(1e-6).scale(1.0));
      }
    }
  }
}

TEST_CASE("degenerate quadrature returns the plain derivative") {
  const QuadratureRule rule = gauss_hermite_rule(10);
  for (int r_order : {0, 1, 2})
    CHECK(adaptive_ghq_b(r_order, 1.3, 0.0, rule) ==
          doctest::Approx(b_deriv(r_order, 1.3)));
}

TEST_CASE("batched quadrature equals the scalar path") {
  const QuadratureRule rule = gauss_hermite_rule(10);
  VectorXd mu(4), sigma(4);
  mu << -2.0, 0.0, 0.5, 3.0;
  sigma << 0.2, 0.0, 1.0, 2.5;
  for (int r_order : {0, 1, 2}) {
    const VectorXd got = vector_b_batch(r_order, mu, sigma, rule);
    for (int j = 0; j < 4; ++j) {
      // The batch path reuses one recentering across derivative orders, so
      // it is a slightly different approximation of the same integral.
      CHECK(got(j) ==
            doctest::Approx(adaptive_ghq_b(r_order, mu(j), sigma(j), rule))
                .epsilon(1e-4));
      if (sigma(j) > 0.0)
        CHECK(got(j) == doctest::Approx(oracle::trapezoid_b(
                                            r_order, mu(j), sigma(j)))
                            .epsilon(1e-4).scale(1.0));
    }
  }
}

TEST_CASE("quadrature output respects the basic bounds") {
  const QuadratureRule rule = gauss_hermite_rule(10);
  for (double mu : {-3.0, 0.0, 2.0}) {
    for (double sigma : {0.5, 2.0}) {
      const double b1 = adaptive_ghq_b(1, mu, sigma, rule);
      const double b2 = adaptive_ghq_b(2, mu, sigma, rule);
      CHECK(b1 > 0.0);
      CHECK(b1 < 1.0);
      CHECK(b2 > 0.0);
      CHECK(b2 <= 0.25 + 1e-12);
      CHECK(adaptive_ghq_b(0, mu, sigma, rule) > 0.0);
    }
  }
}

TEST_CASE("SPD helpers invert, solve and reject indefinite input") {
  MatrixXd A(2, 2);
  A << 4.0, 1.0, 1.0, 3.0;
  const MatrixXd Ainv = spd_inverse(A, "test");
  CHECK((A * Ainv - MatrixXd::Identity(2, 2)).norm() < 1e-12);
  CHECK(spd_logdet(A, "test") == doctest::Approx(std::log(11.0)).epsilon(1e-12));
  MatrixXd B(2, 2);
  B << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3, -1
  CHECK_THROWS_AS(spd_factor(B, "test"), NumericalError);
  const MatrixXd rhs = MatrixXd::Random(2, 3);
  CHECK((A * spd_solve(A, rhs, "test") - rhs).norm() < 1e-12);
}
