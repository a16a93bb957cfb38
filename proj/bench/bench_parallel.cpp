// Compares the serial reference path (deterministic mode) against the
// OpenMP-parallel per-cluster path on a larger synthetic dataset, and checks
// that the two produce identical bound traces.
#include <chrono>
#include <cstdio>
#include <random>

#include "ncvb/engine.hpp"
#include "ncvb/init.hpp"

using namespace ncvb;

namespace {

Dataset big_dataset(Family family, int n, int ni, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> norm;
  std::uniform_real_distribution<double> unif;
  Dataset ds;
  ds.family = family;
  ds.r = 1;
  ds.g1 = 0;
  ds.g2 = 2;
  for (int i = 0; i < n; ++i) {
    ClusterData c;
    c.y.resize(ni);
    c.XR = MatrixXd::Ones(ni, 1);
    c.xG1.resize(0);
    c.XG2.resize(ni, 2);
    c.offset = VectorXd::Ones(ni);
    const double u = 0.5 * norm(gen);
    for (int j = 0; j < ni; ++j) {
      c.XG2(j, 0) = static_cast<double>(j) / ni;
      c.XG2(j, 1) = norm(gen);
      const double eta = 0.2 - 0.4 * c.XG2(j, 0) + 0.3 * c.XG2(j, 1) + u;
      if (family == Family::Poisson) {
        const double lambda = std::exp(eta);
        std::poisson_distribution<int> pois(lambda);
        c.y(j) = pois(gen);
      } else {
        c.y(j) = unif(gen) < logistic(eta) ? 1.0 : 0.0;
      }
    }
    ds.clusters.push_back(std::move(c));
  }
  return ds;
}

FitResult timed_fit(const Dataset& ds, bool serial, double* secs) {
  const GlmFit glm = glm_irls(ds);
  const IwPrior iw = prior_scale_from_data(ds, glm);
  PriorSpec prior;
  prior.Sigma_beta = 1000.0 * MatrixXd::Identity(ds.p(), ds.p());
  prior.nu = iw.nu;
  prior.S = iw.S;
  FitOptions opts;
  opts.tolerance = 1e-7;
  opts.max_iterations = 200;
  opts.deterministic = serial;
  VariationalState st =
      init_state(ds, prior, glm, Parametrization::PartialFixed);
  const auto t0 = std::chrono::steady_clock::now();
  FitResult res =
      fit(ds, prior, Parametrization::PartialFixed, opts, std::move(st));
  *secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return res;
}

void run(const char* name, Family family, int n, int ni) {
  const Dataset ds = big_dataset(family, n, ni, 2024);
  double serial_s = 0.0, parallel_s = 0.0;
  const FitResult serial = timed_fit(ds, true, &serial_s);
  const FitResult parallel = timed_fit(ds, false, &parallel_s);
  double max_diff = 0.0;
  const std::size_t m =
      std::min(serial.elbo_trace.size(), parallel.elbo_trace.size());
  for (std::size_t t = 0; t < m; ++t)
    max_diff = std::max(max_diff, std::abs(serial.elbo_trace[t] -
                                           parallel.elbo_trace[t]));
  std::printf(
      "%-9s n=%d n_i=%d cycles=%d  serial %.3f s  parallel %.3f s  "
      "speedup %.2fx  max |trace diff| %.3g\n",
      name, n, ni, serial.iterations, serial_s, parallel_s,
      serial_s / parallel_s, max_diff);
}

}  // namespace

int main() {
  run("poisson", Family::Poisson, 4000, 8);
  run("logistic", Family::Bernoulli, 1500, 10);
  return 0;
}
