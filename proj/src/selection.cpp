#include "ncvb/selection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ncvb/special_math.hpp"

namespace ncvb {

ModelComparison compare_models(const std::vector<std::string>& labels,
                               const std::vector<FitResult>& fits) {
  if (fits.size() < 2)
    throw DataError("compare_models: need at least two fits");
  if (labels.size() != fits.size())
    throw DataError("compare_models: labels/fits length mismatch");
  std::uint64_t hash = 0;
  bool have_hash = false;
  for (const auto& f : fits) {
    if (f.dataset_hash == 0) continue;  // failed fit placeholder
    if (!have_hash) {
      hash = f.dataset_hash;
      have_hash = true;
    } else if (f.dataset_hash != hash) {
      throw DataError("compare_models: fits come from different datasets");
    }
  }

  ModelComparison cmp;
  double max_elbo = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fits.size(); ++i) {
    ModelComparisonEntry e;
    e.label = labels[i];
    e.failed = fits[i].dataset_hash == 0;
    e.converged = fits[i].converged;
    e.elbo = e.failed ? -std::numeric_limits<double>::infinity()
                      : fits[i].elbo_trace.back();
    if (!e.failed) max_elbo = std::max(max_elbo, e.elbo);
    cmp.entries.push_back(e);
  }
  double denom = 0.0;
  for (const auto& e : cmp.entries)
    if (!e.failed) denom += std::exp(e.elbo - max_elbo);
  for (auto& e : cmp.entries)
    e.probability = e.failed ? 0.0 : std::exp(e.elbo - max_elbo) / denom;
  std::stable_sort(cmp.entries.begin(), cmp.entries.end(),
                   [](const auto& a, const auto& b) { return a.elbo > b.elbo; });
  return cmp;
}

SimDesign make_design(SimDesignTag tag, int replicates, std::uint64_t seed) {
  SimDesign d;
  d.tag = tag;
  d.replicates = replicates;
  d.seed = seed;
  if (tag == SimDesignTag::PoissonIntercept) {
    d.beta0 = -0.5;
    d.beta1 = -0.5;
    d.sigma = 0.1;
  } else {
    d.beta0 = 0.0;
    d.beta1 = 5.0;
    d.sigma = std::sqrt(1.5);
  }
  return d;
}

namespace {

// Portable samplers so simulated datasets are byte-identical across
// standard libraries.
struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double uniform() { return (gen() >> 11) * 0x1.0p-53; }
  double normal() {
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  double poisson(double lambda) {
    // Inversion by cumulative product; fine for the small means used here.
    const double u = uniform();
    double pk = std::exp(-lambda), cdf = pk;
    double k = 0.0;
    while (u > cdf && k < 1e6) {
      k += 1.0;
      pk *= lambda / k;
      cdf += pk;
    }
    return k;
  }
};

}  // namespace

std::vector<Dataset> simulate_design(const SimDesign& design) {
  const bool poisson = design.tag == SimDesignTag::PoissonIntercept;
  const int n = poisson ? 100 : 50;
  const int ni = poisson ? 2 : 8;
  std::vector<Dataset> out;
  out.reserve(design.replicates);
  for (int rep = 0; rep < design.replicates; ++rep) {
    Rng rng(design.seed * 0x9e3779b97f4a7c15ULL + rep + 1);
    Dataset ds;
    ds.family = poisson ? Family::Poisson : Family::Bernoulli;
    ds.r = 1;
    ds.g1 = 0;
    ds.g2 = 1;
    for (int i = 0; i < n; ++i) {
      ClusterData c;
      c.y.resize(ni);
      c.XR = MatrixXd::Ones(ni, 1);
      c.xG1.resize(0);
      c.XG2.resize(ni, 1);
      c.offset = VectorXd::Ones(ni);
      const double u = design.sigma * rng.normal();
      for (int j = 0; j < ni; ++j) {
        const double x = poisson ? static_cast<double>(j)
                                 : static_cast<double>(j + 1) / 8.0;
        c.XG2(j, 0) = x;
        const double eta = design.beta0 + design.beta1 * x + u;
        if (poisson)
          c.y(j) = rng.poisson(std::exp(eta));
        else
          c.y(j) = rng.uniform() < logistic(eta) ? 1.0 : 0.0;
      }
      ds.clusters.push_back(std::move(c));
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<RmseRow> rmse_report(const std::vector<FitResult>& fits,
                                 const std::vector<double>& reference) {
  if (fits.empty()) throw DataError("rmse_report: no fits");
  std::vector<ParameterSummary> all0 = fits[0].fixed_effects;
  all0.insert(all0.end(), fits[0].random_effect_sd.begin(),
              fits[0].random_effect_sd.end());
  const std::size_t k = all0.size();
  if (reference.size() != k)
    throw DataError("rmse_report: reference length " +
                    std::to_string(reference.size()) + " != parameter count " +
                    std::to_string(k));
  std::vector<RmseRow> rows(k);
  for (std::size_t j = 0; j < k; ++j) rows[j].name = all0[j].name;
  for (const auto& f : fits) {
    std::vector<ParameterSummary> all = f.fixed_effects;
    all.insert(all.end(), f.random_effect_sd.begin(), f.random_effect_sd.end());
    if (all.size() != k) throw DataError("rmse_report: ragged fits");
    for (std::size_t j = 0; j < k; ++j) {
      rows[j].mean += all[j].mean;
      rows[j].sd_mean += all[j].sd;
      const double d = all[j].mean - reference[j];
      rows[j].rmse += d * d;
    }
  }
  const double m = static_cast<double>(fits.size());
  for (auto& row : rows) {
    row.mean /= m;
    row.sd_mean /= m;
    row.rmse = std::sqrt(row.rmse / m);
  }
  return rows;
}

std::string comparison_to_csv(const ModelComparison& cmp) {
  std::ostringstream os;
  os << "model,elbo,converged,probability\n";
  for (const auto& e : cmp.entries) {
    os << e.label << ",";
    if (e.failed)
      os << "failed,false,0\n";
    else
      os << e.elbo << "," << (e.converged ? "true" : "false") << ","
         << e.probability << "\n";
  }
  return os.str();
}

std::string rmse_to_csv(const std::vector<RmseRow>& rows) {
  std::ostringstream os;
  os << "parameter,mean,sd_mean,rmse\n";
  for (const auto& r : rows)
    os << r.name << "," << r.mean << "," << r.sd_mean << "," << r.rmse << "\n";
  return os.str();
}

}  // namespace ncvb
