#include "ncvb/model.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace ncvb {

std::string family_name(Family f) {
  return f == Family::Poisson ? "poisson" : "bernoulli";
}

Family family_from_name(const std::string& name) {
  if (name == "poisson") return Family::Poisson;
  if (name == "bernoulli" || name == "logistic") return Family::Bernoulli;
  throw DataError("unknown family: " + name);
}

std::string parametrization_name(Parametrization p) {
  switch (p) {
    case Parametrization::Centered: return "centered";
    case Parametrization::Noncentered: return "noncentered";
    case Parametrization::PartialFixed: return "partial-fixed";
    case Parametrization::PartialAdaptive: return "partial-adaptive";
  }
  return "?";
}

Parametrization parametrization_from_name(const std::string& name) {
  if (name == "centered") return Parametrization::Centered;
  if (name == "noncentered") return Parametrization::Noncentered;
  if (name == "partial-fixed") return Parametrization::PartialFixed;
  if (name == "partial-adaptive") return Parametrization::PartialAdaptive;
  throw DataError("unknown parametrization: " + name);
}

Eigen::Index Dataset::n_obs() const {
  Eigen::Index total = 0;
  for (const auto& c : clusters) total += c.size();
  return total;
}

namespace {

void hash_bytes(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
}

void hash_vec(std::uint64_t& h, const VectorXd& v) {
  hash_bytes(h, v.data(), sizeof(double) * v.size());
}

void hash_mat(std::uint64_t& h, const MatrixXd& m) {
  hash_bytes(h, m.data(), sizeof(double) * m.size());
}

}  // namespace

std::uint64_t Dataset::content_hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  const int meta[4] = {static_cast<int>(family), r, g1, g2};
  hash_bytes(h, meta, sizeof(meta));
  for (const auto& c : clusters) {
    hash_vec(h, c.y);
    hash_mat(h, c.XR);
    hash_vec(h, c.xG1);
    hash_mat(h, c.XG2);
    hash_vec(h, c.offset);
  }
  return h;
}

std::uint64_t Dataset::response_hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  const int fam = static_cast<int>(family);
  hash_bytes(h, &fam, sizeof(fam));
  for (const auto& c : clusters) {
    const std::int64_t ni = c.size();
    hash_bytes(h, &ni, sizeof(ni));
    hash_vec(h, c.y);
    hash_vec(h, c.offset);
  }
  return h;
}

ClusterDesign build_cluster_design(const ClusterData& cluster, int g1, int p,
                                   const MatrixXd& W) {
  const int r = static_cast<int>(cluster.XR.cols());
  const Eigen::Index ni = cluster.size();
  if (W.rows() != r || W.cols() != r) {
    std::ostringstream os;
    os << "build_cluster_design: W is " << W.rows() << "x" << W.cols()
       << ", expected " << r << "x" << r;
    throw ShapeError(os.str());
  }
  if (cluster.xG1.size() != g1)
    throw ShapeError("build_cluster_design: xG1 length " +
                     std::to_string(cluster.xG1.size()) + " != g1 " +
                     std::to_string(g1));
  const int g2 = p - r - g1;
  if (g2 < 0 || cluster.XG2.cols() != g2 ||
      (g2 > 0 && cluster.XG2.rows() != ni))
    throw ShapeError("build_cluster_design: XG2 block inconsistent with p");

  ClusterDesign d;
  d.C = MatrixXd::Zero(r, r + g1);
  d.C.leftCols(r).setIdentity();
  if (g1 > 0) d.C.block(0, r, 1, g1) = cluster.xG1.transpose();

  d.V = MatrixXd::Zero(ni, p);
  d.V.leftCols(r + g1) = cluster.XR * (W * d.C);
  if (g2 > 0) d.V.rightCols(g2) = cluster.XG2;

  d.W_tilde = MatrixXd::Zero(r, p);
  d.W_tilde.leftCols(r + g1) = (MatrixXd::Identity(r, r) - W) * d.C;
  return d;
}

void validate_dataset(const Dataset& ds) {
  if (ds.r < 1) throw DataError("dataset must declare at least a random intercept (r >= 1)");
  if (ds.clusters.empty()) throw DataError("dataset has no clusters");
  std::ostringstream problems;
  int bad = 0;
  for (int i = 0; i < ds.n(); ++i) {
    const auto& c = ds.clusters[i];
    const Eigen::Index ni = c.size();
    auto complain = [&](const std::string& what) {
      problems << "cluster " << i << ": " << what << "\n";
      ++bad;
    };
    if (ni < 1) { complain("empty cluster"); continue; }
    if (c.XR.rows() != ni || c.XR.cols() != ds.r)
      complain("XR shape mismatch");
    if (c.xG1.size() != ds.g1) complain("xG1 length mismatch");
    if (ds.g2 > 0 && (c.XG2.rows() != ni || c.XG2.cols() != ds.g2))
      complain("XG2 shape mismatch");
    if (c.offset.size() != ni) complain("offset length mismatch");
    if (c.XR.rows() == ni && c.XR.cols() == ds.r && !c.XR.isZero()) {
      for (Eigen::Index j = 0; j < ni; ++j)
        if (c.XR(j, 0) != 1.0)
          complain("row " + std::to_string(j) +
                   ": first column of XR must be 1 when XR is nonzero");
    }
    for (Eigen::Index j = 0; j < ni; ++j) {
      const double y = c.y(j);
      if (ds.family == Family::Bernoulli) {
        if (y != 0.0 && y != 1.0)
          complain("row " + std::to_string(j) + ": Bernoulli response " +
                   std::to_string(y) + " not in {0,1}");
        if (c.offset(j) != 1.0)
          complain("row " + std::to_string(j) +
                   ": Bernoulli clusters must have unit offsets");
      } else {
        if (y < 0.0 || y != std::floor(y))
          complain("row " + std::to_string(j) + ": Poisson response " +
                   std::to_string(y) + " is not a nonnegative integer");
        if (!(c.offset(j) > 0.0))
          complain("row " + std::to_string(j) + ": offset must be positive");
      }
    }
  }
  if (bad > 0) throw DataError("dataset validation failed:\n" + problems.str());
}

bool constant_within_clusters(const std::vector<VectorXd>& column_per_cluster,
                              double tol) {
  for (const auto& v : column_per_cluster) {
    if (v.size() == 0) continue;
    if ((v.array() - v(0)).abs().maxCoeff() > tol) return false;
  }
  return true;
}

ParameterSummary random_effect_sd_summary(double nu, const MatrixXd& S, int r,
                                          int k) {
  // D_kk ~ IG(a, b) with a = (nu - r + 1)/2, b = S_kk/2.
  const double a = 0.5 * (nu - r + 1);
  const double b = 0.5 * S(k, k);
  ParameterSummary out;
  out.name = "sigma_" + std::to_string(k + 1) + std::to_string(k + 1);
  if (a <= 1.0) {
    out.mean = std::numeric_limits<double>::quiet_NaN();
    out.sd = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  // E[sqrt(D_kk)] = sqrt(b) Gamma(a - 1/2) / Gamma(a), Var from E[D_kk].
  const double mean_sqrt =
      std::sqrt(b) * std::exp(std::lgamma(a - 0.5) - std::lgamma(a));
  const double mean_d = b / (a - 1.0);
  out.mean = mean_sqrt;
  out.sd = std::sqrt(std::max(0.0, mean_d - mean_sqrt * mean_sqrt));
  return out;
}

}  // namespace ncvb
