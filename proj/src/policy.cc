#include "prefagg/policy.h"

#include <cmath>
#include <limits>
#include <string>

namespace prefagg {
namespace {

constexpr double kDesignFloor = 1e-10;

void RequireCatalogMatch(const Policy& pi, const TrajectoryCatalog& catalog) {
  if (pi.size() != catalog.size()) {
    Fail(ErrorCode::kShape, "policy length does not match the catalog");
  }
}

// Cholesky factor of the design, with a warned eigenvalue floor when the
// matrix is numerically singular.
Eigen::LLT<Mat> FactorDesign(const Mat& design) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(design, Eigen::EigenvaluesOnly);
  Mat d = design;
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= kDesignFloor) {
    Warn("singular ellipsoid design; regularization floor applied");
    d += kDesignFloor * Mat::Identity(design.rows(), design.cols());
  }
  Eigen::LLT<Mat> llt(d);
  if (llt.info() != Eigen::Success) {
    Fail(ErrorCode::kNumerical, "ellipsoid design is not positive definite");
  }
  return llt;
}

Vec FeatureGap(const Policy& pi, const Mat& omega_hat, const TrajectoryCatalog& catalog,
               const Policy& mu_ref) {
  RequireCatalogMatch(pi, catalog);
  RequireCatalogMatch(mu_ref, catalog);
  if (omega_hat.cols() != catalog.dim()) {
    Fail(ErrorCode::kShape, "representation does not match catalog feature dimension");
  }
  return omega_hat * (catalog.features * (pi.weights - mu_ref.weights));
}

int ArgmaxLowest(const std::vector<double>& values) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(values.size()); ++c) {
    if (values[static_cast<std::size_t>(c)] > values[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

}  // namespace

void Policy::Validate() const {
  if (weights.size() == 0) Fail(ErrorCode::kInput, "policy is empty");
  if (!weights.allFinite() || weights.minCoeff() < -1e-12 ||
      std::abs(weights.sum() - 1.0) > 1e-9) {
    Fail(ErrorCode::kValidation, "policy weights are not on the simplex");
  }
}

Policy Policy::Uniform(int size) {
  if (size < 1) Fail(ErrorCode::kDomain, "policy size must be positive");
  return {Vec::Constant(size, 1.0 / size)};
}

Policy Policy::PointMass(int size, int index) {
  if (index < 0 || index >= size) Fail(ErrorCode::kShape, "point mass index out of range");
  Vec w = Vec::Zero(size);
  w(index) = 1.0;
  return {w};
}

void PolicySlate::Validate(int catalog_size) const {
  if (candidates.empty()) Fail(ErrorCode::kInput, "policy slate is empty");
  for (const auto& pi : candidates) {
    pi.Validate();
    if (pi.size() != catalog_size) {
      Fail(ErrorCode::kShape, "slate policy length does not match the catalog");
    }
  }
}

PolicySlate DefaultSlate(int catalog_size) {
  PolicySlate slate;
  for (int t = 0; t < catalog_size; ++t) {
    slate.candidates.push_back(Policy::PointMass(catalog_size, t));
  }
  slate.candidates.push_back(Policy::Uniform(catalog_size));
  return slate;
}

double Value(const Policy& pi, const Vec& rewards) {
  if (pi.weights.size() != rewards.size()) {
    Fail(ErrorCode::kShape, "policy and reward vector lengths differ");
  }
  return pi.weights.dot(rewards);
}

Vec CatalogRewards(const Vec& theta, const Mat& omega, const TrajectoryCatalog& catalog) {
  if (omega.rows() != theta.size() || omega.cols() != catalog.dim()) {
    Fail(ErrorCode::kShape, "reward parameters do not match the catalog");
  }
  return catalog.features.transpose() * (omega.transpose() * theta);
}

double PessimisticValue(const Policy& pi, const ConfidenceEllipsoid& ell,
                        const Mat& omega_hat, const TrajectoryCatalog& catalog,
                        const Policy& mu_ref) {
  ell.Validate();
  const Vec v = FeatureGap(pi, omega_hat, catalog, mu_ref);
  const Eigen::LLT<Mat> llt = FactorDesign(ell.design);
  const double width = std::sqrt(std::max(0.0, v.dot(llt.solve(v))));
  return v.dot(ell.center) - std::sqrt(ell.radius) * width;
}

Vec PessimisticMinimizer(const Policy& pi, const ConfidenceEllipsoid& ell,
                         const Mat& omega_hat, const TrajectoryCatalog& catalog,
                         const Policy& mu_ref) {
  ell.Validate();
  const Vec v = FeatureGap(pi, omega_hat, catalog, mu_ref);
  const Eigen::LLT<Mat> llt = FactorDesign(ell.design);
  const Vec dinv_v = llt.solve(v);
  const double width = std::sqrt(std::max(0.0, v.dot(dinv_v)));
  if (width == 0.0) return ell.center;
  return ell.center - std::sqrt(ell.radius) / width * dinv_v;
}

PolicyChoice PessimisticPolicy(const PolicySlate& slate, const ConfidenceEllipsoid& ell,
                               const Mat& omega_hat, const TrajectoryCatalog& catalog,
                               const Policy& mu_ref) {
  slate.Validate(catalog.size());
  PolicyChoice choice;
  for (const auto& pi : slate.candidates) {
    choice.values.push_back(PessimisticValue(pi, ell, omega_hat, catalog, mu_ref));
  }
  choice.index = ArgmaxLowest(choice.values);
  return choice;
}

PolicyChoice AggregatedPolicy(const PolicySlate& slate,
                              std::span<const ConfidenceEllipsoid> ellipsoids,
                              const Mat& omega_hat, const Alpha& alpha,
                              const TrajectoryCatalog& catalog, const Policy& mu_ref,
                              const AggregationSampling& sampling) {
  slate.Validate(catalog.size());
  if (ellipsoids.empty()) Fail(ErrorCode::kInput, "no user ellipsoids");
  if (sampling.samples < 1) Fail(ErrorCode::kDomain, "need at least one sample per user");
  const int n = static_cast<int>(ellipsoids.size());
  const int k = static_cast<int>(omega_hat.rows());
  const Mat projected = omega_hat * catalog.features;  // k x T

  // Joint candidates: column block s holds (theta_1^s .. theta_N^s).
  std::vector<Mat> joint;  // each k x N
  const int num_sampled = sampling.samples;
  joint.assign(static_cast<std::size_t>(num_sampled), Mat(k, n));
  for (int i = 0; i < n; ++i) {
    const auto& ell = ellipsoids[static_cast<std::size_t>(i)];
    ell.Validate();
    if (ell.center.size() != k) Fail(ErrorCode::kShape, "ellipsoid rank does not match omega");
    const Eigen::LLT<Mat> llt = FactorDesign(ell.design);
    const Mat lower = llt.matrixL();
    Rng rng = MakeRng(DeriveSeed(sampling.seed, static_cast<std::uint64_t>(i)));
    for (int s = 0; s < num_sampled; ++s) {
      const Vec u = UnitSphere(rng, k);
      // theta - center = sqrt(radius) L^-T u lies on the boundary of the
      // ellipsoid with design L L^T.
      const Vec offset = lower.transpose().triangularView<Eigen::Upper>().solve(u);
      joint[static_cast<std::size_t>(s)].col(i) = ell.center + std::sqrt(ell.radius) * offset;
    }
  }
  if (sampling.include_analytic) {
    for (const auto& pi : slate.candidates) {
      Mat m(k, n);
      for (int i = 0; i < n; ++i) {
        m.col(i) = PessimisticMinimizer(pi, ellipsoids[static_cast<std::size_t>(i)],
                                        omega_hat, catalog, mu_ref);
      }
      joint.push_back(std::move(m));
    }
  }

  // Aggregated reward per joint candidate and trajectory.
  Mat aggregated(static_cast<Eigen::Index>(joint.size()), catalog.size());
  for (std::size_t s = 0; s < joint.size(); ++s) {
    const Mat rewards = joint[s].transpose() * projected;  // N x T
    for (int t = 0; t < catalog.size(); ++t) {
      aggregated(static_cast<Eigen::Index>(s), t) = AggReward(alpha, rewards.col(t));
    }
  }

  PolicyChoice choice;
  for (const auto& pi : slate.candidates) {
    const Vec objective = aggregated * (pi.weights - mu_ref.weights);
    choice.values.push_back(objective.minCoeff());
  }
  choice.index = ArgmaxLowest(choice.values);
  return choice;
}

ConcentrabilityResult Concentrability(const Mat& reward_grid, const Policy& pi_tar,
                                      const Policy& mu_ref, const Vec& mu0,
                                      const Vec& mu1, const Vec& r_star) {
  const Eigen::Index t = r_star.size();
  if (reward_grid.rows() == 0) Fail(ErrorCode::kInput, "reward grid is empty");
  if (reward_grid.cols() != t || pi_tar.weights.size() != t ||
      mu_ref.weights.size() != t || mu0.size() != t || mu1.size() != t) {
    Fail(ErrorCode::kShape, "concentrability inputs disagree on the catalog size");
  }
  ConcentrabilityResult result;
  double best = 0.0;
  for (Eigen::Index g = 0; g < reward_grid.rows(); ++g) {
    const Vec diff = r_star - reward_grid.row(g).transpose();
    const double numerator = pi_tar.weights.dot(diff) - mu_ref.weights.dot(diff);
    // E_{mu0 x mu1} (diff(t0) - diff(t1))^2, expanded exactly.
    const double m0 = mu0.dot(diff);
    const double m1 = mu1.dot(diff);
    const double s0 = mu0.dot(diff.cwiseProduct(diff));
    const double s1 = mu1.dot(diff.cwiseProduct(diff));
    const double spread = s0 - 2.0 * m0 * m1 + s1;
    const double scale = std::max({1.0, s0, s1});
    if (spread <= 1e-14 * scale) {
      ++result.skipped;
      continue;
    }
    best = std::max(best, numerator / std::sqrt(spread));
  }
  if (result.skipped > 0) {
    Warn("concentrability: grid points with zero denominator skipped");
  }
  result.value = best;
  return result;
}

}  // namespace prefagg
