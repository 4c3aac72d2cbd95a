#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prefagg/aggregate.h"
#include "prefagg/common.h"
#include "prefagg/mle.h"
#include "prefagg/population.h"

namespace prefagg {

// Occupancy measure over a finite trajectory catalog.
struct Policy {
  Vec weights;

  int size() const { return static_cast<int>(weights.size()); }
  void Validate() const;  // on the simplex within 1e-9

  static Policy Uniform(int size);
  static Policy PointMass(int size, int index);
};

struct PolicySlate {
  std::vector<Policy> candidates;

  void Validate(int catalog_size) const;
};

// Every point mass in catalog order, then the uniform policy.
PolicySlate DefaultSlate(int catalog_size);

// sum_tau d_pi(tau) r(tau).
double Value(const Policy& pi, const Vec& rewards);

// Per-trajectory rewards <theta, omega phi(tau)>.
Vec CatalogRewards(const Vec& theta, const Mat& omega, const TrajectoryCatalog& catalog);

// Closed-form minimum over the ellipsoid of J(pi; r_theta) - J(mu_ref; r_theta):
// <v, center> - sqrt(radius) * sqrt(v^T design^-1 v), with
// v = omega (E_pi[phi] - E_mu_ref[phi]).
double PessimisticValue(const Policy& pi, const ConfidenceEllipsoid& ell,
                        const Mat& omega_hat, const TrajectoryCatalog& catalog,
                        const Policy& mu_ref);

// The ellipsoid point attaining that minimum.
Vec PessimisticMinimizer(const Policy& pi, const ConfidenceEllipsoid& ell,
                         const Mat& omega_hat, const TrajectoryCatalog& catalog,
                         const Policy& mu_ref);

struct PolicyChoice {
  int index = 0;                // into the slate; ties go to the lowest index
  std::vector<double> values;   // pessimistic objective per candidate
};

PolicyChoice PessimisticPolicy(const PolicySlate& slate, const ConfidenceEllipsoid& ell,
                               const Mat& omega_hat, const TrajectoryCatalog& catalog,
                               const Policy& mu_ref);

struct AggregationSampling {
  int samples = 1024;            // boundary points per user
  std::uint64_t seed = 0;        // shared by every slate candidate
  // Also evaluate, for each candidate, the joint point made of every user's
  // closed-form minimizer for that candidate.
  bool include_analytic = true;
};

// argmax over the slate of the minimum, over sampled joint reward candidates,
// of J(pi; Agg_alpha(r_1..r_N)) - J(mu_ref; Agg_alpha(r_1..r_N)). Samples lie
// on each user's ellipsoid boundary.
PolicyChoice AggregatedPolicy(const PolicySlate& slate,
                              std::span<const ConfidenceEllipsoid> ellipsoids,
                              const Mat& omega_hat, const Alpha& alpha,
                              const TrajectoryCatalog& catalog, const Policy& mu_ref,
                              const AggregationSampling& sampling = {});

struct ConcentrabilityResult {
  double value = 0.0;   // max{0, max over used grid points of the ratio}
  int skipped = 0;      // grid points with a zero denominator
};

// Coverage ratio of the reward differences r* - r under (pi_tar vs mu_ref)
// against their spread under (mu0 x mu1), maximized over the grid. Each
// row of reward_grid holds one candidate reward over the catalog.
ConcentrabilityResult Concentrability(const Mat& reward_grid, const Policy& pi_tar,
                                      const Policy& mu_ref, const Vec& mu0,
                                      const Vec& mu1, const Vec& r_star);

}  // namespace prefagg
