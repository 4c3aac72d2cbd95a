#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "prefagg/aggregate.h"
#include "prefagg/common.h"

namespace prefagg {

// Sum_j p_j log(p_j / q_j) with 0 log 0 = 0. Zero q_j under positive p_j is
// raised to kProbabilityFloor with a warning.
double KlDiv(const Vec& p, const Vec& q);

// sgn(alpha) / (1 - alpha) * (1 - sum_j p_j^alpha q_j^(1 - alpha)).
// alpha in {0, 1} is a domain error: use KlDiv for those limits.
double RenyiVariant(double alpha, const Vec& p, const Vec& q);

// Distance d(P_i, p) between a labeler's opinion P_i and an aggregate p.
// For kKl it is KL(p || P_i), whose minimizer over the simplex summed over
// labelers is geometric pooling; for kRenyi it is RenyiVariant(alpha, P_i, p).
class Distance {
 public:
  enum class Kind { kKl, kRenyi };

  static Distance Kl() { return Distance(Kind::kKl, 0.0); }
  static Distance Renyi(double alpha);
  // "kl" or "renyi:<alpha>".
  static Distance Parse(const std::string& text);

  Kind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  std::string ToString() const;

  double operator()(const Vec& opinion, const Vec& aggregate) const;

  // The pooling exponent whose output minimizes the summed distance.
  Alpha PoolingAlpha() const;

 private:
  Distance(Kind kind, double alpha) : kind_(kind), alpha_(alpha) {}
  Kind kind_;
  double alpha_;
};

// argmin over the simplex of sum_i d(P_i, p), in closed form.
Vec MechAggregate(const Distance& dist, const OpinionProfile& profile);

// sum_i d(P_i, candidate).
double TotalDistance(const Distance& dist, const OpinionProfile& profile,
                     const Vec& candidate);

// Clarke pivot: the others' total distance to the full aggregate minus their
// total distance to the aggregate computed without labeler i.
double VcgCost(int labeler, const Distance& dist, const OpinionProfile& profile);

// -d(true_opinion, aggregate(profile)) - cost_i(profile).
double Utility(int labeler, const Vec& true_opinion, const Distance& dist,
               const OpinionProfile& profile);

// -sum_i d(p_i, candidate) over the true opinions.
double Welfare(const OpinionProfile& true_profile, const Vec& candidate,
               const Distance& dist);

struct MechanismOutcome {
  Vec aggregate;
  std::vector<double> costs;
  std::vector<double> utilities;  // truthful reports
  double welfare = 0.0;
};

MechanismOutcome RunMechanism(const Distance& dist, const OpinionProfile& profile);

// Points of {x on the simplex : m x integral}.
std::vector<Vec> SimplexLattice(int num_answers, int resolution);

// Lattice at the given resolution plus uniformly random simplex points.
std::vector<Vec> DefaultMisreportGrid(int num_answers, Rng& rng,
                                      int resolution = 20, int random_points = 1000);

struct LabelerAudit {
  double cost = 0.0;
  double utility_truthful = 0.0;
  double best_misreport_gain = 0.0;  // max over the grid of u(misreport) - u(truth)
};

struct Manipulation {
  int labeler = 0;
  Vec misreport;
  double gain = 0.0;
};

struct AuditReport {
  int violations = 0;
  double worst_gap = -std::numeric_limits<double>::infinity();
  std::vector<LabelerAudit> per_labeler;
  std::optional<Manipulation> worst;  // set when violations > 0
  int grid_size = 0;
};

struct AuditOptions {
  double tol = 1e-8;
  bool zero_costs = false;  // ablation: drop the payments
};

// For every labeler and misreport, checks that truthful reporting is at least
// as good (within tol) as the misreport, holding the others fixed.
AuditReport DsicAudit(const OpinionProfile& true_profile, const Distance& dist,
                      const std::vector<Vec>& misreport_grid,
                      const AuditOptions& options = {});

}  // namespace prefagg
