#include "prefagg/mechanism.h"

#include <charconv>
#include <cmath>
#include <sstream>

namespace prefagg {
namespace {

void RequireSameSize(const Vec& p, const Vec& q) {
  if (p.size() != q.size() || p.size() == 0) {
    Fail(ErrorCode::kShape, "distributions have mismatched or zero length");
  }
}

// x^power, with zero x raised to the floor when the power is negative.
double SafePow(double x, double power, bool& clamped) {
  if (power < 0 && x < kProbabilityFloor) {
    clamped = true;
    x = kProbabilityFloor;
  }
  return std::pow(x, power);
}

}  // namespace

double KlDiv(const Vec& p, const Vec& q) {
  RequireSameSize(p, q);
  double total = 0.0;
  bool clamped = false;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (p(j) <= 0) continue;
    double qj = q(j);
    if (qj < kProbabilityFloor) {
      qj = kProbabilityFloor;
      clamped = true;
    }
    total += p(j) * std::log(p(j) / qj);
  }
  if (clamped) Warn("zero reference probabilities clamped to 1e-12 in KL divergence");
  return total;
}

double RenyiVariant(double alpha, const Vec& p, const Vec& q) {
  if (!std::isfinite(alpha) || alpha == 0.0 || alpha == 1.0) {
    Fail(ErrorCode::kDomain, "Renyi variant needs alpha outside {0, 1}; use KL there");
  }
  RequireSameSize(p, q);
  double sum = 0.0;
  bool clamped = false;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    sum += SafePow(p(j), alpha, clamped) * SafePow(q(j), 1.0 - alpha, clamped);
  }
  if (clamped) Warn("zero probabilities clamped to 1e-12 in Renyi variant");
  const double sign = alpha > 0 ? 1.0 : -1.0;
  return sign / (1.0 - alpha) * (1.0 - sum);
}

Distance Distance::Renyi(double alpha) {
  if (!std::isfinite(alpha) || alpha == 0.0 || alpha == 1.0) {
    Fail(ErrorCode::kDomain, "Renyi variant needs alpha outside {0, 1}; use KL there");
  }
  return Distance(Kind::kRenyi, alpha);
}

Distance Distance::Parse(const std::string& text) {
  if (text == "kl" || text == "KL") return Kl();
  const std::string prefix = "renyi:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string rest = text.substr(prefix.size());
    double alpha = 0.0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), alpha);
    if (ec == std::errc() && ptr == rest.data() + rest.size()) return Renyi(alpha);
  }
  Fail(ErrorCode::kParse, "cannot parse distance '" + text + "' (expected kl or renyi:<alpha>)");
}

std::string Distance::ToString() const {
  if (kind_ == Kind::kKl) return "kl";
  std::ostringstream out;
  out.precision(17);
  out << "renyi:" << alpha_;
  return out.str();
}

double Distance::operator()(const Vec& opinion, const Vec& aggregate) const {
  if (kind_ == Kind::kKl) return KlDiv(aggregate, opinion);
  return RenyiVariant(alpha_, opinion, aggregate);
}

Alpha Distance::PoolingAlpha() const {
  return kind_ == Kind::kKl ? Alpha::Finite(0.0) : Alpha::Finite(alpha_);
}

Vec MechAggregate(const Distance& dist, const OpinionProfile& profile) {
  return PoolOpinions(dist.PoolingAlpha(), profile);
}

double TotalDistance(const Distance& dist, const OpinionProfile& profile,
                     const Vec& candidate) {
  double total = 0.0;
  for (int i = 0; i < profile.num_labelers(); ++i) total += dist(profile.row(i), candidate);
  return total;
}

double VcgCost(int labeler, const Distance& dist, const OpinionProfile& profile) {
  profile.Validate();
  if (labeler < 0 || labeler >= profile.num_labelers()) {
    Fail(ErrorCode::kShape, "labeler index out of range");
  }
  if (profile.num_labelers() == 1) return 0.0;
  const OpinionProfile others = profile.Without(labeler);
  const Vec full = MechAggregate(dist, profile);
  const Vec reduced = MechAggregate(dist, others);
  return TotalDistance(dist, others, full) - TotalDistance(dist, others, reduced);
}

double Utility(int labeler, const Vec& true_opinion, const Distance& dist,
               const OpinionProfile& profile) {
  const Vec aggregate = MechAggregate(dist, profile);
  return -dist(true_opinion, aggregate) - VcgCost(labeler, dist, profile);
}

double Welfare(const OpinionProfile& true_profile, const Vec& candidate,
               const Distance& dist) {
  true_profile.Validate();
  return -TotalDistance(dist, true_profile, candidate);
}

MechanismOutcome RunMechanism(const Distance& dist, const OpinionProfile& profile) {
  MechanismOutcome out;
  out.aggregate = MechAggregate(dist, profile);
  for (int i = 0; i < profile.num_labelers(); ++i) {
    const double cost = VcgCost(i, dist, profile);
    out.costs.push_back(cost);
    out.utilities.push_back(-dist(profile.row(i), out.aggregate) - cost);
  }
  out.welfare = Welfare(profile, out.aggregate, dist);
  return out;
}

std::vector<Vec> SimplexLattice(int num_answers, int resolution) {
  if (num_answers < 1 || resolution < 1) Fail(ErrorCode::kDomain, "bad lattice size");
  std::vector<Vec> points;
  std::vector<int> counts(static_cast<std::size_t>(num_answers), 0);
  // Enumerate compositions of `resolution` into num_answers parts.
  auto recurse = [&](auto&& self, int position, int remaining) -> void {
    if (position == num_answers - 1) {
      counts[static_cast<std::size_t>(position)] = remaining;
      Vec p(num_answers);
      for (int a = 0; a < num_answers; ++a) {
        p(a) = static_cast<double>(counts[static_cast<std::size_t>(a)]) / resolution;
      }
      points.push_back(std::move(p));
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[static_cast<std::size_t>(position)] = c;
      self(self, position + 1, remaining - c);
    }
  };
  recurse(recurse, 0, resolution);
  return points;
}

std::vector<Vec> DefaultMisreportGrid(int num_answers, Rng& rng, int resolution,
                                      int random_points) {
  std::vector<Vec> grid = SimplexLattice(num_answers, resolution);
  for (int s = 0; s < random_points; ++s) grid.push_back(RandomSimplex(rng, num_answers));
  return grid;
}

AuditReport DsicAudit(const OpinionProfile& true_profile, const Distance& dist,
                      const std::vector<Vec>& misreport_grid,
                      const AuditOptions& options) {
  true_profile.Validate();
  if (misreport_grid.empty()) Fail(ErrorCode::kInput, "misreport grid is empty");
  const int n = true_profile.num_labelers();
  AuditReport report;
  report.grid_size = static_cast<int>(misreport_grid.size());

  for (int i = 0; i < n; ++i) {
    const Vec truth = true_profile.row(i);
    const OpinionProfile others = true_profile.Without(i);
    // The pivot term does not depend on labeler i's report.
    const double pivot = n > 1 ? TotalDistance(dist, others, MechAggregate(dist, others)) : 0.0;
    auto utility_of = [&](const OpinionProfile& reported, double& cost) {
      const Vec aggregate = MechAggregate(dist, reported);
      cost = 0.0;
      if (!options.zero_costs && n > 1) cost = TotalDistance(dist, others, aggregate) - pivot;
      return -dist(truth, aggregate) - cost;
    };

    LabelerAudit entry;
    entry.utility_truthful = utility_of(true_profile, entry.cost);
    entry.best_misreport_gain = -std::numeric_limits<double>::infinity();
    for (const Vec& misreport : misreport_grid) {
      if (misreport.size() != truth.size()) {
        Fail(ErrorCode::kShape, "misreport has the wrong number of answers");
      }
      double unused = 0.0;
      const double gain =
          utility_of(true_profile.WithRow(i, misreport), unused) - entry.utility_truthful;
      entry.best_misreport_gain = std::max(entry.best_misreport_gain, gain);
      if (gain > options.tol) ++report.violations;
      if (gain > report.worst_gap) {
        report.worst_gap = gain;
        if (gain > options.tol) report.worst = Manipulation{i, misreport, gain};
      }
    }
    report.per_labeler.push_back(entry);
  }
  return report;
}

}  // namespace prefagg
