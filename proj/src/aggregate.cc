#include "prefagg/aggregate.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "prefagg/population.h"
#include "prefagg/reward_model.h"

namespace prefagg {
namespace {

constexpr double kNegInfinity = -std::numeric_limits<double>::infinity();

// log sum_i exp(x_i) with the maximum subtracted first.
double LogSumExp(const Vec& x) {
  const double m = x.maxCoeff();
  if (m == kNegInfinity) return kNegInfinity;
  return m + std::log((x.array() - m).exp().sum());
}

void RequireFiniteVector(const Vec& v, std::string_view what) {
  if (v.size() == 0) Fail(ErrorCode::kInput, std::string(what) + " is empty");
  if (!v.allFinite()) Fail(ErrorCode::kDomain, std::string(what) + " has non-finite entries");
}

// log P with zero entries raised to the floor when the caller needs them
// finite; otherwise zeros map to -inf.
Mat LogProbabilities(const Mat& p, bool clamp) {
  Mat out(p.rows(), p.cols());
  bool clamped = false;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index a = 0; a < p.cols(); ++a) {
      double v = p(i, a);
      if (v < kProbabilityFloor && clamp) {
        v = kProbabilityFloor;
        clamped = true;
      }
      out(i, a) = v > 0 ? std::log(v) : kNegInfinity;
    }
  }
  if (clamped) {
    Warn("zero opinion probabilities clamped to 1e-12 for non-positive alpha");
  }
  return out;
}

}  // namespace

Alpha Alpha::Finite(double value) {
  if (!std::isfinite(value)) {
    Fail(ErrorCode::kDomain, "finite alpha expected; use NegInf/PosInf for limits");
  }
  return Alpha(Kind::kFinite, value);
}

Alpha Alpha::Parse(std::string_view text) {
  if (text == "ninf" || text == "-inf" || text == "neginf") return NegInf();
  if (text == "+inf" || text == "inf" || text == "pinf" || text == "posinf") return PosInf();
  double value = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    Fail(ErrorCode::kParse, "cannot parse alpha '" + std::string(text) + "'");
  }
  return Finite(value);
}

double Alpha::value() const {
  if (kind_ != Kind::kFinite) Fail(ErrorCode::kDomain, "alpha is infinite");
  return value_;
}

std::string Alpha::ToString() const {
  switch (kind_) {
    case Kind::kNegInf:
      return "ninf";
    case Kind::kPosInf:
      return "+inf";
    case Kind::kFinite:
      break;
  }
  std::ostringstream out;
  out.precision(17);
  out << value_;
  return out.str();
}

double AggReward(const Alpha& alpha, const Vec& rewards) {
  RequireFiniteVector(rewards, "reward vector");
  switch (alpha.kind()) {
    case Alpha::Kind::kNegInf:
      return rewards.minCoeff();
    case Alpha::Kind::kPosInf:
      return rewards.maxCoeff();
    case Alpha::Kind::kFinite:
      break;
  }
  const double a = alpha.value();
  if (a == 0.0) return rewards.mean();
  const double n = static_cast<double>(rewards.size());
  return (LogSumExp(a * rewards) - std::log(n)) / a;
}

double AggRewardPrime(const Alpha& alpha, const Vec& rewards) {
  if (!alpha.is_finite()) {
    Fail(ErrorCode::kDomain, "Agg' is defined for finite alpha only");
  }
  RequireFiniteVector(rewards, "reward vector");
  const double a = alpha.value();
  if (a == 0.0) return rewards.mean();
  double total = 0.0;
  for (Eigen::Index i = 0; i < rewards.size(); ++i) total += std::expm1(a * rewards(i));
  return total / (static_cast<double>(rewards.size()) * a);
}

void OpinionProfile::Validate() const {
  if (rows.rows() < 1) Fail(ErrorCode::kInput, "opinion profile has no labelers");
  if (rows.cols() < 2) Fail(ErrorCode::kDomain, "opinions need at least 2 answers");
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index a = 0; a < rows.cols(); ++a) {
      if (!std::isfinite(rows(i, a)) || rows(i, a) < 0) {
        Fail(ErrorCode::kValidation,
             "opinion row " + std::to_string(i) + " has a negative or non-finite entry");
      }
    }
    if (std::abs(rows.row(i).sum() - 1.0) > 1e-9) {
      Fail(ErrorCode::kValidation,
           "opinion row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

OpinionProfile OpinionProfile::Without(int labeler) const {
  if (labeler < 0 || labeler >= num_labelers()) {
    Fail(ErrorCode::kShape, "labeler index out of range");
  }
  OpinionProfile out;
  out.rows.resize(rows.rows() - 1, rows.cols());
  for (int i = 0, r = 0; i < num_labelers(); ++i) {
    if (i != labeler) out.rows.row(r++) = rows.row(i);
  }
  return out;
}

OpinionProfile OpinionProfile::WithRow(int labeler, const Vec& opinion) const {
  if (labeler < 0 || labeler >= num_labelers() || opinion.size() != rows.cols()) {
    Fail(ErrorCode::kShape, "replacement opinion does not fit the profile");
  }
  OpinionProfile out = *this;
  out.rows.row(labeler) = opinion.transpose();
  return out;
}

Vec PoolOpinions(const Alpha& alpha, const OpinionProfile& profile) {
  profile.Validate();
  const Mat& p = profile.rows;
  const Eigen::Index num_answers = p.cols();
  const bool clamp = alpha.kind() == Alpha::Kind::kNegInf ||
                     (alpha.is_finite() && alpha.value() <= 0.0);

  if (alpha.kind() == Alpha::Kind::kPosInf) {
    const Vec mass = p.colwise().maxCoeff().transpose();
    return mass / mass.sum();
  }
  if (alpha.kind() == Alpha::Kind::kNegInf) {
    Vec mass = p.colwise().minCoeff().transpose();
    if (clamp && mass.minCoeff() < kProbabilityFloor) {
      LogProbabilities(p, true);  // emits the warning
      mass = mass.cwiseMax(kProbabilityFloor);
    }
    return mass / mass.sum();
  }

  // Finite alpha: unnormalized log-mass per answer, then a stable softmax.
  const Mat logp = LogProbabilities(p, clamp);
  const double a = alpha.value();
  Vec log_mass(num_answers);
  for (Eigen::Index k = 0; k < num_answers; ++k) {
    const Vec column = logp.col(k);
    log_mass(k) = a == 0.0 ? column.mean() : LogSumExp(a * column) / a;
  }
  const double norm = LogSumExp(log_mass);
  return (log_mass.array() - norm).exp().matrix();
}

double PlEquivalenceGap(const Alpha& alpha, const Mat& reward_table) {
  if (reward_table.rows() < 1 || reward_table.cols() < 2) {
    Fail(ErrorCode::kShape, "reward table needs N >= 1 rows and K >= 2 columns");
  }
  if (!reward_table.allFinite()) Fail(ErrorCode::kDomain, "reward table has non-finite entries");
  OpinionProfile profile;
  profile.rows.resize(reward_table.rows(), reward_table.cols());
  for (Eigen::Index i = 0; i < reward_table.rows(); ++i) {
    profile.rows.row(i) = PlProbabilities(reward_table.row(i).transpose()).transpose();
  }
  const Vec pooled = PoolOpinions(alpha, profile);

  // Normalized rewards R_i(a) = log P_i(a) share the constant 0.
  const Mat logp = LogProbabilities(profile.rows, true);
  Vec aggregated(reward_table.cols());
  for (Eigen::Index k = 0; k < reward_table.cols(); ++k) {
    aggregated(k) = AggReward(alpha, logp.col(k));
  }
  const Vec pl = PlProbabilities(aggregated);
  return (pooled - pl).cwiseAbs().maxCoeff();
}

int SamplePooledAnswer(const Alpha& alpha, const OpinionProfile& profile,
                       Rng& rng) {
  return SampleIndex(PoolOpinions(alpha, profile), rng);
}

AxiomProbe ProbeAxioms(const Alpha& alpha, const Mat& reward_table, Rng& rng,
                       int probes_per_column) {
  AxiomProbe out;
  for (Eigen::Index t = 0; t < reward_table.cols(); ++t) {
    const Vec r = reward_table.col(t);
    const double base = AggReward(alpha, r);
    for (int p = 0; p < probes_per_column; ++p) {
      ++out.probes;
      Vec shuffled = r;
      for (Eigen::Index i = shuffled.size() - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(Uniform01(rng) * static_cast<double>(i + 1));
        std::swap(shuffled(i), shuffled(std::min(i, j)));
      }
      out.max_symmetry_error =
          std::max(out.max_symmetry_error, std::abs(AggReward(alpha, shuffled) - base));

      const double c = 10.0 * Uniform01(rng) - 5.0;
      const double shifted = AggReward(alpha, (r.array() + c).matrix());
      out.max_translation_error =
          std::max(out.max_translation_error, std::abs(shifted - base - c));

      Vec raised = r;
      const auto j = static_cast<Eigen::Index>(Uniform01(rng) * static_cast<double>(r.size()));
      raised(std::min(j, r.size() - 1)) += 1.0;
      const double after = AggReward(alpha, raised);
      if (after < base || (alpha.is_finite() && after <= base)) ++out.monotonicity_violations;
    }
  }
  return out;
}

}  // namespace prefagg
