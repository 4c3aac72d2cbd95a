#pragma once

#include <string>
#include <string_view>

#include "prefagg/common.h"

namespace prefagg {

// Extended-real aggregation parameter. The infinite cases are exact limits,
// not large finite values.
class Alpha {
 public:
  enum class Kind { kNegInf, kFinite, kPosInf };

  static Alpha NegInf() { return Alpha(Kind::kNegInf, 0.0); }
  static Alpha PosInf() { return Alpha(Kind::kPosInf, 0.0); }
  static Alpha Finite(double value);

  // Accepts "ninf", "-inf", "+inf", "inf", "pinf" or a finite number.
  static Alpha Parse(std::string_view text);

  Kind kind() const { return kind_; }
  bool is_finite() const { return kind_ == Kind::kFinite; }
  double value() const;  // finite value; throws kDomain otherwise
  std::string ToString() const;

  friend bool operator==(const Alpha&, const Alpha&) = default;

 private:
  Alpha(Kind kind, double value) : kind_(kind), value_(value) {}
  Kind kind_;
  double value_;
};

// (1/alpha) log((1/N) sum exp(alpha r_i)); mean at 0, min / max at -inf / +inf.
double AggReward(const Alpha& alpha, const Vec& rewards);

// (1/(N alpha)) sum (exp(alpha r_i) - 1); mean at 0. Finite alpha only.
double AggRewardPrime(const Alpha& alpha, const Vec& rewards);

// N rows, each a probability vector over K answers.
struct OpinionProfile {
  Mat rows;  // N x K

  int num_labelers() const { return static_cast<int>(rows.rows()); }
  int num_answers() const { return static_cast<int>(rows.cols()); }
  Vec row(int i) const { return rows.row(i).transpose(); }

  // N >= 1, K >= 2, entries >= 0 and rows summing to 1 within 1e-9.
  void Validate() const;
  OpinionProfile Without(int labeler) const;
  OpinionProfile WithRow(int labeler, const Vec& opinion) const;
};

// Entries below this are raised to it (with a warning) wherever a
// non-positive power or a logarithm of a probability is taken.
inline constexpr double kProbabilityFloor = 1e-12;

// Component a proportional to (sum_i P_i(a)^alpha)^(1/alpha); normalized
// geometric mean at 0, componentwise min / max at -inf / +inf.
Vec PoolOpinions(const Alpha& alpha, const OpinionProfile& profile);

// Sup-norm gap between pooling the PL distributions of each row of the table
// and the PL distribution of the column-wise aggregated log-probabilities.
double PlEquivalenceGap(const Alpha& alpha, const Mat& reward_table);

int SamplePooledAnswer(const Alpha& alpha, const OpinionProfile& profile,
                       Rng& rng);

// Randomized spot checks of symmetry, translation independence and
// monotonicity of AggReward on the columns of a reward table (rows = users).
struct AxiomProbe {
  int probes = 0;
  double max_symmetry_error = 0.0;
  double max_translation_error = 0.0;
  int monotonicity_violations = 0;
};

AxiomProbe ProbeAxioms(const Alpha& alpha, const Mat& reward_table, Rng& rng,
                       int probes_per_column = 10);

}  // namespace prefagg
