#pragma once

#include <cstdint>
#include <vector>

#include "prefagg/common.h"
#include "prefagg/link.h"

namespace prefagg {

// phi(tau) for one trajectory.
using FeatureVector = Vec;

// Rewards r_i(tau) = <omega * phi(tau), theta_i> with a shared linear
// representation omega (k x d, orthonormal rows) and per-user theta_i.
struct RewardModel {
  Mat omega;   // k x d
  Mat thetas;  // k x N, column i is theta_i
  double bound = 1.0;  // B
  double r_max = 1.0;

  int num_users() const { return static_cast<int>(thetas.cols()); }
  int rank() const { return static_cast<int>(omega.rows()); }
  int dim() const { return static_cast<int>(omega.cols()); }

  // Throws kShape if omega and thetas disagree on k.
  void Validate() const;
};

struct ComparisonDatum {
  FeatureVector feat0;
  FeatureVector feat1;
  int outcome = 0;  // 0: feat0 preferred, 1: feat1 preferred
  int user = 0;
};

double RewardEval(const RewardModel& model, int user, const FeatureVector& feat);

// Rewards of every user on every catalog column: N x T.
Mat RewardTable(const RewardModel& model, const Mat& features);

// Softmax with max subtraction. Requires at least two finite entries.
Vec PlProbabilities(const Vec& rewards);

// Draws o ~ P(. | feat0, feat1) with P(o = 0) = Phi(r(feat0) - r(feat1)).
ComparisonDatum SampleComparison(const RewardModel& model, int user,
                                 const FeatureVector& feat0,
                                 const FeatureVector& feat1,
                                 const LinkFunction& link, Rng& rng);

// ||omega omega^T - I||_F.
double OrthonormalityError(const Mat& omega);

// Orthonormal k x d factor of a Gaussian d x k matrix (rows orthonormal).
Mat RandomOrthonormalRows(Rng& rng, int k, int d);

}  // namespace prefagg
