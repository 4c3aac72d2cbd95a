#pragma once

#include <span>
#include <vector>

#include "prefagg/common.h"
#include "prefagg/link.h"
#include "prefagg/reward_model.h"

namespace prefagg {

// One user's comparisons in raw feature space: column j holds
// feat0 - feat1 and sign j is +1 when feat0 won (o = 0), -1 otherwise.
// The log-likelihood of a datum is then log Phi(sign * <omega diff, theta>).
struct UserData {
  Mat diffs;  // d x n
  Vec signs;  // n

  int size() const { return static_cast<int>(signs.size()); }
};

UserData MakeUserData(std::span<const ComparisonDatum> records, int dim);

// Same comparisons after the representation: column j is omega * diff_j.
struct ProjectedData {
  Mat x;      // k x n
  Vec signs;  // n

  int size() const { return static_cast<int>(signs.size()); }
};

ProjectedData Project(const Mat& omega, const UserData& data);
ProjectedData Concatenate(std::span<const ProjectedData> parts);

// Sum of log P(o | tau0, tau1) over the data.
double LogLikelihood(const LinkFunction& link, const ProjectedData& data,
                     const Vec& theta);
double LogLikelihood(const LinkFunction& link, const Mat& omega,
                     const Vec& theta, const UserData& data);

Vec ThetaGradient(const LinkFunction& link, const ProjectedData& data,
                  const Vec& theta);
Mat ThetaHessian(const LinkFunction& link, const ProjectedData& data,
                 const Vec& theta);

// Joint objective and its Euclidean gradient in omega (k x d).
double JointLogLikelihood(const LinkFunction& link, const Mat& omega,
                          const Mat& thetas, std::span<const UserData> users);
Mat OmegaGradient(const LinkFunction& link, const Mat& omega,
                  const Mat& thetas, std::span<const UserData> users);

// Empirical design (1/n) sum_j x_j x_j^T.
Mat EmpiricalDesign(const ProjectedData& data);

Vec ProjectToBall(Vec theta, double radius);

struct ThetaSolveOptions {
  int max_iters = 200;
  double tol = 1e-9;        // on the projected-gradient step of the mean LL
  double step_size = 1.0;   // initial step for the mean LL
};

struct ThetaSolveResult {
  Vec theta;
  double log_likelihood = 0.0;
  double grad_norm = 0.0;  // norm of the gradient mapping at theta
  int iterations = 0;
};

// Maximizes the (concave) log-likelihood over the ball ||theta|| <= radius.
// Interior Newton steps are taken when they stay feasible and pass an Armijo
// test; otherwise a projected-gradient step with backtracking is used.
ThetaSolveResult MaximizeTheta(const LinkFunction& link,
                               const ProjectedData& data, const Vec& start,
                               double radius, const ThetaSolveOptions& options);

}  // namespace prefagg
