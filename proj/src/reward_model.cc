#include "prefagg/reward_model.h"

#include <cmath>
#include <string>

namespace prefagg {

void RewardModel::Validate() const {
  if (omega.rows() != thetas.rows()) {
    Fail(ErrorCode::kShape, "omega has " + std::to_string(omega.rows()) +
                                " rows but thetas have " +
                                std::to_string(thetas.rows()));
  }
  if (omega.rows() > omega.cols()) {
    Fail(ErrorCode::kShape, "representation rank k exceeds feature dim d");
  }
}

double RewardEval(const RewardModel& model, int user, const FeatureVector& feat) {
  if (user < 0 || user >= model.num_users()) {
    Fail(ErrorCode::kShape, "user index " + std::to_string(user) +
                                " out of range");
  }
  if (feat.size() != model.dim()) {
    Fail(ErrorCode::kShape, "feature has length " + std::to_string(feat.size()) +
                                ", expected " + std::to_string(model.dim()));
  }
  return model.thetas.col(user).dot(model.omega * feat);
}

Mat RewardTable(const RewardModel& model, const Mat& features) {
  if (features.rows() != model.dim()) {
    Fail(ErrorCode::kShape, "catalog feature dimension mismatch");
  }
  return model.thetas.transpose() * (model.omega * features);
}

Vec PlProbabilities(const Vec& rewards) {
  if (rewards.size() < 2) {
    Fail(ErrorCode::kDomain, "Plackett-Luce needs at least two items");
  }
  for (double r : rewards) RequireFinite(r, "reward");
  const double top = rewards.maxCoeff();
  Vec p = (rewards.array() - top).exp().matrix();
  return p / p.sum();
}

ComparisonDatum SampleComparison(const RewardModel& model, int user,
                                 const FeatureVector& feat0,
                                 const FeatureVector& feat1,
                                 const LinkFunction& link, Rng& rng) {
  const double gap =
      RewardEval(model, user, feat0) - RewardEval(model, user, feat1);
  const double p0 = LinkEval(link, gap);
  ComparisonDatum datum;
  datum.feat0 = feat0;
  datum.feat1 = feat1;
  datum.user = user;
  datum.outcome = Uniform01(rng) < p0 ? 0 : 1;
  return datum;
}

double OrthonormalityError(const Mat& omega) {
  const Mat gram = omega * omega.transpose();
  return (gram - Mat::Identity(gram.rows(), gram.cols())).norm();
}

Mat RandomOrthonormalRows(Rng& rng, int k, int d) {
  if (k > d) Fail(ErrorCode::kShape, "k must not exceed d");
  const Mat gaussian = StandardNormalMatrix(rng, d, k);
  Eigen::HouseholderQR<Mat> qr(gaussian);
  Mat q = qr.householderQ() * Mat::Identity(d, k);
  // Fix signs so the factor is unique given the Gaussian draw.
  const Mat r = qr.matrixQR().topLeftCorner(k, k);
  for (int j = 0; j < k; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q.transpose();
}

}  // namespace prefagg
