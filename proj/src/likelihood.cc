#include "prefagg/likelihood.h"

#include <cmath>
#include <string>

namespace prefagg {

UserData MakeUserData(std::span<const ComparisonDatum> records, int dim) {
  UserData data;
  data.diffs.resize(dim, static_cast<Eigen::Index>(records.size()));
  data.signs.resize(static_cast<Eigen::Index>(records.size()));
  for (std::size_t j = 0; j < records.size(); ++j) {
    const auto& rec = records[j];
    if (rec.feat0.size() != dim || rec.feat1.size() != dim) {
      Fail(ErrorCode::kShape, "comparison " + std::to_string(j) +
                                  " has wrong feature length");
    }
    if (rec.outcome != 0 && rec.outcome != 1) {
      Fail(ErrorCode::kValidation, "comparison " + std::to_string(j) +
                                       " has outcome outside {0,1}");
    }
    const auto col = static_cast<Eigen::Index>(j);
    data.diffs.col(col) = rec.feat0 - rec.feat1;
    data.signs(col) = rec.outcome == 0 ? 1.0 : -1.0;
  }
  return data;
}

ProjectedData Project(const Mat& omega, const UserData& data) {
  return {omega * data.diffs, data.signs};
}

ProjectedData Concatenate(std::span<const ProjectedData> parts) {
  Eigen::Index total = 0;
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    total += p.size();
    rows = p.x.rows();
  }
  ProjectedData out;
  out.x.resize(rows, total);
  out.signs.resize(total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.x.middleCols(at, p.size()) = p.x;
    out.signs.segment(at, p.size()) = p.signs;
    at += p.size();
  }
  return out;
}

double LogLikelihood(const LinkFunction& link, const ProjectedData& data,
                     const Vec& theta) {
  const Vec margins = data.x.transpose() * theta;
  double total = 0.0;
  for (Eigen::Index j = 0; j < margins.size(); ++j) {
    total += link.LogValue(data.signs(j) * margins(j));
  }
  return total;
}

double LogLikelihood(const LinkFunction& link, const Mat& omega,
                     const Vec& theta, const UserData& data) {
  return LogLikelihood(link, Project(omega, data), theta);
}

Vec ThetaGradient(const LinkFunction& link, const ProjectedData& data,
                  const Vec& theta) {
  const Vec margins = data.x.transpose() * theta;
  Vec weights(margins.size());
  for (Eigen::Index j = 0; j < margins.size(); ++j) {
    weights(j) = data.signs(j) * link.Score(data.signs(j) * margins(j));
  }
  return data.x * weights;
}

Mat ThetaHessian(const LinkFunction& link, const ProjectedData& data,
                 const Vec& theta) {
  const Vec margins = data.x.transpose() * theta;
  Vec curvature(margins.size());
  for (Eigen::Index j = 0; j < margins.size(); ++j) {
    curvature(j) = link.ScoreDerivative(data.signs(j) * margins(j));
  }
  return data.x * curvature.asDiagonal() * data.x.transpose();
}

double JointLogLikelihood(const LinkFunction& link, const Mat& omega,
                          const Mat& thetas, std::span<const UserData> users) {
  double total = 0.0;
  for (std::size_t i = 0; i < users.size(); ++i) {
    total += LogLikelihood(link, omega, thetas.col(static_cast<Eigen::Index>(i)),
                           users[i]);
  }
  return total;
}

Mat OmegaGradient(const LinkFunction& link, const Mat& omega,
                  const Mat& thetas, std::span<const UserData> users) {
  Mat grad = Mat::Zero(omega.rows(), omega.cols());
  for (std::size_t i = 0; i < users.size(); ++i) {
    const auto& data = users[i];
    const Vec theta = thetas.col(static_cast<Eigen::Index>(i));
    // r = theta^T omega diff, so d/d omega = theta diff^T.
    const Vec margins = data.diffs.transpose() * (omega.transpose() * theta);
    Vec weights(margins.size());
    for (Eigen::Index j = 0; j < margins.size(); ++j) {
      weights(j) = data.signs(j) * link.Score(data.signs(j) * margins(j));
    }
    grad += theta * (data.diffs * weights).transpose();
  }
  return grad;
}

Mat EmpiricalDesign(const ProjectedData& data) {
  if (data.size() == 0) return Mat::Zero(data.x.rows(), data.x.rows());
  return data.x * data.x.transpose() / static_cast<double>(data.size());
}

Vec ProjectToBall(Vec theta, double radius) {
  const double norm = theta.norm();
  if (norm > radius) theta *= radius / norm;
  return theta;
}

ThetaSolveResult MaximizeTheta(const LinkFunction& link,
                               const ProjectedData& data, const Vec& start,
                               double radius, const ThetaSolveOptions& options) {
  ThetaSolveResult result;
  result.theta = ProjectToBall(start, radius);
  const double n = static_cast<double>(data.size());
  if (data.size() == 0) {
    result.log_likelihood = 0.0;
    return result;
  }
  auto mean_ll = [&](const Vec& th) { return LogLikelihood(link, data, th) / n; };

  Vec theta = result.theta;
  double value = mean_ll(theta);
  double step = options.step_size;
  const int k = static_cast<int>(theta.size());
  int it = 0;
  double gm_norm = 0.0;
  for (; it < options.max_iters; ++it) {
    const Vec grad = ThetaGradient(link, data, theta) / n;
    gm_norm = (theta - ProjectToBall(theta + grad, radius)).norm();
    if (!std::isfinite(value) || !std::isfinite(gm_norm)) {
      Fail(ErrorCode::kNumerical,
           "non-finite likelihood in theta solve at iteration " +
               std::to_string(it));
    }
    if (gm_norm <= options.tol) break;

    bool moved = false;
    // Interior Newton step.
    const Mat neg_hessian = -ThetaHessian(link, data, theta) / n +
                            1e-12 * Mat::Identity(k, k);
    const Vec direction = neg_hessian.ldlt().solve(grad);
    if (direction.allFinite() && (theta + direction).norm() <= radius) {
      const double slope = grad.dot(direction);
      double t = 1.0;
      for (int bt = 0; bt < 30 && slope > 0; ++bt, t *= 0.5) {
        const Vec candidate = theta + t * direction;
        const double cand_value = mean_ll(candidate);
        if (cand_value >= value + 1e-4 * t * slope) {
          moved = cand_value > value || (candidate - theta).norm() > 0;
          theta = candidate;
          value = cand_value;
          break;
        }
      }
    }
    if (!moved) {
      // Projected gradient with backtracking on the quadratic upper model.
      for (int bt = 0; bt < 60; ++bt) {
        const Vec candidate = ProjectToBall(theta + step * grad, radius);
        const Vec delta = candidate - theta;
        const double cand_value = mean_ll(candidate);
        if (cand_value >= value + grad.dot(delta) - delta.squaredNorm() / (2 * step)) {
          if (cand_value >= value) {
            moved = delta.norm() > 0;
            theta = candidate;
            value = cand_value;
          }
          step *= 2.0;
          break;
        }
        step *= 0.5;
      }
    }
    if (!moved) break;
  }
  result.theta = theta;
  result.log_likelihood = LogLikelihood(link, data, theta);
  result.grad_norm = gm_norm;
  result.iterations = it;
  return result;
}

}  // namespace prefagg
