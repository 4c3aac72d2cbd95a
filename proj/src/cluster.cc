#include "prefagg/cluster.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <boost/random/sobol.hpp>

namespace prefagg {
namespace {

struct EmRun {
  Mat thetas;
  std::vector<int> assignment;
  double objective = -std::numeric_limits<double>::infinity();
  std::vector<double> trace;
};

// Neumaier-compensated sum in extended precision, so that objective values
// summed over different groupings agree to well below one ulp.
class AccurateSum {
 public:
  void Add(double x) {
    const long double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(static_cast<long double>(x))) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return static_cast<double>(sum_ + comp_); }

 private:
  long double sum_ = 0.0L;
  long double comp_ = 0.0L;
};

double AssignedObjective(const Mat& table, const std::vector<int>& assignment) {
  AccurateSum total;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    total.Add(table(static_cast<Eigen::Index>(i), assignment[i]));
  }
  return total.value();
}

Mat LikelihoodTable(const LinkFunction& link, const std::vector<ProjectedData>& data,
                    const Mat& thetas) {
  Mat table(static_cast<Eigen::Index>(data.size()), thetas.cols());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (Eigen::Index k = 0; k < thetas.cols(); ++k) {
      table(static_cast<Eigen::Index>(i), k) =
          LogLikelihood(link, data[i], thetas.col(k));
    }
  }
  return table;
}

EmRun RunEm(const LinkFunction& link, const std::vector<ProjectedData>& data,
            Mat thetas, double bound, const FitConfig& cfg) {
  const int n = static_cast<int>(data.size());
  const int num_clusters = static_cast<int>(thetas.cols());
  ThetaSolveOptions options = ThetaOptions(cfg);
  options.max_iters = std::max(options.max_iters, 500);
  options.tol = std::min(options.tol, 1e-10);

  EmRun run;
  run.thetas = std::move(thetas);
  Mat table = LikelihoodTable(link, data, run.thetas);
  std::vector<int> previous;

  for (int it = 0; it < cfg.max_iters; ++it) {
    // Assignment step.
    run.assignment.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      for (int k = 1; k < num_clusters; ++k) {
        if (table(i, k) > table(i, best)) best = k;
      }
      run.assignment[static_cast<std::size_t>(i)] = best;
    }
    // Re-seed empty clusters from the worst-fit user of a multi-member cluster.
    for (int k = 0; k < num_clusters; ++k) {
      std::vector<int> sizes(static_cast<std::size_t>(num_clusters), 0);
      for (int a : run.assignment) ++sizes[static_cast<std::size_t>(a)];
      if (sizes[static_cast<std::size_t>(k)] > 0) continue;
      int worst = -1;
      for (int i = 0; i < n; ++i) {
        const int a = run.assignment[static_cast<std::size_t>(i)];
        if (sizes[static_cast<std::size_t>(a)] < 2) continue;
        if (worst < 0 || table(i, a) < table(worst, run.assignment[static_cast<std::size_t>(worst)])) {
          worst = i;
        }
      }
      if (worst < 0) break;  // fewer users than clusters
      run.thetas.col(k) = MaximizeTheta(link, data[static_cast<std::size_t>(worst)],
                                        Vec::Zero(run.thetas.rows()), bound, options)
                              .theta;
      for (int i = 0; i < n; ++i) {
        table(i, k) = LogLikelihood(link, data[static_cast<std::size_t>(i)], run.thetas.col(k));
      }
      run.assignment[static_cast<std::size_t>(worst)] = k;
    }
    run.trace.push_back(AssignedObjective(table, run.assignment));

    // Update step.
    bool changed = false;
    for (int k = 0; k < num_clusters; ++k) {
      std::vector<ProjectedData> members;
      std::vector<int> member_ids;
      for (int i = 0; i < n; ++i) {
        if (run.assignment[static_cast<std::size_t>(i)] == k) {
          members.push_back(data[static_cast<std::size_t>(i)]);
          member_ids.push_back(i);
        }
      }
      if (members.empty()) continue;
      const ProjectedData pooled = Concatenate(members);
      const Vec updated =
          MaximizeTheta(link, pooled, run.thetas.col(k), bound, options).theta;
      AccurateSum old_sum;
      AccurateSum new_sum;
      Vec new_col(n);
      for (int i : member_ids) {
        old_sum.Add(table(i, k));
        new_col(i) = LogLikelihood(link, data[static_cast<std::size_t>(i)], updated);
        new_sum.Add(new_col(i));
      }
      if (new_sum.value() > old_sum.value()) {
        changed = changed || (updated - run.thetas.col(k)).norm() > cfg.tol;
        run.thetas.col(k) = updated;
        for (int i = 0; i < n; ++i) {
          table(i, k) = run.assignment[static_cast<std::size_t>(i)] == k
                            ? new_col(i)
                            : LogLikelihood(link, data[static_cast<std::size_t>(i)], updated);
        }
      }
    }
    run.trace.push_back(AssignedObjective(table, run.assignment));
    run.objective = run.trace.back();

    if (!changed && run.assignment == previous) break;
    previous = run.assignment;
  }
  return run;
}

}  // namespace

Clustering ClusterFit(std::span<const UserData> users, int num_clusters,
                      const Mat& omega_hat, const LinkFunction& link,
                      double bound, const FitConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  if (num_clusters < 1) Fail(ErrorCode::kDomain, "K must be at least 1");
  if (users.empty()) Fail(ErrorCode::kInput, "no users to cluster");
  std::vector<ProjectedData> data;
  data.reserve(users.size());
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (users[i].size() == 0) {
      Fail(ErrorCode::kInput, "user " + std::to_string(i) + " has no comparisons");
    }
    data.push_back(Project(omega_hat, users[i]));
  }
  const int n = static_cast<int>(data.size());
  const int k_dim = static_cast<int>(omega_hat.rows());
  ThetaSolveOptions init_options = ThetaOptions(cfg);

  EmRun best;
  int best_restart = -1;
  for (int r = 0; r < cfg.restarts; ++r) {
    Rng rng = MakeRng(DeriveSeed(seed, static_cast<std::uint64_t>(r)));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    // Fisher-Yates with the library's uniform draws.
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(Uniform01(rng) * (i + 1));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(std::min(j, i))]);
    }
    Mat init(k_dim, num_clusters);
    for (int k = 0; k < num_clusters; ++k) {
      if (k < n) {
        init.col(k) = MaximizeTheta(link, data[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])],
                                    Vec::Zero(k_dim), bound, init_options)
                          .theta;
      } else {
        init.col(k) = bound * Uniform01(rng) * UnitSphere(rng, k_dim);
      }
    }
    EmRun run = RunEm(link, data, std::move(init), bound, cfg);
    if (best_restart < 0 || run.objective > best.objective) {
      best = std::move(run);
      best_restart = r;
    }
  }

  Clustering out;
  out.cluster_thetas = std::move(best.thetas);
  out.assignment = std::move(best.assignment);
  out.objective = best.objective;
  out.objective_trace = std::move(best.trace);
  out.best_restart = best_restart;
  return out;
}

double LabelDiscrepancy(const UserData& data_i, const UserData& data_j,
                        const Mat& omega, const Mat& theta_grid,
                        const LinkFunction& link) {
  if (theta_grid.cols() == 0) Fail(ErrorCode::kInput, "theta grid is empty");
  if (data_i.size() == 0 || data_j.size() == 0) {
    Fail(ErrorCode::kInput, "label discrepancy needs non-empty datasets");
  }
  const ProjectedData pi = Project(omega, data_i);
  const ProjectedData pj = Project(omega, data_j);
  double best = 0.0;
  for (Eigen::Index g = 0; g < theta_grid.cols(); ++g) {
    const Vec theta = theta_grid.col(g);
    const double gap = LogLikelihood(link, pi, theta) / pi.size() -
                       LogLikelihood(link, pj, theta) / pj.size();
    best = std::max(best, std::abs(gap));
  }
  return best;
}

Mat SobolThetaGrid(int rank, double bound, int points) {
  if (rank < 1 || points < 1) Fail(ErrorCode::kDomain, "bad Sobol grid size");
  boost::random::sobol engine(static_cast<std::size_t>(rank));
  const double scale = static_cast<double>(engine.max()) + 1.0;
  Mat grid(rank, points);
  for (int p = 0; p < points; ++p) {
    for (int c = 0; c < rank; ++c) {
      const double u = static_cast<double>(engine()) / scale;
      grid(c, p) = bound * (2.0 * u - 1.0);
    }
    grid.col(p) = ProjectToBall(grid.col(p), bound);
  }
  return grid;
}

}  // namespace prefagg
