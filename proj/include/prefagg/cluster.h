#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prefagg/common.h"
#include "prefagg/likelihood.h"
#include "prefagg/link.h"
#include "prefagg/mle.h"

namespace prefagg {

struct Clustering {
  Mat cluster_thetas;           // k x K
  std::vector<int> assignment;  // user -> cluster
  double objective = 0.0;       // sum_i max_k sum_j log P_{omega_hat, theta_(k)}
  std::vector<double> objective_trace;  // after every assignment/update step
  int best_restart = 0;
};

// EM-style hard clustering with the representation frozen at omega_hat.
// Assignment picks the best cluster per user (ties to the lowest index);
// update maximizes each cluster's theta on the pooled data of its members.
// An empty cluster is re-seeded with the individual MLE of the user whose
// current fit is worst, and that user moves into it.
Clustering ClusterFit(std::span<const UserData> users, int num_clusters,
                      const Mat& omega_hat, const LinkFunction& link,
                      double bound, const FitConfig& cfg, std::uint64_t seed);

// max over the grid of |mean LL on data_i - mean LL on data_j|, a lower bound
// on the supremum over the whole parameter ball.
double LabelDiscrepancy(const UserData& data_i, const UserData& data_j,
                        const Mat& omega, const Mat& theta_grid,
                        const LinkFunction& link);

// Sobol points of [-B, B]^k, shrunk radially into the B-ball. k x points.
Mat SobolThetaGrid(int rank, double bound, int points = 4096);

}  // namespace prefagg
