#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "prefagg/common.h"
#include "prefagg/link.h"
#include "prefagg/reward_model.h"

namespace prefagg {

// Finite trajectory space: one feature column per trajectory.
struct TrajectoryCatalog {
  Mat features;  // d x T

  int size() const { return static_cast<int>(features.cols()); }
  int dim() const { return static_cast<int>(features.rows()); }
  FeatureVector at(int t) const { return features.col(t); }
};

// How trajectory features are drawn for one side (mu0 or mu1) of a comparison.
struct FeatureDistribution {
  enum class Kind { kGaussian, kCatalog };
  Kind kind = Kind::kGaussian;
  double mean = 0.0;   // Gaussian: isotropic mean (every coordinate)
  double sigma = 1.0;  // Gaussian: per-coordinate standard deviation
  Vec weights;         // Catalog: probabilities over catalog entries
};

struct PopulationConfig {
  int num_users = 30;          // N
  int dim = 20;                // d
  int rank = 3;                // k
  double bound = 1.0;          // B
  double r_max = 2.0;          // R_max
  int per_user = 200;          // N_p
  FeatureDistribution mu0;
  FeatureDistribution mu1;
  std::optional<TrajectoryCatalog> catalog;  // required by kCatalog sides
  // Floor on the normalized diversity sigma_k^2(Theta*) * k / N.
  double diversity_target = 0.1;
  int max_retries = 100;

  void Validate() const;
};

struct DiversityReport {
  double sigma_k_sq = 0.0;   // sigma_k^2(Theta*)
  double normalized = 0.0;   // sigma_k^2 * k / N
  int attempts = 0;
};

DiversityReport Diversity(const Mat& thetas);

struct Population {
  RewardModel model;
  DiversityReport diversity;
  // Catalog after rescaling so that |r_i(tau)| <= R_max on every entry.
  std::optional<TrajectoryCatalog> catalog;
};

// omega is the orthonormal factor of a Gaussian matrix and theta_i is uniform
// on the radius-B sphere; redrawn until the diversity floor is met.
Population GeneratePopulation(const PopulationConfig& cfg, std::uint64_t seed);

// Shrinks a feature vector toward 0 so that B * ||omega f|| <= R_max.
FeatureVector EnforceRewardBound(const RewardModel& model, FeatureVector feat);
TrajectoryCatalog EnforceRewardBound(const RewardModel& model,
                                     TrajectoryCatalog catalog);

struct DatasetHeader {
  int num_users = 0;
  int dim = 0;
  int rank = 0;
  double bound = 1.0;
  double r_max = 1.0;
  std::uint64_t seed = 0;
};

// Comparisons sorted by user.
struct Dataset {
  DatasetHeader header;
  std::vector<ComparisonDatum> records;

  std::vector<std::vector<ComparisonDatum>> ByUser() const;
  std::vector<ComparisonDatum> ForUser(int user) const;
};

// Exactly N_p comparisons per user with feat0 ~ mu0 and feat1 ~ mu1 drawn
// independently. User i draws from the substream DeriveSeed(seed, i).
Dataset GenerateDataset(const RewardModel& model, const PopulationConfig& cfg,
                        const LinkFunction& link, std::uint64_t seed);

// One trajectory feature from a side distribution.
FeatureVector SampleFeature(const FeatureDistribution& dist,
                            const std::optional<TrajectoryCatalog>& catalog,
                            int dim, Rng& rng);

// Index draw from a discrete distribution by inverse CDF.
int SampleIndex(const Vec& weights, Rng& rng);

}  // namespace prefagg
