#include "prefagg/population.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace prefagg {
namespace {

void ValidateSide(const FeatureDistribution& side, const PopulationConfig& cfg,
                  const char* name) {
  if (side.kind == FeatureDistribution::Kind::kGaussian) {
    if (!(side.sigma >= 0) || !std::isfinite(side.mean)) {
      Fail(ErrorCode::kValidation, std::string(name) + ": invalid Gaussian");
    }
    return;
  }
  if (!cfg.catalog) {
    Fail(ErrorCode::kValidation, std::string(name) + " samples from a catalog "
                                 "but none was provided");
  }
  if (side.weights.size() != cfg.catalog->size()) {
    Fail(ErrorCode::kValidation, std::string(name) +
                                     ": weights length differs from catalog size");
  }
  if ((side.weights.array() < 0).any() ||
      std::abs(side.weights.sum() - 1.0) > 1e-9) {
    Fail(ErrorCode::kValidation, std::string(name) + ": weights not on simplex");
  }
}

}  // namespace

void PopulationConfig::Validate() const {
  if (num_users < 1 || dim < 1 || rank < 1 || per_user < 1) {
    Fail(ErrorCode::kValidation, "N, d, k and N_p must be positive");
  }
  if (rank > dim) Fail(ErrorCode::kValidation, "k must not exceed d");
  if (!(bound > 0) || !(r_max > 0)) {
    Fail(ErrorCode::kValidation, "B and R_max must be positive");
  }
  if (catalog && catalog->dim() != dim) {
    Fail(ErrorCode::kValidation, "catalog feature dimension differs from d");
  }
  if (catalog && catalog->size() < 1) {
    Fail(ErrorCode::kValidation, "catalog is empty");
  }
  ValidateSide(mu0, *this, "mu0");
  ValidateSide(mu1, *this, "mu1");
}

DiversityReport Diversity(const Mat& thetas) {
  DiversityReport report;
  const int k = static_cast<int>(thetas.rows());
  const int n = static_cast<int>(thetas.cols());
  if (n < k || n == 0) return report;
  Eigen::JacobiSVD<Mat> svd(thetas);
  const double sk = svd.singularValues()(k - 1);
  report.sigma_k_sq = sk * sk;
  report.normalized = report.sigma_k_sq * k / n;
  return report;
}

FeatureVector EnforceRewardBound(const RewardModel& model, FeatureVector feat) {
  const double norm = (model.omega * feat).norm() * model.bound;
  if (norm > model.r_max) feat *= model.r_max / norm;
  return feat;
}

TrajectoryCatalog EnforceRewardBound(const RewardModel& model,
                                     TrajectoryCatalog catalog) {
  for (int t = 0; t < catalog.size(); ++t) {
    catalog.features.col(t) = EnforceRewardBound(model, catalog.features.col(t));
  }
  return catalog;
}

Population GeneratePopulation(const PopulationConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  Rng rng = MakeRng(seed);
  Population pop;
  for (int attempt = 1; attempt <= cfg.max_retries; ++attempt) {
    RewardModel model;
    model.bound = cfg.bound;
    model.r_max = cfg.r_max;
    model.omega = RandomOrthonormalRows(rng, cfg.rank, cfg.dim);
    model.thetas.resize(cfg.rank, cfg.num_users);
    for (int i = 0; i < cfg.num_users; ++i) {
      model.thetas.col(i) = cfg.bound * UnitSphere(rng, cfg.rank);
    }
    DiversityReport report = Diversity(model.thetas);
    report.attempts = attempt;
    if (report.normalized >= cfg.diversity_target) {
      pop.model = std::move(model);
      pop.diversity = report;
      if (cfg.catalog) pop.catalog = EnforceRewardBound(pop.model, *cfg.catalog);
      return pop;
    }
  }
  Fail(ErrorCode::kDiversityUnsatisfiable,
       "no population met diversity target " +
           std::to_string(cfg.diversity_target) + " in " +
           std::to_string(cfg.max_retries) + " attempts");
}

int SampleIndex(const Vec& weights, Rng& rng) {
  const double u = Uniform01(rng) * weights.sum();
  double acc = 0.0;
  int last_positive = 0;
  for (int i = 0; i < weights.size(); ++i) {
    if (weights(i) <= 0) continue;
    last_positive = i;
    acc += weights(i);
    if (u < acc) return i;
  }
  return last_positive;
}

FeatureVector SampleFeature(const FeatureDistribution& dist,
                            const std::optional<TrajectoryCatalog>& catalog,
                            int dim, Rng& rng) {
  if (dist.kind == FeatureDistribution::Kind::kCatalog) {
    return catalog->at(SampleIndex(dist.weights, rng));
  }
  Vec f = StandardNormalVector(rng, dim) * dist.sigma;
  f.array() += dist.mean;
  return f;
}

Dataset GenerateDataset(const RewardModel& model, const PopulationConfig& cfg,
                        const LinkFunction& link, std::uint64_t seed) {
  cfg.Validate();
  model.Validate();
  if (model.num_users() != cfg.num_users || model.dim() != cfg.dim) {
    Fail(ErrorCode::kShape, "model does not match population config");
  }
  std::optional<TrajectoryCatalog> catalog;
  if (cfg.catalog) catalog = EnforceRewardBound(model, *cfg.catalog);

  Dataset data;
  data.header = {cfg.num_users, cfg.dim, cfg.rank, cfg.bound, cfg.r_max, seed};
  data.records.reserve(static_cast<std::size_t>(cfg.num_users) * cfg.per_user);
  for (int i = 0; i < cfg.num_users; ++i) {
    Rng rng = MakeRng(DeriveSeed(seed, static_cast<std::uint64_t>(i)));
    for (int j = 0; j < cfg.per_user; ++j) {
      FeatureVector f0 = SampleFeature(cfg.mu0, catalog, cfg.dim, rng);
      FeatureVector f1 = SampleFeature(cfg.mu1, catalog, cfg.dim, rng);
      if (cfg.mu0.kind == FeatureDistribution::Kind::kGaussian) {
        f0 = EnforceRewardBound(model, std::move(f0));
      }
      if (cfg.mu1.kind == FeatureDistribution::Kind::kGaussian) {
        f1 = EnforceRewardBound(model, std::move(f1));
      }
      data.records.push_back(SampleComparison(model, i, f0, f1, link, rng));
    }
  }
  return data;
}

std::vector<std::vector<ComparisonDatum>> Dataset::ByUser() const {
  std::vector<std::vector<ComparisonDatum>> groups(
      static_cast<std::size_t>(header.num_users));
  for (const auto& rec : records) {
    if (rec.user < 0 || rec.user >= header.num_users) {
      Fail(ErrorCode::kInput, "record user " + std::to_string(rec.user) +
                                  " outside [0, N)");
    }
    groups[static_cast<std::size_t>(rec.user)].push_back(rec);
  }
  return groups;
}

std::vector<ComparisonDatum> Dataset::ForUser(int user) const {
  std::vector<ComparisonDatum> out;
  for (const auto& rec : records) {
    if (rec.user == user) out.push_back(rec);
  }
  return out;
}

}  // namespace prefagg
