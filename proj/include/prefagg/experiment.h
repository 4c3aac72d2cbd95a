#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "prefagg/aggregate.h"
#include "prefagg/io.h"
#include "prefagg/mechanism.h"
#include "prefagg/mle.h"
#include "prefagg/population.h"

namespace prefagg {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Pipeline stages in execution order.
inline const std::vector<std::string>& AllStages() {
  static const std::vector<std::string> stages = {"gen",       "fit",       "cluster",
                                                  "aggregate", "mechanism", "policy"};
  return stages;
}

// Population defaults with both comparison sides drawn uniformly from the
// catalog.
inline PopulationConfig CatalogPopulation() {
  PopulationConfig pc;
  pc.mu0.kind = FeatureDistribution::Kind::kCatalog;
  pc.mu1.kind = FeatureDistribution::Kind::kCatalog;
  return pc;
}

struct ExperimentConfig {
  PopulationConfig population = CatalogPopulation();  // per_user comes from n_p_sweep
  FitConfig fit;
  std::vector<Alpha> alphas = {Alpha::Finite(0.0), Alpha::Finite(-1.0)};
  std::vector<Distance> distances = {Distance::Kl(), Distance::Renyi(0.5)};
  std::vector<int> n_p_sweep = {200};
  std::vector<std::uint64_t> seeds = {1};
  std::string output_dir;       // empty: no files written
  std::vector<std::string> stages = AllStages();

  // Finite catalog used for comparisons and policies. Either loaded from
  // catalog_csv or drawn as catalog_size Gaussian trajectories.
  std::string catalog_csv;
  int catalog_size = 50;
  double catalog_sigma = 1.0;

  int clusters = 2;                   // K for the clustering stage
  bool clustered_population = false;  // ground truth made of K theta centers

  int mechanism_labelers = 4;  // first users form the opinion profile
  int mechanism_answers = 3;   // first catalog entries are the answers
  int audit_resolution = 20;
  int audit_random_points = 1000;
  double audit_tol = 1e-8;

  int aggregation_samples = 1024;
  int threads = 0;  // 0: one per seed, capped by the hardware

  void Validate() const;
};

// Unknown keys and missing referenced files are validation errors.
ExperimentConfig ConfigFromJson(const Json& j);
Json ConfigToJson(const ExperimentConfig& cfg);
ExperimentConfig LoadExperimentConfig(const std::string& path);

std::string Sha256Hex(std::string_view data);

// SHA-256 of the normalized config JSON.
std::string ConfigHash(const ExperimentConfig& cfg);

struct RunReport {
  std::string config_hash;
  std::string tool_version;
  std::string timestamp;  // the only field allowed to differ between reruns
  Json seeds;             // per seed: per N_p: per stage status and metrics
  Json summary;           // medians over seeds per N_p

  Json ToJson() const;
};

// Runs every configured stage for each (seed, N_p). A failing stage is
// recorded with its error; stages that depend on it are marked skipped.
// Writes report.json and metrics.csv when output_dir is set.
RunReport RunExperiment(const ExperimentConfig& cfg);

}  // namespace prefagg
