#include "prefagg/experiment.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include <openssl/evp.h>

#include "prefagg/cluster.h"
#include "prefagg/likelihood.h"
#include "prefagg/link.h"
#include "prefagg/policy.h"

namespace prefagg {
namespace {

// Reads an object's fields with defaults and rejects keys nobody consumed.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) Fail(ErrorCode::kValidation, where_ + " must be an object");
  }

  template <typename T>
  void Read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception&) {
      Fail(ErrorCode::kValidation, where_ + "." + key + " has the wrong type");
    }
  }

  const Json* Get(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void Finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        Fail(ErrorCode::kValidation, where_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Alpha AlphaFromJson(const Json& j) {
  if (j.is_number()) return Alpha::Finite(j.get<double>());
  if (j.is_string()) return Alpha::Parse(j.get<std::string>());
  Fail(ErrorCode::kValidation, "alpha must be a number or a string");
}

Json AlphaToJson(const Alpha& a) { return a.ToString(); }

std::string Timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buffer;
}

double Median(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

// Fraction of users whose cluster matches the truth under the best relabeling.
double ClusterAccuracy(const std::vector<int>& truth, const std::vector<int>& found, int k) {
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  int best = 0;
  do {
    int hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (perm[static_cast<std::size_t>(found[i])] == truth[i]) ++hits;
    }
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(truth.size());
}

Json ErrorJson(const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  return {{"code", err ? std::string(ErrorCodeName(err->code())) : std::string("internal")},
          {"message", e.what()}};
}

struct SeedContext {
  // gen
  Population population;
  TrajectoryCatalog catalog;
  std::vector<int> true_clusters;
  std::vector<UserData> users;
  // fit
  Estimate estimate;
};

class SeedRun {
 public:
  SeedRun(const ExperimentConfig& cfg, std::uint64_t seed, int n_p)
      : cfg_(cfg), seed_(seed), n_p_(n_p), link_(LinkFunction::Sigmoid()) {}

  Json Run() {
    Json stages = Json::object();
    std::map<std::string, bool> ok;
    const std::map<std::string, std::string> needs = {{"fit", "gen"},       {"cluster", "fit"},
                                                      {"aggregate", "fit"}, {"mechanism", "fit"},
                                                      {"policy", "fit"}};
    for (const auto& stage : AllStages()) {
      if (std::find(cfg_.stages.begin(), cfg_.stages.end(), stage) == cfg_.stages.end()) {
        continue;
      }
      const auto dep = needs.find(stage);
      if (dep != needs.end() && !ok[dep->second]) {
        stages[stage] = {{"status", "skipped"}, {"reason", dep->second + " did not complete"}};
        ok[stage] = false;
        continue;
      }
      try {
        Json metrics = RunStage(stage);
        metrics["status"] = "ok";
        stages[stage] = std::move(metrics);
        ok[stage] = true;
      } catch (const std::exception& e) {
        stages[stage] = {{"status", "failed"}, {"error", ErrorJson(e)}};
        ok[stage] = false;
      }
    }
    return {{"n_p", n_p_}, {"stages", std::move(stages)}};
  }

  const std::vector<FitLogEntry>& fit_log() const { return ctx_.estimate.log; }

 private:
  Json RunStage(const std::string& stage) {
    if (stage == "gen") return Gen();
    if (stage == "fit") return Fit();
    if (stage == "cluster") return Cluster();
    if (stage == "aggregate") return Aggregate();
    if (stage == "mechanism") return Mechanism();
    return PolicyStage();
  }

  PopulationConfig PopulationFor() const {
    PopulationConfig pc = cfg_.population;
    pc.per_user = n_p_;
    return pc;
  }

  Json Gen() {
    PopulationConfig pc = PopulationFor();
    if (!cfg_.catalog_csv.empty()) {
      pc.catalog = ReadCatalogCsv(cfg_.catalog_csv);
    } else {
      Rng rng = MakeRng(DeriveSeed(seed_, 1));
      pc.catalog = TrajectoryCatalog{cfg_.catalog_sigma *
                                     StandardNormalMatrix(rng, pc.dim, cfg_.catalog_size)};
    }
    const int t = pc.catalog->size();
    if (pc.mu0.kind == FeatureDistribution::Kind::kCatalog && pc.mu0.weights.size() == 0) {
      pc.mu0.weights = Vec::Constant(t, 1.0 / t);
    }
    if (pc.mu1.kind == FeatureDistribution::Kind::kCatalog && pc.mu1.weights.size() == 0) {
      pc.mu1.weights = Vec::Constant(t, 1.0 / t);
    }
    if (cfg_.clustered_population) pc.diversity_target = 0.0;
    ctx_.population = GeneratePopulation(pc, DeriveSeed(seed_, 0));
    if (cfg_.clustered_population) MakeClustered(pc);
    ctx_.catalog = *ctx_.population.catalog;
    // Downstream stages see the rescaled catalog.
    pc.catalog = ctx_.catalog;
    mu0_ = pc.mu0;
    mu1_ = pc.mu1;
    const Dataset data =
        GenerateDataset(ctx_.population.model, pc, link_, DeriveSeed(seed_, 2));
    const auto groups = data.ByUser();
    ctx_.users.clear();
    for (const auto& g : groups) ctx_.users.push_back(MakeUserData(g, pc.dim));

    const Mat rewards = RewardTable(ctx_.population.model, ctx_.catalog.features);
    return {{"records", data.records.size()},
            {"catalog_size", t},
            {"diversity_normalized", ctx_.population.diversity.normalized},
            {"diversity_attempts", ctx_.population.diversity.attempts},
            {"max_abs_reward", rewards.cwiseAbs().maxCoeff()}};
  }

  void MakeClustered(const PopulationConfig& pc) {
    Rng rng = MakeRng(DeriveSeed(seed_, 6));
    const int k = cfg_.clusters;
    Mat centers(pc.rank, k);
    centers.col(0) = pc.bound * UnitSphere(rng, pc.rank);
    for (int c = 1; c < k; ++c) {
      centers.col(c) = k == 2 ? Vec(-centers.col(0)) : Vec(pc.bound * UnitSphere(rng, pc.rank));
    }
    ctx_.true_clusters.assign(static_cast<std::size_t>(pc.num_users), 0);
    for (int i = 0; i < pc.num_users; ++i) {
      ctx_.true_clusters[static_cast<std::size_t>(i)] = i % k;
      ctx_.population.model.thetas.col(i) = centers.col(i % k);
    }
    ctx_.population.diversity = Diversity(ctx_.population.model.thetas);
  }

  Json Fit() {
    const auto& model = ctx_.population.model;
    const ModelDims dims{model.num_users(), model.dim(), model.rank(), model.bound};
    ctx_.estimate = MleFit(ctx_.users, link_, dims, cfg_.fit, DeriveSeed(seed_, 3));
    const Alignment align = ProcrustesAlign(ctx_.estimate.thetas_hat, model.thetas);
    const Mat subspace_gap = ctx_.estimate.omega_hat.transpose() * ctx_.estimate.omega_hat -
                             model.omega.transpose() * model.omega;
    double true_ll = 0.0;
    for (std::size_t i = 0; i < ctx_.users.size(); ++i) {
      true_ll += LogLikelihood(link_, model.omega, model.thetas.col(static_cast<Eigen::Index>(i)),
                               ctx_.users[i]);
    }
    return {{"log_likelihood", ctx_.estimate.log_likelihood},
            {"true_log_likelihood", true_ll},
            {"grad_norm", ctx_.estimate.grad_norm},
            {"iterations", ctx_.estimate.iterations},
            {"converged", ctx_.estimate.converged},
            {"best_restart", ctx_.estimate.best_restart},
            {"aligned_error", align.residual / std::sqrt(static_cast<double>(model.num_users()))},
            {"subspace_error", subspace_gap.norm()}};
  }

  Json Cluster() {
    const Clustering c = ClusterFit(ctx_.users, cfg_.clusters, ctx_.estimate.omega_hat, link_,
                                    cfg_.population.bound, cfg_.fit, DeriveSeed(seed_, 4));
    bool monotone = true;
    for (std::size_t t = 1; t < c.objective_trace.size(); ++t) {
      monotone = monotone && c.objective_trace[t] >= c.objective_trace[t - 1];
    }
    std::vector<int> sizes(static_cast<std::size_t>(cfg_.clusters), 0);
    for (int a : c.assignment) ++sizes[static_cast<std::size_t>(a)];
    Json out = {{"objective", c.objective},
                {"trace_length", c.objective_trace.size()},
                {"objective_monotone", monotone},
                {"sizes", sizes},
                {"best_restart", c.best_restart}};
    out["accuracy"] = cfg_.clustered_population
                          ? Json(ClusterAccuracy(ctx_.true_clusters, c.assignment, cfg_.clusters))
                          : Json(nullptr);
    return out;
  }

  Mat EstimatedRewards() const {
    Mat table(ctx_.estimate.thetas_hat.cols(), ctx_.catalog.size());
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
      table.row(i) = CatalogRewards(ctx_.estimate.thetas_hat.col(i), ctx_.estimate.omega_hat,
                                    ctx_.catalog)
                         .transpose();
    }
    return table;
  }

  Json Aggregate() {
    const Mat table = EstimatedRewards();
    Json out = Json::object();
    Json gaps = Json::object();
    Json aggregated = Json::object();
    for (const auto& alpha : cfg_.alphas) {
      gaps[alpha.ToString()] = PlEquivalenceGap(alpha, table);
      Vec agg(table.cols());
      for (Eigen::Index t = 0; t < table.cols(); ++t) agg(t) = AggReward(alpha, table.col(t));
      Eigen::Index best = 0;
      agg.maxCoeff(&best);
      aggregated[alpha.ToString()] = {{"best_trajectory", best}, {"best_value", agg(best)}};
    }
    out["pl_equivalence_gap"] = std::move(gaps);
    out["aggregated_reward"] = std::move(aggregated);
    return out;
  }

  Json Mechanism() {
    const Mat table = EstimatedRewards();
    const int labelers = std::min<int>(cfg_.mechanism_labelers, static_cast<int>(table.rows()));
    const int answers = std::min<int>(cfg_.mechanism_answers, static_cast<int>(table.cols()));
    if (answers < 2) Fail(ErrorCode::kValidation, "mechanism stage needs at least 2 answers");
    OpinionProfile profile;
    profile.rows.resize(labelers, answers);
    for (int i = 0; i < labelers; ++i) {
      profile.rows.row(i) = PlProbabilities(table.row(i).head(answers).transpose()).transpose();
    }
    Rng rng = MakeRng(DeriveSeed(seed_, 5));
    const std::vector<Vec> grid =
        DefaultMisreportGrid(answers, rng, cfg_.audit_resolution, cfg_.audit_random_points);
    Json out = Json::object();
    for (const auto& dist : cfg_.distances) {
      const MechanismOutcome outcome = RunMechanism(dist, profile);
      const AuditReport audit = DsicAudit(profile, dist, grid, {cfg_.audit_tol, false});
      out[dist.ToString()] = {{"aggregate", std::vector<double>(outcome.aggregate.data(),
                                                                outcome.aggregate.data() +
                                                                    outcome.aggregate.size())},
                              {"costs", outcome.costs},
                              {"welfare", outcome.welfare},
                              {"dsic_violations", audit.violations},
                              {"worst_gap", audit.worst_gap},
                              {"grid_size", audit.grid_size}};
    }
    return out;
  }

  Json PolicyStage() {
    const auto& model = ctx_.population.model;
    const Estimate& est = ctx_.estimate;
    const int n = model.num_users();
    const LinkConstants consts = ComputeLinkConstants(link_, model.r_max);
    const RadiusDims rdims{model.rank(), n, n_p_, model.dim(), model.bound, model.r_max};
    const double radius = ConfidenceRadius(cfg_.fit, consts, rdims);
    const int t = ctx_.catalog.size();
    const Policy mu_ref = mu1_.kind == FeatureDistribution::Kind::kCatalog
                              ? Policy{mu1_.weights}
                              : Policy::Uniform(t);
    const PolicySlate slate = DefaultSlate(t);
    std::vector<ConfidenceEllipsoid> ells;
    for (int i = 0; i < n; ++i) {
      ells.push_back(MakeEllipsoid(est.thetas_hat.col(i), est.designs[static_cast<std::size_t>(i)],
                                   cfg_.fit.lambda, radius));
    }
    const Mat true_rewards = RewardTable(model, ctx_.catalog.features);  // N x T

    double personal = 0.0;
    for (int i = 0; i < n; ++i) {
      const PolicyChoice choice =
          PessimisticPolicy(slate, ells[static_cast<std::size_t>(i)], est.omega_hat,
                            ctx_.catalog, mu_ref);
      const Vec r = true_rewards.row(i).transpose();
      const double chosen = Value(slate.candidates[static_cast<std::size_t>(choice.index)], r);
      personal += r.maxCoeff() - chosen;
    }
    Json aggregated = Json::object();
    for (const auto& alpha : cfg_.alphas) {
      AggregationSampling sampling;
      sampling.samples = cfg_.aggregation_samples;
      sampling.seed = DeriveSeed(seed_, 7);
      const PolicyChoice choice =
          AggregatedPolicy(slate, ells, est.omega_hat, alpha, ctx_.catalog, mu_ref, sampling);
      Vec agg(t);
      for (int c = 0; c < t; ++c) agg(c) = AggReward(alpha, true_rewards.col(c));
      aggregated[alpha.ToString()] =
          agg.maxCoeff() - Value(slate.candidates[static_cast<std::size_t>(choice.index)], agg);
    }
    return {{"radius", radius},
            {"suboptimality", personal / n},
            {"aggregated_suboptimality", std::move(aggregated)}};
  }

  const ExperimentConfig& cfg_;
  std::uint64_t seed_;
  int n_p_;
  LinkFunction link_;
  SeedContext ctx_;
  FeatureDistribution mu0_;
  FeatureDistribution mu1_;
};

struct SeedResult {
  Json runs = Json::array();
  std::vector<std::vector<FitLogEntry>> logs;
};

SeedResult RunSeed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedResult result;
  for (int n_p : cfg.n_p_sweep) {
    SeedRun run(cfg, seed, n_p);
    result.runs.push_back(run.Run());
    result.logs.push_back(run.fit_log());
  }
  return result;
}

const Json* StageMetric(const Json& run, const char* stage, const char* key) {
  const Json& stages = run.at("stages");
  if (!stages.contains(stage)) return nullptr;
  const Json& s = stages.at(stage);
  if (s.at("status") != "ok" || !s.contains(key) || s.at(key).is_null()) return nullptr;
  return &s.at(key);
}

Json Summarize(const ExperimentConfig& cfg, const std::vector<SeedResult>& results) {
  Json by_np = Json::array();
  for (std::size_t p = 0; p < cfg.n_p_sweep.size(); ++p) {
    std::map<std::string, std::vector<double>> columns;
    for (const auto& r : results) {
      const Json& run = r.runs[p];
      auto take = [&](const char* stage, const char* key, const std::string& name) {
        if (const Json* v = StageMetric(run, stage, key); v && v->is_number()) {
          columns[name].push_back(v->get<double>());
        }
      };
      take("fit", "aligned_error", "aligned_error");
      take("policy", "suboptimality", "suboptimality");
      take("cluster", "accuracy", "cluster_accuracy");
      if (const Json* agg = StageMetric(run, "policy", "aggregated_suboptimality")) {
        for (auto it = agg->begin(); it != agg->end(); ++it) {
          columns["aggregated_suboptimality[" + it.key() + "]"].push_back(it.value().get<double>());
        }
      }
      if (const Json* mech = run.at("stages").contains("mechanism") &&
                                     run.at("stages").at("mechanism").at("status") == "ok"
                                 ? &run.at("stages").at("mechanism")
                                 : nullptr) {
        for (auto it = mech->begin(); it != mech->end(); ++it) {
          if (it.value().is_object()) {
            columns["dsic_violations[" + it.key() + "]"].push_back(
                it.value().at("dsic_violations").get<double>());
          }
        }
      }
    }
    Json medians = Json::object();
    for (const auto& [name, values] : columns) medians[name] = Median(values);
    by_np.push_back({{"n_p", cfg.n_p_sweep[p]}, {"median", std::move(medians)}});
  }
  // Trend flags across the sweep, in sweep order.
  Json trends = Json::object();
  for (const char* key : {"aligned_error", "suboptimality"}) {
    bool non_increasing = true;
    bool present = true;
    for (std::size_t p = 0; p < by_np.size(); ++p) {
      const Json& m = by_np[p].at("median");
      if (!m.contains(key)) {
        present = false;
        break;
      }
      if (p > 0 && m.at(key).get<double>() > by_np[p - 1].at("median").at(key).get<double>()) {
        non_increasing = false;
      }
    }
    trends[std::string(key) + "_non_increasing"] = present ? Json(non_increasing) : Json(nullptr);
  }
  return {{"by_n_p", std::move(by_np)}, {"trends", std::move(trends)}};
}

std::string MetricsCsv(const ExperimentConfig& cfg, const std::vector<SeedResult>& results) {
  std::string out = "seed,n_p,aligned_error,suboptimality,cluster_accuracy\n";
  auto cell = [](const Json* v) {
    return v && v->is_number() ? FormatDouble(v->get<double>()) : std::string();
  };
  for (std::size_t s = 0; s < results.size(); ++s) {
    for (const auto& run : results[s].runs) {
      out += std::to_string(cfg.seeds[s]) + ',' + std::to_string(run.at("n_p").get<int>()) + ',' +
             cell(StageMetric(run, "fit", "aligned_error")) + ',' +
             cell(StageMetric(run, "policy", "suboptimality")) + ',' +
             cell(StageMetric(run, "cluster", "accuracy")) + '\n';
    }
  }
  return out;
}

}  // namespace

void ExperimentConfig::Validate() const {
  if (!catalog_csv.empty() && !std::filesystem::exists(catalog_csv)) {
    Fail(ErrorCode::kValidation, "catalog file '" + catalog_csv + "' does not exist");
  }
  {
    // The catalog is drawn per seed; validate against one of the right shape.
    PopulationConfig pc = population;
    const int t = catalog_csv.empty() ? catalog_size : ReadCatalogCsv(catalog_csv).size();
    pc.catalog = TrajectoryCatalog{Mat::Zero(pc.dim, std::max(t, 1))};
    if (!catalog_csv.empty()) pc.catalog = ReadCatalogCsv(catalog_csv);
    for (auto* side : {&pc.mu0, &pc.mu1}) {
      if (side->kind == FeatureDistribution::Kind::kCatalog && side->weights.size() == 0) {
        side->weights = Vec::Constant(std::max(t, 1), 1.0 / std::max(t, 1));
      }
    }
    pc.Validate();
  }
  fit.Validate();
  if (seeds.empty()) Fail(ErrorCode::kValidation, "seeds must be non-empty");
  if (n_p_sweep.empty()) Fail(ErrorCode::kValidation, "n_p_sweep must be non-empty");
  for (int n_p : n_p_sweep) {
    if (n_p < 1) Fail(ErrorCode::kValidation, "n_p_sweep entries must be >= 1");
  }
  for (const auto& s : stages) {
    if (std::find(AllStages().begin(), AllStages().end(), s) == AllStages().end()) {
      Fail(ErrorCode::kValidation, "unknown stage '" + s + "'");
    }
  }
  if (catalog_csv.empty() && catalog_size < 2) {
    Fail(ErrorCode::kValidation, "catalog_size must be at least 2");
  }
  if (!(catalog_sigma > 0)) Fail(ErrorCode::kValidation, "catalog_sigma must be positive");
  if (clusters < 1 || clusters > 8) Fail(ErrorCode::kValidation, "clusters must be in [1, 8]");
  if (mechanism_labelers < 1 || mechanism_answers < 2) {
    Fail(ErrorCode::kValidation, "mechanism needs >= 1 labeler and >= 2 answers");
  }
  if (audit_resolution < 1 || audit_random_points < 0 || !(audit_tol >= 0)) {
    Fail(ErrorCode::kValidation, "invalid audit settings");
  }
  if (aggregation_samples < 1) Fail(ErrorCode::kValidation, "aggregation_samples must be >= 1");
  if (threads < 0) Fail(ErrorCode::kValidation, "threads must be >= 0");
}

ExperimentConfig ConfigFromJson(const Json& j) {
  ExperimentConfig cfg;
  ObjectReader root(j, "config");

  if (const Json* p = root.Get("population")) {
    ObjectReader r(*p, "population");
    auto& pc = cfg.population;
    r.Read("N", pc.num_users);
    r.Read("d", pc.dim);
    r.Read("k", pc.rank);
    r.Read("B", pc.bound);
    r.Read("R_max", pc.r_max);
    r.Read("diversity_target", pc.diversity_target);
    r.Read("max_retries", pc.max_retries);
    for (const char* side : {"mu0", "mu1"}) {
      FeatureDistribution& dist = std::string(side) == "mu0" ? pc.mu0 : pc.mu1;
      dist.kind = FeatureDistribution::Kind::kCatalog;
      if (const Json* w = r.Get(side)) {
        if (w->is_string() && w->get<std::string>() == "uniform") continue;
        if (!w->is_array()) {
          Fail(ErrorCode::kValidation, std::string("population.") + side +
                                           " must be \"uniform\" or a weight array");
        }
        dist.weights.resize(static_cast<Eigen::Index>(w->size()));
        for (std::size_t t = 0; t < w->size(); ++t) {
          dist.weights(static_cast<Eigen::Index>(t)) = (*w)[t].get<double>();
        }
      }
    }
    r.Finish();
  }

  if (const Json* f = root.Get("fit")) {
    ObjectReader r(*f, "fit");
    auto& fc = cfg.fit;
    r.Read("max_iters", fc.max_iters);
    r.Read("inner_iters", fc.inner_iters);
    r.Read("step_size", fc.step_size);
    r.Read("tol", fc.tol);
    r.Read("restarts", fc.restarts);
    r.Read("lambda", fc.lambda);
    r.Read("delta", fc.delta);
    r.Read("c8", fc.c8);
    if (const Json* c = r.Get("complexity_term"); c && !c->is_null()) {
      if (!c->is_number()) Fail(ErrorCode::kValidation, "fit.complexity_term must be a number");
      fc.complexity_term = c->get<double>();
    }
    r.Finish();
  }

  if (const Json* a = root.Get("alphas")) {
    if (!a->is_array()) Fail(ErrorCode::kValidation, "alphas must be an array");
    cfg.alphas.clear();
    for (const auto& v : *a) cfg.alphas.push_back(AlphaFromJson(v));
  }
  if (const Json* d = root.Get("distances")) {
    if (!d->is_array()) Fail(ErrorCode::kValidation, "distances must be an array");
    cfg.distances.clear();
    for (const auto& v : *d) {
      if (!v.is_string()) Fail(ErrorCode::kValidation, "distances entries must be strings");
      cfg.distances.push_back(Distance::Parse(v.get<std::string>()));
    }
  }
  root.Read("n_p_sweep", cfg.n_p_sweep);
  root.Read("seeds", cfg.seeds);
  root.Read("output_dir", cfg.output_dir);
  root.Read("stages", cfg.stages);
  root.Read("threads", cfg.threads);

  if (const Json* c = root.Get("catalog")) {
    ObjectReader r(*c, "catalog");
    r.Read("csv", cfg.catalog_csv);
    r.Read("size", cfg.catalog_size);
    r.Read("sigma", cfg.catalog_sigma);
    r.Finish();
  }
  if (const Json* c = root.Get("clustering")) {
    ObjectReader r(*c, "clustering");
    r.Read("K", cfg.clusters);
    r.Read("clustered_population", cfg.clustered_population);
    r.Finish();
  }
  if (const Json* m = root.Get("mechanism")) {
    ObjectReader r(*m, "mechanism");
    r.Read("labelers", cfg.mechanism_labelers);
    r.Read("answers", cfg.mechanism_answers);
    r.Read("audit_resolution", cfg.audit_resolution);
    r.Read("audit_random_points", cfg.audit_random_points);
    r.Read("audit_tol", cfg.audit_tol);
    r.Finish();
  }
  if (const Json* p = root.Get("policy")) {
    ObjectReader r(*p, "policy");
    r.Read("aggregation_samples", cfg.aggregation_samples);
    r.Finish();
  }
  root.Finish();
  cfg.Validate();
  return cfg;
}

Json ConfigToJson(const ExperimentConfig& cfg) {
  const auto& pc = cfg.population;
  auto weights = [](const FeatureDistribution& d) -> Json {
    if (d.weights.size() == 0) return "uniform";
    return std::vector<double>(d.weights.data(), d.weights.data() + d.weights.size());
  };
  Json alphas = Json::array();
  for (const auto& a : cfg.alphas) alphas.push_back(AlphaToJson(a));
  Json distances = Json::array();
  for (const auto& d : cfg.distances) distances.push_back(d.ToString());
  const auto& fc = cfg.fit;
  return {
      {"population",
       {{"N", pc.num_users},
        {"d", pc.dim},
        {"k", pc.rank},
        {"B", pc.bound},
        {"R_max", pc.r_max},
        {"diversity_target", pc.diversity_target},
        {"max_retries", pc.max_retries},
        {"mu0", weights(pc.mu0)},
        {"mu1", weights(pc.mu1)}}},
      {"fit",
       {{"max_iters", fc.max_iters},
        {"inner_iters", fc.inner_iters},
        {"step_size", fc.step_size},
        {"tol", fc.tol},
        {"restarts", fc.restarts},
        {"lambda", fc.lambda},
        {"delta", fc.delta},
        {"c8", fc.c8},
        {"complexity_term", fc.complexity_term ? Json(*fc.complexity_term) : Json(nullptr)}}},
      {"alphas", std::move(alphas)},
      {"distances", std::move(distances)},
      {"n_p_sweep", cfg.n_p_sweep},
      {"seeds", cfg.seeds},
      {"output_dir", cfg.output_dir},
      {"stages", cfg.stages},
      {"threads", cfg.threads},
      {"catalog", {{"csv", cfg.catalog_csv}, {"size", cfg.catalog_size}, {"sigma", cfg.catalog_sigma}}},
      {"clustering", {{"K", cfg.clusters}, {"clustered_population", cfg.clustered_population}}},
      {"mechanism",
       {{"labelers", cfg.mechanism_labelers},
        {"answers", cfg.mechanism_answers},
        {"audit_resolution", cfg.audit_resolution},
        {"audit_random_points", cfg.audit_random_points},
        {"audit_tol", cfg.audit_tol}}},
      {"policy", {{"aggregation_samples", cfg.aggregation_samples}}},
  };
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  return ConfigFromJson(ReadJsonFile(path));
}

std::string Sha256Hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    Fail(ErrorCode::kNumerical, "SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string ConfigHash(const ExperimentConfig& cfg) {
  // The output directory does not change results.
  Json j = ConfigToJson(cfg);
  j.erase("output_dir");
  j.erase("threads");
  return Sha256Hex(j.dump());
}

Json RunReport::ToJson() const {
  return {{"tool", "prefagg"},
          {"tool_version", tool_version},
          {"config_hash", config_hash},
          {"timestamp", timestamp},
          {"seeds", seeds},
          {"summary", summary}};
}

RunReport RunExperiment(const ExperimentConfig& cfg) {
  cfg.Validate();
  const std::size_t num_seeds = cfg.seeds.size();
  std::vector<SeedResult> results(num_seeds);

  std::size_t workers = cfg.threads > 0 ? static_cast<std::size_t>(cfg.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, num_seeds);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t s = next++; s < num_seeds; s = next++) {
      results[s] = RunSeed(cfg, cfg.seeds[s]);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  RunReport report;
  report.config_hash = ConfigHash(cfg);
  report.tool_version = std::string(kToolVersion);
  report.timestamp = Timestamp();
  report.seeds = Json::array();
  for (std::size_t s = 0; s < num_seeds; ++s) {
    report.seeds.push_back({{"seed", cfg.seeds[s]}, {"runs", results[s].runs}});
  }
  report.summary = Summarize(cfg, results);

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    const std::filesystem::path dir(cfg.output_dir);
    WriteTextFile((dir / "report.json").string(), report.ToJson().dump(2) + "\n");
    WriteTextFile((dir / "metrics.csv").string(), MetricsCsv(cfg, results));
    for (std::size_t s = 0; s < num_seeds; ++s) {
      for (std::size_t p = 0; p < cfg.n_p_sweep.size(); ++p) {
        if (results[s].logs[p].empty()) continue;
        const std::string name = "fitlog_seed" + std::to_string(cfg.seeds[s]) + "_np" +
                                 std::to_string(cfg.n_p_sweep[p]) + ".csv";
        WriteTextFile((dir / name).string(), FormatFitLogCsv(results[s].logs[p]));
      }
    }
  }
  return report;
}

}  // namespace prefagg
