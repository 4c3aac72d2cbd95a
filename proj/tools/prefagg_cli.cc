// Command-line front end: one subcommand per pipeline step plus `run`.
// Failures print a single line "prefagg: error[<code>]: <message>" to stderr
// and exit with status 2.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "prefagg/aggregate.h"
#include "prefagg/cluster.h"
#include "prefagg/experiment.h"
#include "prefagg/io.h"
#include "prefagg/likelihood.h"
#include "prefagg/link.h"
#include "prefagg/mechanism.h"
#include "prefagg/mle.h"
#include "prefagg/policy.h"
#include "prefagg/population.h"

namespace {

using namespace prefagg;

struct CommonOptions {
  std::uint64_t seed = 1;
  std::string config;
  std::string out_dir;
};

void AddCommon(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--seed", opts.seed, "Master random seed");
  cmd->add_option("--config", opts.config, "Experiment config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--out-dir", opts.out_dir,
                  "Output directory (default: $PREFAGG_OUT_DIR or the current directory)");
}

ExperimentConfig LoadConfig(const CommonOptions& opts) {
  if (opts.config.empty()) return ExperimentConfig{};
  return LoadExperimentConfig(opts.config);
}

std::filesystem::path OutDir(const CommonOptions& opts) {
  std::string dir = opts.out_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("PREFAGG_OUT_DIR")) dir = env;
  }
  if (dir.empty()) dir = ".";
  std::filesystem::create_directories(dir);
  return dir;
}

// Relative output names land in the output directory.
std::string OutPath(const CommonOptions& opts, const std::string& name) {
  const std::filesystem::path p(name);
  if (p.is_absolute() || p.has_parent_path()) return name;
  return (OutDir(opts) / p).string();
}

Json VecJson(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::vector<UserData> UsersOf(const Dataset& data) {
  std::vector<UserData> users;
  for (const auto& g : data.ByUser()) users.push_back(MakeUserData(g, data.header.dim));
  return users;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference aggregation toolkit: estimation, pooling, mechanisms, policies"};
  app.require_subcommand(1);
  std::function<void()> action;

  // gen --------------------------------------------------------------------
  CommonOptions gen_opts;
  int gen_np = 0;
  std::string gen_data = "dataset.json", gen_model = "model.json", gen_catalog = "catalog.csv";
  auto* gen = app.add_subcommand("gen", "Generate a population, catalog and comparison dataset");
  AddCommon(gen, gen_opts);
  gen->add_option("--n-p", gen_np, "Comparisons per user (default: first n_p_sweep entry)");
  gen->add_option("--data-out", gen_data, "Dataset JSON");
  gen->add_option("--model-out", gen_model, "Ground-truth model JSON");
  gen->add_option("--catalog-out", gen_catalog, "Rescaled catalog CSV");
  gen->callback([&] {
    action = [&] {
      ExperimentConfig cfg = LoadConfig(gen_opts);
      PopulationConfig pc = cfg.population;
      pc.per_user = gen_np > 0 ? gen_np : cfg.n_p_sweep.front();
      if (!cfg.catalog_csv.empty()) {
        pc.catalog = ReadCatalogCsv(cfg.catalog_csv);
      } else {
        Rng rng = MakeRng(DeriveSeed(gen_opts.seed, 1));
        pc.catalog = TrajectoryCatalog{cfg.catalog_sigma *
                                       StandardNormalMatrix(rng, pc.dim, cfg.catalog_size)};
      }
      const int t = pc.catalog->size();
      for (auto* side : {&pc.mu0, &pc.mu1}) {
        if (side->kind == FeatureDistribution::Kind::kCatalog && side->weights.size() == 0) {
          side->weights = Vec::Constant(t, 1.0 / t);
        }
      }
      const Population pop = GeneratePopulation(pc, DeriveSeed(gen_opts.seed, 0));
      pc.catalog = pop.catalog;
      const Dataset data = GenerateDataset(pop.model, pc, LinkFunction::Sigmoid(),
                                           DeriveSeed(gen_opts.seed, 2));
      SaveDataset(data, OutPath(gen_opts, gen_data));
      WriteTextFile(OutPath(gen_opts, gen_model), ModelToJson(pop.model).dump(2) + "\n");
      WriteCatalogCsv(OutPath(gen_opts, gen_catalog), *pop.catalog);
      std::cout << Json{{"records", data.records.size()},
                        {"diversity_normalized", pop.diversity.normalized},
                        {"attempts", pop.diversity.attempts}}
                       .dump()
                << "\n";
    };
  });

  // fit --------------------------------------------------------------------
  CommonOptions fit_opts;
  std::string fit_data, fit_out = "estimate.json", fit_log = "fitlog.csv";
  auto* fit = app.add_subcommand("fit", "Joint maximum-likelihood fit of the representation and users");
  AddCommon(fit, fit_opts);
  fit->add_option("--data", fit_data, "Dataset JSON")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", fit_out, "Estimate JSON");
  fit->add_option("--log", fit_log, "Fit log CSV");
  fit->callback([&] {
    action = [&] {
      const ExperimentConfig cfg = LoadConfig(fit_opts);
      const Dataset data = LoadDataset(fit_data);
      const auto& h = data.header;
      const LinkFunction link = LinkFunction::Sigmoid();
      const auto users = UsersOf(data);
      const Estimate est =
          MleFit(users, link, {h.num_users, h.dim, h.rank, h.bound}, cfg.fit, fit_opts.seed);
      const int n_p = static_cast<int>(data.records.size()) / h.num_users;
      EstimateFile file{est, cfg.fit.lambda, 0.0, h.bound, h.r_max, n_p};
      file.radius = ConfidenceRadius(cfg.fit, ComputeLinkConstants(link, h.r_max),
                                     {h.rank, h.num_users, n_p, h.dim, h.bound, h.r_max});
      WriteTextFile(OutPath(fit_opts, fit_out), EstimateToJson(file).dump(2) + "\n");
      WriteTextFile(OutPath(fit_opts, fit_log), FormatFitLogCsv(est.log));
      std::cout << Json{{"log_likelihood", est.log_likelihood},
                        {"grad_norm", est.grad_norm},
                        {"iterations", est.iterations},
                        {"converged", est.converged},
                        {"radius", file.radius}}
                       .dump()
                << "\n";
    };
  });

  // transfer ---------------------------------------------------------------
  CommonOptions tr_opts;
  std::string tr_data, tr_estimate, tr_out = "transfer.json";
  int tr_user = 0;
  auto* transfer = app.add_subcommand("transfer", "Fit a new user with the representation frozen");
  AddCommon(transfer, tr_opts);
  transfer->add_option("--data", tr_data, "Dataset JSON with the new user's comparisons")
      ->required()
      ->check(CLI::ExistingFile);
  transfer->add_option("--user", tr_user, "User index within the dataset");
  transfer->add_option("--estimate", tr_estimate, "Estimate JSON")->required()->check(CLI::ExistingFile);
  transfer->add_option("--out", tr_out, "Transfer result JSON");
  transfer->callback([&] {
    action = [&] {
      const ExperimentConfig cfg = LoadConfig(tr_opts);
      const Dataset data = LoadDataset(tr_data);
      const EstimateFile est = EstimateFromJson(ReadJsonFile(tr_estimate));
      const auto records = data.ForUser(tr_user);
      const TransferResult r = TransferFit(
          records, est.estimate.omega_hat, LinkFunction::Sigmoid(), data.header.bound,
          data.header.r_max, static_cast<int>(est.estimate.thetas_hat.cols()), cfg.fit);
      const Json out = {{"theta", VecJson(r.theta)},
                        {"design", MatrixToJson(r.ellipsoid.design)},
                        {"radius", r.ellipsoid.radius},
                        {"log_likelihood", r.log_likelihood},
                        {"grad_norm", r.grad_norm}};
      WriteTextFile(OutPath(tr_opts, tr_out), out.dump(2) + "\n");
      std::cout << out.dump() << "\n";
    };
  });

  // cluster ----------------------------------------------------------------
  CommonOptions cl_opts;
  std::string cl_data, cl_estimate, cl_out = "clusters.json";
  int cl_k = 0;
  auto* cluster = app.add_subcommand("cluster", "Cluster users with the representation frozen");
  AddCommon(cluster, cl_opts);
  cluster->add_option("--data", cl_data, "Dataset JSON")->required()->check(CLI::ExistingFile);
  cluster->add_option("--estimate", cl_estimate, "Estimate JSON")->required()->check(CLI::ExistingFile);
  cluster->add_option("-K,--clusters", cl_k, "Number of clusters (default: config)");
  cluster->add_option("--out", cl_out, "Clustering JSON");
  cluster->callback([&] {
    action = [&] {
      const ExperimentConfig cfg = LoadConfig(cl_opts);
      const Dataset data = LoadDataset(cl_data);
      const EstimateFile est = EstimateFromJson(ReadJsonFile(cl_estimate));
      const auto users = UsersOf(data);
      const Clustering c = ClusterFit(users, cl_k > 0 ? cl_k : cfg.clusters, est.estimate.omega_hat,
                                      LinkFunction::Sigmoid(), data.header.bound, cfg.fit,
                                      cl_opts.seed);
      const Json out = {{"assignment", c.assignment},
                        {"cluster_thetas", MatrixToJson(c.cluster_thetas)},
                        {"objective", c.objective},
                        {"objective_trace", c.objective_trace},
                        {"best_restart", c.best_restart}};
      WriteTextFile(OutPath(cl_opts, cl_out), out.dump(2) + "\n");
      std::cout << Json{{"objective", c.objective}, {"assignment", c.assignment}}.dump() << "\n";
    };
  });

  // aggregate --------------------------------------------------------------
  CommonOptions ag_opts;
  std::string ag_rewards, ag_opinions, ag_alpha = "0", ag_out = "aggregate.csv",
                                       ag_report = "axioms.json";
  auto* aggregate = app.add_subcommand("aggregate", "Aggregate a reward table or an opinion profile");
  AddCommon(aggregate, ag_opts);
  auto* rewards_opt = aggregate->add_option("--rewards", ag_rewards,
                                            "Rewards CSV (rows = users, cols = trajectories)")
                          ->check(CLI::ExistingFile);
  auto* opinions_opt =
      aggregate->add_option("--opinions", ag_opinions, "Opinions CSV (rows on the simplex)")
          ->check(CLI::ExistingFile);
  rewards_opt->excludes(opinions_opt);
  aggregate->add_option("--alpha", ag_alpha, "ninf, +inf or a number")->required();
  aggregate->add_option("--out", ag_out, "Aggregate CSV");
  aggregate->add_option("--report", ag_report, "Axiom probe JSON (reward input only)");
  aggregate->callback([&] {
    action = [&] {
      const Alpha alpha = Alpha::Parse(ag_alpha);
      if (!ag_opinions.empty()) {
        const Vec pooled = PoolOpinions(alpha, ReadOpinionsCsv(ag_opinions));
        WriteCsvMatrix(OutPath(ag_opts, ag_out), pooled.transpose());
        std::cout << Json{{"pooled", VecJson(pooled)}}.dump() << "\n";
        return;
      }
      if (ag_rewards.empty()) Fail(ErrorCode::kInput, "one of --rewards or --opinions is required");
      const Mat table = ReadCsvMatrix(ag_rewards);
      Vec agg(table.cols());
      for (Eigen::Index t = 0; t < table.cols(); ++t) agg(t) = AggReward(alpha, table.col(t));
      WriteCsvMatrix(OutPath(ag_opts, ag_out), agg.transpose());
      Rng rng = MakeRng(ag_opts.seed);
      const AxiomProbe probe = ProbeAxioms(alpha, table, rng);
      const Json report = {{"alpha", alpha.ToString()},
                           {"probes", probe.probes},
                           {"max_symmetry_error", probe.max_symmetry_error},
                           {"max_translation_error", probe.max_translation_error},
                           {"monotonicity_violations", probe.monotonicity_violations},
                           {"pl_equivalence_gap", PlEquivalenceGap(alpha, table)}};
      WriteTextFile(OutPath(ag_opts, ag_report), report.dump(2) + "\n");
      std::cout << Json{{"aggregate", VecJson(agg)}, {"axioms", report}}.dump() << "\n";
    };
  });

  // pool -------------------------------------------------------------------
  CommonOptions pool_opts;
  std::string pool_opinions, pool_alpha = "0";
  int pool_samples = 0;
  auto* pool = app.add_subcommand("pool", "Pool an opinion profile and optionally sample answers");
  AddCommon(pool, pool_opts);
  pool->add_option("--opinions", pool_opinions, "Opinions CSV")->required()->check(CLI::ExistingFile);
  pool->add_option("--alpha", pool_alpha, "ninf, +inf or a number");
  pool->add_option("--samples", pool_samples, "Number of answers to sample");
  pool->callback([&] {
    action = [&] {
      const Alpha alpha = Alpha::Parse(pool_alpha);
      const OpinionProfile profile = ReadOpinionsCsv(pool_opinions);
      Rng rng = MakeRng(pool_opts.seed);
      std::vector<int> draws;
      for (int s = 0; s < pool_samples; ++s) draws.push_back(SamplePooledAnswer(alpha, profile, rng));
      std::cout << Json{{"pooled", VecJson(PoolOpinions(alpha, profile))}, {"samples", draws}}.dump()
                << "\n";
    };
  });

  // mechanism --------------------------------------------------------------
  CommonOptions mech_opts;
  std::string mech_opinions, mech_distance = "kl";
  auto* mechanism = app.add_subcommand("mechanism", "Aggregate with payments for an opinion profile");
  AddCommon(mechanism, mech_opts);
  mechanism->add_option("--opinions", mech_opinions, "Opinions CSV")->required()->check(CLI::ExistingFile);
  mechanism->add_option("--distance", mech_distance, "kl or renyi:<alpha>");
  mechanism->callback([&] {
    action = [&] {
      const MechanismOutcome o =
          RunMechanism(Distance::Parse(mech_distance), ReadOpinionsCsv(mech_opinions));
      std::cout << Json{{"aggregate", VecJson(o.aggregate)},
                        {"costs", o.costs},
                        {"utilities", o.utilities},
                        {"welfare", o.welfare}}
                       .dump()
                << "\n";
    };
  });

  // audit ------------------------------------------------------------------
  CommonOptions au_opts;
  std::string au_opinions, au_distance = "kl", au_out;
  int au_resolution = 20, au_random = 1000;
  double au_tol = 1e-8;
  bool au_zero = false;
  auto* audit = app.add_subcommand("audit", "Brute-force truthfulness audit over a misreport grid");
  AddCommon(audit, au_opts);
  audit->add_option("--opinions", au_opinions, "Opinions CSV")->required()->check(CLI::ExistingFile);
  audit->add_option("--distance", au_distance, "kl or renyi:<alpha>");
  audit->add_option("--resolution", au_resolution, "Simplex lattice resolution");
  audit->add_option("--random-points", au_random, "Extra uniform misreports");
  audit->add_option("--tol", au_tol, "Violation tolerance");
  audit->add_flag("--zero-costs", au_zero, "Ablation: drop the payments");
  audit->add_option("--out", au_out, "Audit report JSON");
  audit->callback([&] {
    action = [&] {
      const OpinionProfile profile = ReadOpinionsCsv(au_opinions);
      Rng rng = MakeRng(au_opts.seed);
      const auto grid = DefaultMisreportGrid(profile.num_answers(), rng, au_resolution, au_random);
      const AuditReport r = DsicAudit(profile, Distance::Parse(au_distance), grid, {au_tol, au_zero});
      Json per = Json::array();
      for (const auto& l : r.per_labeler) {
        per.push_back({{"cost", l.cost},
                       {"utility_truthful", l.utility_truthful},
                       {"best_misreport_gain", l.best_misreport_gain}});
      }
      Json out = {{"violations", r.violations},
                  {"worst_gap", r.worst_gap},
                  {"grid_size", r.grid_size},
                  {"per_labeler", std::move(per)}};
      if (r.worst) {
        out["worst_manipulation"] = {{"labeler", r.worst->labeler},
                                     {"misreport", VecJson(r.worst->misreport)},
                                     {"gain", r.worst->gain}};
      }
      if (!au_out.empty()) WriteTextFile(OutPath(au_opts, au_out), out.dump(2) + "\n");
      std::cout << out.dump() << "\n";
    };
  });

  // policy-eval ------------------------------------------------------------
  CommonOptions pe_opts;
  std::string pe_catalog, pe_estimate, pe_alpha, pe_mu_ref = "uniform", pe_truth;
  std::optional<double> pe_zeta;
  int pe_user = 0, pe_samples = 1024;
  auto* policy = app.add_subcommand("policy-eval", "Pessimistic policy selection over a catalog");
  AddCommon(policy, pe_opts);
  policy->add_option("--catalog", pe_catalog, "Catalog CSV (one row per trajectory)")
      ->required()
      ->check(CLI::ExistingFile);
  policy->add_option("--estimate", pe_estimate, "Estimate JSON")->required()->check(CLI::ExistingFile);
  policy->add_option("--alpha", pe_alpha, "Aggregate all users with this alpha");
  policy->add_option("--zeta", pe_zeta, "Override the confidence radius");
  policy->add_option("--mu-ref", pe_mu_ref, "uniform or a CSV of reference weights");
  policy->add_option("--user", pe_user, "User for the personalized policy");
  policy->add_option("--samples", pe_samples, "Boundary samples per user when aggregating");
  policy->add_option("--truth", pe_truth, "Ground-truth model JSON for suboptimality")
      ->check(CLI::ExistingFile);
  policy->callback([&] {
    action = [&] {
      const TrajectoryCatalog catalog = ReadCatalogCsv(pe_catalog);
      const EstimateFile est = EstimateFromJson(ReadJsonFile(pe_estimate));
      const int t = catalog.size();
      Policy mu_ref = Policy::Uniform(t);
      if (pe_mu_ref != "uniform") {
        mu_ref.weights = ReadCsvMatrix(pe_mu_ref).reshaped();
        mu_ref.Validate();
      }
      const double radius = pe_zeta ? *pe_zeta : est.radius;
      const int n = static_cast<int>(est.estimate.thetas_hat.cols());
      std::vector<ConfidenceEllipsoid> ells;
      for (int i = 0; i < n; ++i) {
        ells.push_back(MakeEllipsoid(est.estimate.thetas_hat.col(i),
                                     est.estimate.designs[static_cast<std::size_t>(i)], est.lambda,
                                     radius));
      }
      const PolicySlate slate = DefaultSlate(t);
      PolicyChoice choice;
      std::optional<Alpha> alpha;
      if (!pe_alpha.empty()) {
        alpha = Alpha::Parse(pe_alpha);
        AggregationSampling sampling;
        sampling.samples = pe_samples;
        sampling.seed = pe_opts.seed;
        choice = AggregatedPolicy(slate, ells, est.estimate.omega_hat, *alpha, catalog, mu_ref,
                                  sampling);
      } else {
        if (pe_user < 0 || pe_user >= n) Fail(ErrorCode::kInput, "--user out of range");
        choice = PessimisticPolicy(slate, ells[static_cast<std::size_t>(pe_user)],
                                   est.estimate.omega_hat, catalog, mu_ref);
      }
      Json out = {{"chosen", choice.index}, {"radius", radius}, {"values", choice.values}};
      if (!pe_truth.empty()) {
        const RewardModel truth = ModelFromJson(ReadJsonFile(pe_truth));
        const Mat rewards = RewardTable(truth, catalog.features);
        Vec target(t);
        if (alpha) {
          for (int c = 0; c < t; ++c) target(c) = AggReward(*alpha, rewards.col(c));
        } else {
          target = rewards.row(pe_user).transpose();
        }
        out["suboptimality"] =
            target.maxCoeff() - Value(slate.candidates[static_cast<std::size_t>(choice.index)], target);
      }
      std::cout << out.dump() << "\n";
    };
  });

  // run --------------------------------------------------------------------
  CommonOptions run_opts;
  auto* run = app.add_subcommand("run", "Full pipeline over seeds and N_p sweep");
  AddCommon(run, run_opts);
  run->callback([&] {
    action = [&] {
      ExperimentConfig cfg = LoadConfig(run_opts);
      if (run->count("--seed") > 0) cfg.seeds = {run_opts.seed};
      if (!run_opts.out_dir.empty() || cfg.output_dir.empty()) {
        cfg.output_dir = OutDir(run_opts).string();
      }
      const RunReport report = RunExperiment(cfg);
      std::cout << Json{{"report", (std::filesystem::path(cfg.output_dir) / "report.json").string()},
                        {"config_hash", report.config_hash}}
                       .dump()
                << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "prefagg: error[usage]: " << e.what() << "\n";
    return 2;
  }
  try {
    if (action) action();
  } catch (const Error& e) {
    std::cerr << "prefagg: error[" << ErrorCodeName(e.code()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "prefagg: error[internal]: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
