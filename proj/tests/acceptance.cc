// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria not listed with --expect-fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prefagg/aggregate.h"
#include "prefagg/cluster.h"
#include "prefagg/experiment.h"
#include "prefagg/likelihood.h"
#include "prefagg/mechanism.h"
#include "prefagg/mle.h"
#include "prefagg/policy.h"
#include "prefagg/population.h"
#include "support.h"

using namespace prefagg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

Vec V2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

OpinionProfile ProfileOf(const std::vector<Vec>& rows) {
  OpinionProfile p;
  p.rows = Mat(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) p.rows.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return p;
}

OpinionProfile RandomProfile(std::mt19937_64& g, int n, int k) {
  std::vector<Vec> rows;
  for (int i = 0; i < n; ++i) rows.push_back(oracle::RandomSimplex(g, k));
  return ProfileOf(rows);
}

OpinionProfile WorkedTruth() { return ProfileOf({V2(0.2, 0.8), V2(0.2, 0.8), V2(0.6, 0.4)}); }
OpinionProfile WorkedMisreport() { return ProfileOf({V2(0.2, 0.8), V2(0.2, 0.8), V2(13.0 / 15, 2.0 / 15)}); }

Outcome C1() {
  const auto start = std::chrono::steady_clock::now();
  const Vec a = PoolOpinions(Alpha::NegInf(), WorkedTruth());
  const Vec b = PoolOpinions(Alpha::NegInf(), WorkedMisreport());
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  const double err = std::max((a - V2(1.0 / 3, 2.0 / 3)).cwiseAbs().maxCoeff(), (b - V2(0.6, 0.4)).cwiseAbs().maxCoeff());
  return {err <= 1e-9 && ms < 1.0, "max error " + Fmt("%.2e", err) + ", " + Fmt("%.3f", ms) + " ms"};
}

Outcome C2() {
  std::mt19937_64 g(2);
  double worst = 0;
  for (double a : {-5.0, -1.0, 0.0, 1.0, 5.0}) {
    for (int t = 0; t < 100; ++t) {
      const int n = 1 + static_cast<int>(g() % 5), k = 2 + static_cast<int>(g() % 5);
      const Mat table = Mat::NullaryExpr(n, k, [&]() { return 2.0 * oracle::RandomNormal(g, 1)(0); });
      worst = std::max(worst, PlEquivalenceGap(Alpha::Finite(a), table));
    }
  }
  return {worst <= 1e-9, "max gap " + Fmt("%.2e", worst)};
}

Outcome C3() {
  std::mt19937_64 g(3);
  const double alphas[] = {0.5, -1.0, 2.0, -3.0, 0.25};
  double worst_closed = 0, worst_search = -INFINITY;
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + t % 4, k = 2 + t % 3;
    const OpinionProfile prof = RandomProfile(g, n, k);
    const Distance d = Distance::Renyi(alphas[t % 5]);
    const Vec agg = MechAggregate(d, prof);
    worst_closed = std::max(worst_closed, (agg - PoolOpinions(Alpha::Finite(d.alpha()), prof)).cwiseAbs().maxCoeff());
    const double best = TotalDistance(d, prof, agg);
    for (int s = 0; s < 10000; ++s) {
      worst_search = std::max(worst_search, best - TotalDistance(d, prof, oracle::RandomSimplex(g, k)));
    }
  }
  return {worst_closed <= 1e-10 && worst_search <= 1e-8,
          "closed-form gap " + Fmt("%.2e", worst_closed) + ", worst excess over random search " +
              Fmt("%.2e", worst_search)};
}

Outcome C4() {
  const std::vector<Distance> dists = {Distance::Kl(), Distance::Renyi(0.5), Distance::Renyi(2.0), Distance::Renyi(-1.0)};
  int violations = 0;
  std::size_t min_grid = SIZE_MAX;
  {
    Rng rng = MakeRng(40);
    const auto grid = DefaultMisreportGrid(2, rng);
    min_grid = std::min(min_grid, grid.size());
    for (const auto& d : dists) violations += DsicAudit(WorkedTruth(), d, grid).violations;
  }
  std::mt19937_64 g(4);
  for (int t = 0; t < 20; ++t) {
    const int n = 2 + t % 3, k = 2 + t % 2;
    const OpinionProfile prof = RandomProfile(g, n, k);
    Rng rng = MakeRng(400 + static_cast<std::uint64_t>(t));
    const auto grid = DefaultMisreportGrid(k, rng);
    min_grid = std::min(min_grid, grid.size());
    for (const auto& d : dists) violations += DsicAudit(prof, d, grid).violations;
  }
  Rng rng = MakeRng(41);
  AuditOptions ablate;
  ablate.zero_costs = true;
  const AuditReport ab = DsicAudit(WorkedTruth(), Distance::Renyi(0.5), DefaultMisreportGrid(2, rng), ablate);
  return {violations == 0 && min_grid >= 400 && ab.violations >= 1,
          std::to_string(violations) + " violations with payments (grid >= " + std::to_string(min_grid) + "), " +
              std::to_string(ab.violations) + " without"};
}

Outcome C5() {
  // Pairs drawn uniformly from the simplex (flat Dirichlet, K = 3).
  std::mt19937_64 g(5);
  double worst = 0;
  int over = 0;
  for (int t = 0; t < 1000; ++t) {
    const Vec p = oracle::RandomSimplex(g, 3), q = oracle::RandomSimplex(g, 3);
    const double gap = std::abs(RenyiVariant(0.999, p, q) - KlDiv(p, q));
    worst = std::max(worst, gap);
    over += gap > 1e-2;
  }
  return {over == 0, std::to_string(over) + "/1000 pairs above 1e-2, max gap " + Fmt("%.3e", worst)};
}

// (1/a) log mean exp(a r) in long double, no max subtraction.
double DirectAgg(double a, const Vec& r) {
  if (a == 0.0) return r.mean();
  long double acc = 0;
  for (Eigen::Index i = 0; i < r.size(); ++i) acc += std::exp(static_cast<long double>(a) * r(i));
  return static_cast<double>(std::log(acc / r.size()) / a);
}

Outcome C6() {
  std::mt19937_64 g(6);
  std::uniform_real_distribution<double> u(-3, 3);
  const std::vector<Alpha> alphas = {Alpha::NegInf(), Alpha::Finite(-5), Alpha::Finite(-1), Alpha::Finite(0),
                                     Alpha::Finite(1), Alpha::Finite(5), Alpha::PosInf()};
  int failures = 0;
  auto agg = [](const Alpha& a, const Vec& r) { return AggReward(a, r); };
  for (int t = 0; t < 1000; ++t) {
    const Alpha& a = alphas[static_cast<std::size_t>(t) % alphas.size()];
    const int n = 2 + t % 6;
    const Vec r = 2.0 * oracle::RandomNormal(g, n);
    const double base = agg(a, r);
    const int i = static_cast<int>(g() % static_cast<unsigned>(n));

    // Monotonicity: strict wherever the exact gain is above rounding, weak otherwise.
    Vec up = r;
    up(i) += 0.1 + std::abs(u(g));
    if (agg(a, up) < base) ++failures;
    if (a.is_finite() && DirectAgg(a.value(), up) - DirectAgg(a.value(), r) > 1e-13 * std::max(1.0, std::abs(base)) &&
        !(agg(a, up) > base)) {
      ++failures;
    }

    // Symmetry.
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g);
    Vec pr(n);
    for (int j = 0; j < n; ++j) pr(j) = r(perm[static_cast<std::size_t>(j)]);
    if (std::abs(agg(a, pr) - base) > 1e-12) ++failures;

    // Translation independence.
    const double c = 10 * u(g);
    if (std::abs(agg(a, (r.array() + c).matrix()) - base - c) > 1e-10) ++failures;

    // Pigou-Dalton for negative alpha.
    if (a.kind() == Alpha::Kind::kNegInf || (a.is_finite() && a.value() < 0)) {
      int lo = 0, hi = 1;
      if (r(lo) > r(hi)) std::swap(lo, hi);
      Vec moved = r;
      const double delta = std::uniform_real_distribution<double>(0.01, 0.99)(g) * (r(hi) - r(lo)) / 2;
      moved(lo) += delta;
      moved(hi) -= delta;
      if (agg(a, moved) < base - 1e-12) ++failures;
    }

    // Continuity.
    const Vec pert = 1e-6 * oracle::RandomNormal(g, n).normalized();
    if (std::abs(agg(a, r + pert) - base) > pert.norm() + 1e-12) ++failures;

    // Unconcerned agents.
    Vec other = r;
    other(i) += u(g);
    const int j = (i + 1) % n;
    const double s1 = base - agg(a, other);
    Vec r2 = r, o2 = other;
    const double shift = u(g);
    r2(j) += shift;
    o2(j) += shift;
    const double s2 = agg(a, r2) - agg(a, o2);
    if (std::abs(s1) > 1e-9 && std::abs(s2) > 1e-9 && (s1 > 0) != (s2 > 0)) ++failures;

    // Same best trajectory under both aggregate forms.
    if (a.is_finite()) {
      const Mat table = Mat::NullaryExpr(4, 10, [&]() { return oracle::RandomNormal(g, 1)(0); });
      int b3 = 0, b4 = 0;
      for (int col = 1; col < 10; ++col) {
        if (AggReward(a, table.col(col)) > AggReward(a, table.col(b3))) b3 = col;
        if (AggRewardPrime(a, table.col(col)) > AggRewardPrime(a, table.col(b4))) b4 = col;
      }
      if (b3 != b4) ++failures;
    }
  }
  return {failures == 0, std::to_string(failures) + " probe failures over 1000 instances per axiom"};
}

Outcome C7() {
  // Gradient check at 100 random points on synthetic data of the target shape.
  PopulationConfig pc;
  pc.per_user = 20;
  const Population pop = GeneratePopulation(pc, 70);
  const Dataset data = GenerateDataset(pop.model, pc, LinkFunction::Sigmoid(), 71);
  std::vector<UserData> users;
  for (const auto& recs : data.ByUser()) users.push_back(MakeUserData(recs, pc.dim));
  const LinkFunction link = LinkFunction::Sigmoid();
  std::mt19937_64 g(7);
  double worst = 0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); };
  for (int t = 0; t < 100; ++t) {
    const Mat omega = oracle::RandomOrthonormal(g, pc.rank, pc.dim);
    Mat thetas(pc.rank, pc.num_users);
    for (int i = 0; i < pc.num_users; ++i) thetas.col(i) = ProjectToBall(oracle::RandomNormal(g, pc.rank), 1.0);
    const Mat og = OmegaGradient(link, omega, thetas, users);
    const int r = t % pc.rank, c = t % pc.dim;
    const double h = 1e-6;
    Mat up = omega, dn = omega;
    up(r, c) += h;
    dn(r, c) -= h;
    const double fd = (JointLogLikelihood(link, up, thetas, users) - JointLogLikelihood(link, dn, thetas, users)) / (2 * h);
    worst = std::max(worst, rel(og(r, c), fd));
    const ProjectedData pd = Project(omega, users[static_cast<std::size_t>(t % pc.num_users)]);
    const Vec theta = thetas.col(t % pc.num_users);
    const Vec tg = ThetaGradient(link, pd, theta);
    for (int a = 0; a < pc.rank; ++a) {
      Vec tu = theta, td = theta;
      tu(a) += h;
      td(a) -= h;
      worst = std::max(worst, rel(tg(a), (LogLikelihood(link, pd, tu) - LogLikelihood(link, pd, td)) / (2 * h)));
    }
  }

  // Recovery and suboptimality trends through the experiment runner.
  Json j = {{"n_p_sweep", {200, 500, 2000}},
            {"seeds", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}},
            {"stages", {"gen", "fit", "policy"}},
            {"alphas", {0, -1}},
            {"fit", {{"c8", 1e-3}, {"complexity_term", 0.0}}}};
  const RunReport report = RunExperiment(ConfigFromJson(j));
  const Json& by = report.summary.at("by_n_p");
  bool trends = by.size() == 3;
  std::ostringstream detail;
  detail << "max gradient rel err " << Fmt("%.1e", worst) << "; medians";
  for (const char* key : {"aligned_error", "suboptimality", "aggregated_suboptimality[0]", "aggregated_suboptimality[-1]"}) {
    detail << " " << key << ":";
    double prev = INFINITY;
    for (const auto& row : by) {
      const Json& m = row.at("median");
      if (!m.contains(key)) {
        trends = false;
        detail << "missing";
        break;
      }
      const double v = m.at(key).get<double>();
      detail << Fmt(" %.4f", v);
      trends = trends && v <= prev;
      prev = v;
    }
  }
  int converged = 0, runs = 0;
  for (const auto& s : report.seeds) {
    for (const auto& r : s.at("runs")) {
      ++runs;
      const Json& fit = r.at("stages").at("fit");
      converged += fit.value("status", "") == "ok" && fit.value("converged", false);
    }
  }
  detail << "; converged " << converged << "/" << runs;
  return {worst <= 1e-5 && trends, detail.str()};
}

Outcome C8() {
  Json j = {{"population", {{"N", 20}}},
            {"n_p_sweep", {500}},
            {"seeds", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}},
            {"stages", {"gen", "fit", "cluster"}},
            {"clustering", {{"K", 2}, {"clustered_population", true}}}};
  const RunReport report = RunExperiment(ConfigFromJson(j));
  std::vector<double> acc;
  bool monotone = true;
  for (const auto& s : report.seeds) {
    const Json& c = s.at("runs").at(0).at("stages").at("cluster");
    if (c.value("status", "") != "ok") {
      monotone = false;
      continue;
    }
    acc.push_back(c.at("accuracy").get<double>());
    monotone = monotone && c.at("objective_monotone").get<bool>();
  }
  const double med = acc.size() == 10 ? oracle::Median(acc) : 0.0;
  return {med >= 0.95 && monotone,
          "median accuracy " + Fmt("%.3f", med) + ", objective monotone: " + (monotone ? "yes" : "no")};
}

Outcome C9() {
  std::mt19937_64 g(9);
  double worst_gap = 0;
  bool bounded = true, greedy = true;
  for (int t = 0; t < 50; ++t) {
    const Mat omega = oracle::RandomOrthonormal(g, 2, 4);
    TrajectoryCatalog cat{Mat::NullaryExpr(4, 5, [&]() { return oracle::RandomNormal(g, 1)(0); })};
    const Mat a = Mat::NullaryExpr(2, 2, [&]() { return oracle::RandomNormal(g, 1)(0); });
    ConfidenceEllipsoid ell = MakeEllipsoid(oracle::RandomNormal(g, 2), a * a.transpose(), 0.5, 0.05);
    const Policy pi{oracle::RandomSimplex(g, 5)}, ref{oracle::RandomSimplex(g, 5)};
    const double closed = PessimisticValue(pi, ell, omega, cat, ref);

    const Vec v = omega * cat.features * (pi.weights - ref.weights);
    const Mat inv = ell.design.inverse();
    const double hx = std::sqrt(ell.radius * inv(0, 0)), hy = std::sqrt(ell.radius * inv(1, 1));
    std::uniform_real_distribution<double> ux(-hx, hx), uy(-hy, hy);
    double sampled = INFINITY;
    for (int acc = 0; acc < 100000;) {
      Vec d(2);
      d << ux(g), uy(g);
      if (d.dot(ell.design * d) > ell.radius) continue;
      ++acc;
      sampled = std::min(sampled, v.dot(ell.center + d));
    }
    worst_gap = std::max(worst_gap, std::abs(sampled - closed));
    if (sampled < closed - 1e-12) worst_gap = INFINITY;

    const Vec r_hat = CatalogRewards(ell.center, omega, cat);
    bounded = bounded && closed <= Value(pi, r_hat) - Value(ref, r_hat) + 1e-12;

    ell.radius = 0.0;
    const PolicySlate slate = DefaultSlate(5);
    int best = 0;
    for (std::size_t c = 1; c < slate.candidates.size(); ++c) {
      if (Value(slate.candidates[c], r_hat) > Value(slate.candidates[static_cast<std::size_t>(best)], r_hat)) {
        best = static_cast<int>(c);
      }
    }
    greedy = greedy && PessimisticPolicy(slate, ell, omega, cat, ref).index == best;
  }
  return {worst_gap <= 1e-3 && bounded && greedy,
          "max |closed - sampled| " + Fmt("%.2e", worst_gap) + ", never optimistic: " + (bounded ? "yes" : "no") +
              ", zero radius greedy: " + (greedy ? "yes" : "no")};
}

std::string StripTimestamp(const std::string& text) {
  static const std::regex re("\"timestamp\": \"[^\"]*\"");
  return std::regex_replace(text, re, "\"timestamp\": \"\"");
}

Outcome C10(const std::string& cli) {
  if (cli.empty() || !fs::exists(cli)) return {false, "CLI binary not found (pass its path as the first argument)"};
  const fs::path root = fs::temp_directory_path() / "prefagg_acceptance_c10";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg = root / "config.json";
  WriteTextFile(cfg.string(), R"({"population": {"N": 6}, "n_p_sweep": [100], "mechanism": {"audit_random_points": 200}})");
  std::string reports[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = root / ("run" + std::to_string(run));
    const std::string cmd = "\"" + cli + "\" run --config \"" + cfg.string() + "\" --seed 7 --out-dir \"" +
                            out.string() + "\" > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "run " + std::to_string(run) + " exited nonzero"};
    reports[run] = ReadTextFile((out / "report.json").string());
  }
  const bool same = StripTimestamp(reports[0]) == StripTimestamp(reports[1]);
  const bool metrics_same = ReadTextFile((root / "run0" / "metrics.csv").string()) ==
                            ReadTextFile((root / "run1" / "metrics.csv").string());
  return {same && metrics_same, std::string("report bytes ") + (same ? "identical" : "differ") +
                                    " modulo timestamp, metrics.csv " + (metrics_same ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::set<int> expect_fail;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--expect-fail" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) expect_fail.insert(std::stoi(tok));
    } else {
      cli = arg;
    }
  }
  // Keep diagnostics from the library out of the report lines.
  SetWarningHandler([](std::string_view) {});

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"worked min-pooling example", C1},
      {"PL pooling equivalence", C2},
      {"Renyi mechanism closed form", C3},
      {"DSIC audits", C4},
      {"Renyi to KL limit", C5},
      {"aggregation axioms", C6},
      {"estimation trends and gradients", C7},
      {"two-cluster recovery", C8},
      {"pessimism correctness", C9},
      {"reproducible reports", [&] { return C10(cli); }},
  };
  const double budgets[] = {1, 1, 30, 120, 1, 10, 300, 120, 60, 120};
  int unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > budgets[i]) {
      o.pass = false;
      o.detail += "; over the " + Fmt("%.0f", budgets[i]) + " s budget";
    }
    std::printf("%s criterion %d (%s): %s [%.2f s]%s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), secs, !o.pass && expect_fail.count(id) ? " (known)" : "");
    std::fflush(stdout);
    if (!o.pass && !expect_fail.count(id)) ++unexpected;
  }
  return unexpected;
}
