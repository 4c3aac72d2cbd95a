#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "prefagg/cluster.h"
#include "prefagg/likelihood.h"
#include "prefagg/mle.h"
#include "prefagg/population.h"
#include "support.h"

using namespace prefagg;

namespace {

const LinkFunction kSigmoid = LinkFunction::Sigmoid();

std::vector<UserData> GroupUsers(const Dataset& d, int dim) {
  std::vector<UserData> users;
  for (const auto& recs : d.ByUser()) users.push_back(MakeUserData(recs, dim));
  return users;
}

struct Synthetic {
  PopulationConfig cfg;
  Population pop;
  Dataset data;
};

Synthetic MakeSynthetic(int n, int per_user, std::uint64_t seed) {
  Synthetic s;
  s.cfg.num_users = n;
  s.cfg.per_user = per_user;
  if (n < s.cfg.rank) s.cfg.diversity_target = 0.0;
  s.pop = GeneratePopulation(s.cfg, seed);
  s.data = GenerateDataset(s.pop.model, s.cfg, kSigmoid, seed + 1000);
  return s;
}

double RelErr(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

TEST_CASE("link_constants: sigmoid examples") {
  const LinkConstants c0 = ComputeLinkConstants(kSigmoid, 0.0);
  CHECK(c0.xi == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(c0.eta == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(c0.kappa == doctest::Approx(4.0).epsilon(1e-14));

  const LinkConstants c1 = ComputeLinkConstants(kSigmoid, 1.0);
  CHECK(c1.eta == doctest::Approx(1.0 / (2.0 + std::exp(2.0) + std::exp(-2.0))).epsilon(1e-14));

  for (double r : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    const LinkConstants c = ComputeLinkConstants(kSigmoid, r);
    CHECK(c.xi == doctest::Approx(oracle::Sigmoid(2 * r)).epsilon(1e-14));
    CHECK(c.xi <= 1.0);
    const double s = oracle::Sigmoid(2 * r);
    CHECK(c.kappa == doctest::Approx(1.0 / (s * (1 - s))).epsilon(1e-12));
  }
}

TEST_CASE("link_constants: tabulated links") {
  // Probit is log-concave; grid constants must match direct evaluation.
  const LinkConstants p = ComputeLinkConstants(LinkFunction::Probit(), 1.0);
  const double phi2 = std::exp(-2.0) / std::sqrt(2 * M_PI);
  const double cdf_m2 = 0.5 * std::erfc(2.0 / std::sqrt(2.0));
  CHECK(p.kappa == doctest::Approx(1.0 / phi2).epsilon(1e-4));
  CHECK(p.xi == doctest::Approx(phi2 / cdf_m2).epsilon(1e-4));
  CHECK(p.eta > 0);

  // The Cauchy CDF is symmetric and monotone but not log-concave.
  std::vector<double> cauchy;
  for (int i = 0; i <= 4000; ++i) cauchy.push_back(0.5 + std::atan(-20.0 + 0.01 * i) / M_PI);
  const LinkFunction link = LinkFunction::Tabulated(cauchy, -20.0, 0.01);
  try {
    ComputeLinkConstants(link, 5.0);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kValidation);
  }
}

TEST_CASE("confidence_radius") {
  FitConfig cfg;
  RadiusDims dims;
  dims.rank = 3;
  dims.num_users = 30;
  dims.per_user = 500;
  dims.dim = 20;
  dims.bound = 1.0;
  dims.r_max = 2.0;
  const LinkConstants c = ComputeLinkConstants(kSigmoid, 2.0);

  SUBCASE("golden value with defaults") {
    CHECK(ConfidenceRadius(cfg, c, dims) == doctest::Approx(3748881.60998567511).epsilon(1e-12));
  }
  SUBCASE("reduced formula") {
    cfg.complexity_term = 0.0;
    cfg.lambda = 1e-300;
    const double expected = c.xi * c.xi * (3 + std::log(30 / 0.1)) / (c.eta * c.eta * 500);
    CHECK(ConfidenceRadius(cfg, c, dims) == doctest::Approx(expected).epsilon(1e-13));
    const double transfer = c.xi * c.xi * (3 + std::log(1 / 0.1)) / (c.eta * c.eta * 500);
    CHECK(ConfidenceRadius(cfg, c, dims, RadiusKind::kTransfer) ==
          doctest::Approx(transfer).epsilon(1e-13));
  }
  SUBCASE("doubling N_p halves the data terms") {
    cfg.complexity_term = 7.5;
    const double floor = cfg.lambda * dims.bound * dims.bound;
    const double a = ConfidenceRadius(cfg, c, dims) - floor;
    dims.per_user *= 2;
    const double b = ConfidenceRadius(cfg, c, dims) - floor;
    CHECK(b == doctest::Approx(a / 2).epsilon(1e-12));
  }
  SUBCASE("strictly decreasing in N_p with the default complexity term") {
    double prev = INFINITY;
    for (int np : {50, 100, 200, 500, 1000, 5000}) {
      dims.per_user = np;
      const double r = ConfidenceRadius(cfg, c, dims);
      CHECK(r < prev);
      prev = r;
    }
  }
}

TEST_CASE("likelihood gradients match central differences") {
  std::mt19937_64 g(31);
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    const int k = 2 + t % 3, d = 5 + t % 4, n = 20;
    const Mat omega = oracle::RandomOrthonormal(g, k, d);
    UserData ud{Mat(d, n), Vec(n)};
    for (int j = 0; j < n; ++j) {
      ud.diffs.col(j) = oracle::RandomNormal(g, d);
      ud.signs(j) = (g() & 1) ? 1.0 : -1.0;
    }
    const Vec theta = 0.7 * oracle::RandomNormal(g, k);
    const ProjectedData pd = Project(omega, ud);

    const Vec grad = ThetaGradient(kSigmoid, pd, theta);
    for (int a = 0; a < k; ++a) {
      const double h = 1e-6;
      Vec up = theta, dn = theta;
      up(a) += h;
      dn(a) -= h;
      const double fd = (LogLikelihood(kSigmoid, pd, up) - LogLikelihood(kSigmoid, pd, dn)) / (2 * h);
      CHECK(RelErr(grad(a), fd) <= 1e-5);
    }

    // Omega gradient for two users sharing omega.
    std::vector<UserData> users = {ud, ud};
    users[1].signs = -ud.signs;
    Mat thetas(k, 2);
    thetas.col(0) = theta;
    thetas.col(1) = 0.5 * oracle::RandomNormal(g, k);
    const Mat og = OmegaGradient(kSigmoid, omega, thetas, users);
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < d; ++c) {
        const double h = 1e-6;
        Mat up = omega, dn = omega;
        up(r, c) += h;
        dn(r, c) -= h;
        const double fd = (JointLogLikelihood(kSigmoid, up, thetas, users) -
                           JointLogLikelihood(kSigmoid, dn, thetas, users)) /
                          (2 * h);
        CHECK(RelErr(og(r, c), fd) <= 1e-5);
        ++checked;
      }
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("log-likelihood is concave in theta along random segments") {
  std::mt19937_64 g(41);
  for (const auto& link : {kSigmoid, LinkFunction::Probit()}) {
    for (int t = 0; t < 100; ++t) {
      const int k = 3, n = 30;
      ProjectedData pd{Mat(k, n), Vec(n)};
      for (int j = 0; j < n; ++j) {
        pd.x.col(j) = oracle::RandomNormal(g, k);
        pd.signs(j) = (g() & 1) ? 1.0 : -1.0;
      }
      const Vec a = ProjectToBall(oracle::RandomNormal(g, k), 1.0);
      const Vec b = ProjectToBall(oracle::RandomNormal(g, k), 1.0);
      const double mid = LogLikelihood(link, pd, 0.5 * (a + b));
      const double avg = 0.5 * (LogLikelihood(link, pd, a) + LogLikelihood(link, pd, b));
      CHECK(mid >= avg - 1e-9);
    }
  }
}

TEST_CASE("mle_fit examples") {
  SUBCASE("single user, all o=0 with gap +1 hits the boundary") {
    ProjectedData pd{Mat::Ones(1, 25), Vec::Ones(25)};
    const ThetaSolveResult r = MaximizeTheta(kSigmoid, pd, Vec::Zero(1), 1.5, ThetaSolveOptions{});
    CHECK(r.theta(0) == doctest::Approx(1.5).epsilon(1e-12));
  }
  SUBCASE("fit beats the ground truth on its own data, invariants hold") {
    const Synthetic s = MakeSynthetic(10, 200, 3);
    FitConfig cfg;
    ModelDims dims{10, s.cfg.dim, s.cfg.rank, s.cfg.bound};
    const Estimate est = MleFit(s.data, kSigmoid, dims, cfg, 5);
    const auto users = GroupUsers(s.data, s.cfg.dim);
    const double truth = JointLogLikelihood(kSigmoid, s.pop.model.omega, s.pop.model.thetas, users);
    CHECK(est.log_likelihood >= truth - 1e-6);
    CHECK(est.log_likelihood ==
          doctest::Approx(JointLogLikelihood(kSigmoid, est.omega_hat, est.thetas_hat, users)).epsilon(1e-10));
    CHECK(OrthonormalityError(est.omega_hat) <= 1e-8);
    for (int i = 0; i < 10; ++i) {
      CHECK(est.thetas_hat.col(i).norm() <= s.cfg.bound + 1e-12);
      const Mat& sig = est.designs[static_cast<std::size_t>(i)];
      CHECK((sig - sig.transpose()).norm() <= 1e-12);
      Eigen::SelfAdjointEigenSolver<Mat> es(sig);
      CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    }
    REQUIRE(!est.log.empty());
    // Deterministic under a fixed seed.
    const Estimate again = MleFit(s.data, kSigmoid, dims, cfg, 5);
    CHECK(again.log_likelihood == est.log_likelihood);
    CHECK((again.omega_hat - est.omega_hat).norm() == 0.0);
  }
  SUBCASE("empty user is an input error") {
    std::vector<UserData> users = {UserData{Mat(4, 0), Vec(0)}};
    try {
      MleFit(users, kSigmoid, ModelDims{1, 4, 2, 1.0}, FitConfig{}, 1);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInput);
    }
  }
  SUBCASE("config validation") {
    FitConfig bad;
    bad.lambda = 0;
    CHECK_THROWS_AS(bad.Validate(), Error);
    bad = FitConfig{};
    bad.delta = 1.5;
    CHECK_THROWS_AS(bad.Validate(), Error);
    bad = FitConfig{};
    bad.tol = 0;
    CHECK_THROWS_AS(bad.Validate(), Error);
  }
}

TEST_CASE("transfer_fit") {
  SUBCASE("empty dataset") {
    try {
      TransferFit({}, Mat::Identity(2, 4), kSigmoid, 1.0, 2.0, 10, FitConfig{});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInput);
    }
  }
  SUBCASE("identical data reproduces the fitted user") {
    const Synthetic s = MakeSynthetic(6, 300, 17);
    FitConfig cfg;
    const Estimate est = MleFit(s.data, kSigmoid, ModelDims{6, s.cfg.dim, s.cfg.rank, s.cfg.bound}, cfg, 2);
    const auto recs = s.data.ForUser(2);
    const TransferResult tr = TransferFit(recs, est.omega_hat, kSigmoid, s.cfg.bound, s.cfg.r_max, 6, cfg);
    CHECK((tr.theta - est.thetas_hat.col(2)).norm() <= 1e-6);
    CHECK(tr.ellipsoid.radius >= 0);
    Eigen::SelfAdjointEigenSolver<Mat> es(tr.ellipsoid.design);
    CHECK(es.eigenvalues().minCoeff() > 0);
  }
  SUBCASE("error shrinks with more data") {
    std::vector<double> small, large;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      PopulationConfig cfg;
      cfg.num_users = 2;
      cfg.diversity_target = 0.0;
      const Population pop = GeneratePopulation(cfg, seed);
      for (int np : {200, 2000}) {
        cfg.per_user = np;
        const Dataset d = GenerateDataset(pop.model, cfg, kSigmoid, seed + 77);
        const TransferResult tr =
            TransferFit(d.ForUser(0), pop.model.omega, kSigmoid, cfg.bound, cfg.r_max, 30, FitConfig{});
        (np == 200 ? small : large).push_back((tr.theta - pop.model.thetas.col(0)).norm());
      }
    }
    CHECK(oracle::Median(large) < oracle::Median(small));
  }
}

TEST_CASE("procrustes_align") {
  std::mt19937_64 g(7);
  const Mat star = Mat::NullaryExpr(3, 8, [&]() { return oracle::RandomNormal(g, 1)(0); });
  SUBCASE("exact rotation") {
    const Mat q = oracle::RandomOrthonormal(g, 3, 3);
    const Alignment a = ProcrustesAlign(q.transpose() * star, star);
    CHECK(a.residual <= 1e-10);
    CHECK((a.rotation - q).norm() <= 1e-10);
  }
  SUBCASE("identity") {
    const Alignment a = ProcrustesAlign(star, star);
    CHECK((a.rotation - Mat::Identity(3, 3)).norm() <= 1e-10);
    CHECK(a.residual <= 1e-10);
  }
  SUBCASE("random-search oracle") {
    for (int t = 0; t < 5; ++t) {
      const Mat hat = Mat::NullaryExpr(3, 8, [&]() { return oracle::RandomNormal(g, 1)(0); });
      const Alignment a = ProcrustesAlign(hat, star);
      CHECK((a.rotation * a.rotation.transpose() - Mat::Identity(3, 3)).norm() <= 1e-10);
      CHECK(a.residual == doctest::Approx((hat - a.rotation.transpose() * star).norm()).epsilon(1e-12));
      for (int c = 0; c < 1000; ++c) {
        const Mat p = oracle::RandomOrthonormal(g, 3, 3);
        CHECK(a.residual <= (hat - p.transpose() * star).norm() + 1e-12);
      }
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(ProcrustesAlign(Mat::Zero(3, 4), Mat::Zero(3, 5)), Error);
  }
}

TEST_CASE("cluster_fit") {
  SUBCASE("K=1 equals the pooled fit") {
    const Synthetic s = MakeSynthetic(5, 200, 9);
    const auto users = GroupUsers(s.data, s.cfg.dim);
    FitConfig cfg;
    const Clustering c = ClusterFit(users, 1, s.pop.model.omega, kSigmoid, s.cfg.bound, cfg, 3);
    std::vector<ProjectedData> parts;
    for (const auto& u : users) parts.push_back(Project(s.pop.model.omega, u));
    const ProjectedData pooled = Concatenate(parts);
    ThetaSolveOptions opt = ThetaOptions(cfg);
    opt.max_iters = 2000;
    opt.tol = 1e-12;
    const ThetaSolveResult r = MaximizeTheta(kSigmoid, pooled, Vec::Zero(s.cfg.rank), s.cfg.bound, opt);
    CHECK(c.objective == doctest::Approx(r.log_likelihood).epsilon(1e-9));
    for (int a : c.assignment) CHECK(a == 0);
  }
  SUBCASE("two separated clusters are recovered; trace monotone") {
    std::vector<double> accuracies;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      PopulationConfig cfg;
      cfg.num_users = 20;
      cfg.per_user = 500;
      cfg.diversity_target = 0.0;
      Population pop = GeneratePopulation(cfg, seed);
      const Vec u = pop.model.thetas.col(0).normalized();
      std::vector<int> truth(20);
      for (int i = 0; i < 20; ++i) {
        truth[static_cast<std::size_t>(i)] = i % 2;
        pop.model.thetas.col(i) = (i % 2 ? -1.0 : 1.0) * cfg.bound * u;
      }
      const Dataset d = GenerateDataset(pop.model, cfg, kSigmoid, seed + 50);
      const Clustering c =
          ClusterFit(GroupUsers(d, cfg.dim), 2, pop.model.omega, kSigmoid, cfg.bound, FitConfig{}, seed);
      int same = 0;
      for (int i = 0; i < 20; ++i) same += c.assignment[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(i)];
      accuracies.push_back(std::max(same, 20 - same) / 20.0);
      for (std::size_t j = 1; j < c.objective_trace.size(); ++j) {
        CHECK(c.objective_trace[j] >= c.objective_trace[j - 1]);
      }
      for (int k = 0; k < 2; ++k) CHECK(c.cluster_thetas.col(k).norm() <= cfg.bound + 1e-12);
    }
    CHECK(oracle::Median(accuracies) >= 0.95);
  }
  SUBCASE("more clusters than users still assigns everyone") {
    const Synthetic s = MakeSynthetic(3, 50, 4);
    const Clustering c = ClusterFit(GroupUsers(s.data, s.cfg.dim), 5, s.pop.model.omega, kSigmoid,
                                    s.cfg.bound, FitConfig{}, 1);
    CHECK(c.assignment.size() == 3);
    for (int a : c.assignment) CHECK((a >= 0 && a < 5));
  }
}

TEST_CASE("label_discrepancy") {
  const Synthetic s = MakeSynthetic(2, 100, 12);
  const auto users = GroupUsers(s.data, s.cfg.dim);
  const Mat& omega = s.pop.model.omega;
  const Mat grid = SobolThetaGrid(s.cfg.rank, s.cfg.bound, 256);
  for (int j = 0; j < grid.cols(); ++j) CHECK(grid.col(j).norm() <= s.cfg.bound + 1e-12);

  CHECK(LabelDiscrepancy(users[0], users[0], omega, grid, kSigmoid) == 0.0);

  const Mat one = grid.col(5);
  const double direct =
      std::abs(LogLikelihood(kSigmoid, omega, one.col(0), users[0]) / users[0].size() -
               LogLikelihood(kSigmoid, omega, one.col(0), users[1]) / users[1].size());
  CHECK(LabelDiscrepancy(users[0], users[1], omega, one, kSigmoid) == doctest::Approx(direct).epsilon(1e-12));

  double prev = 0.0;
  for (int m : {1, 4, 16, 64, 256}) {
    const double v = LabelDiscrepancy(users[0], users[1], omega, grid.leftCols(m), kSigmoid);
    CHECK(v >= prev);
    prev = v;
  }
}
