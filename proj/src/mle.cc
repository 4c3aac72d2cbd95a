#include "prefagg/mle.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace prefagg {
namespace {

// Q factor of a d x k matrix with the sign convention diag(R) >= 0.
Mat QrRetract(const Mat& w) {
  Eigen::HouseholderQR<Mat> qr(w);
  Mat q = qr.householderQ() * Mat::Identity(w.rows(), w.cols());
  const auto r = qr.matrixQR();
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

std::vector<ProjectedData> ProjectAll(const Mat& omega,
                                      std::span<const UserData> users) {
  std::vector<ProjectedData> out;
  out.reserve(users.size());
  for (const auto& u : users) out.push_back(Project(omega, u));
  return out;
}

struct RunState {
  Mat omega;
  Mat thetas;
  double objective = -std::numeric_limits<double>::infinity();
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<FitLogEntry> log;
};

// Theta-step for every user at fixed omega; returns the largest gradient
// mapping norm.
double ThetaStep(const LinkFunction& link, const std::vector<ProjectedData>& projected,
                 Mat& thetas, double bound, const ThetaSolveOptions& options) {
  double worst = 0.0;
  for (std::size_t i = 0; i < projected.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const ThetaSolveResult r =
        MaximizeTheta(link, projected[i], thetas.col(col), bound, options);
    thetas.col(col) = r.theta;
    worst = std::max(worst, r.grad_norm);
  }
  return worst;
}

Mat SpectralInit(std::span<const UserData> users, const LinkFunction& link,
                 const ModelDims& dims, const ThetaSolveOptions& options) {
  const Mat identity = Mat::Identity(dims.dim, dims.dim);
  Mat betas(dims.dim, dims.num_users);
  for (int i = 0; i < dims.num_users; ++i) {
    const ProjectedData raw = Project(identity, users[static_cast<std::size_t>(i)]);
    betas.col(i) = MaximizeTheta(link, raw, Vec::Zero(dims.dim), dims.bound,
                                 options).theta;
  }
  Eigen::JacobiSVD<Mat> svd(betas, Eigen::ComputeThinU);
  const Mat& full = svd.matrixU();
  Mat u;
  if (full.cols() >= dims.rank) {
    u = full.leftCols(dims.rank);
  } else {
    // Fewer users than k: pad with an orthonormal completion.
    Mat padded = Mat::Identity(dims.dim, dims.rank);
    padded.leftCols(full.cols()) = full;
    u = QrRetract(padded);
  }
  return u.transpose();
}

RunState RunAlternating(std::span<const UserData> users, const LinkFunction& link,
                        const ModelDims& dims, const FitConfig& cfg,
                        Mat omega) {
  const ThetaSolveOptions options = ThetaOptions(cfg);
  double total = 0.0;
  for (const auto& u : users) total += u.size();

  RunState state;
  state.omega = std::move(omega);
  state.thetas = Mat::Zero(dims.rank, dims.num_users);
  double step = cfg.step_size;
  std::vector<ProjectedData> projected = ProjectAll(state.omega, users);

  for (int it = 0; it < cfg.max_iters; ++it) {
    const double theta_gn = ThetaStep(link, projected, state.thetas, dims.bound, options);
    double value = JointLogLikelihood(link, state.omega, state.thetas, users) / total;
    if (!std::isfinite(value)) {
      Fail(ErrorCode::kNumerical,
           "non-finite likelihood at iteration " + std::to_string(it));
    }

    // Riemannian ascent on {W : W^T W = I}, W = omega^T.
    const Mat w = state.omega.transpose();
    const Mat g = OmegaGradient(link, state.omega, state.thetas, users).transpose() / total;
    const Mat wtg = w.transpose() * g;
    const Mat riem = g - w * (0.5 * (wtg + wtg.transpose()));
    const double omega_gn = riem.norm();
    state.log.push_back({it, value, std::max(theta_gn, omega_gn)});
    state.iterations = it + 1;
    state.grad_norm = std::max(theta_gn, omega_gn);
    if (theta_gn <= cfg.tol && omega_gn <= cfg.tol) {
      state.converged = true;
      break;
    }

    const double slope = riem.squaredNorm();
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      const Mat candidate = QrRetract(w + step * riem).transpose();
      const double cand_value =
          JointLogLikelihood(link, candidate, state.thetas, users) / total;
      if (std::isfinite(cand_value) && cand_value >= value + 1e-4 * step * slope) {
        state.omega = candidate;
        accepted = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    if (!accepted && theta_gn <= cfg.tol) {
      state.converged = omega_gn <= std::sqrt(cfg.tol);
      break;
    }
    if (accepted) projected = ProjectAll(state.omega, users);
  }

  // Finish with a tight theta solve at the final representation, so each
  // theta_hat is the exact per-user maximizer for omega_hat.
  ThetaSolveOptions final_options = options;
  final_options.max_iters = std::max(options.max_iters, 500);
  final_options.tol = std::min(options.tol, 1e-10);
  ThetaStep(link, projected, state.thetas, dims.bound, final_options);
  state.objective = JointLogLikelihood(link, state.omega, state.thetas, users);
  return state;
}

}  // namespace

void FitConfig::Validate() const {
  if (!(tol > 0)) Fail(ErrorCode::kValidation, "fit tol must be positive");
  if (!(lambda > 0)) Fail(ErrorCode::kValidation, "lambda must be positive");
  if (!(delta > 0 && delta <= 1)) {
    Fail(ErrorCode::kValidation, "delta must lie in (0, 1]");
  }
  if (max_iters < 1 || inner_iters < 1 || restarts < 1) {
    Fail(ErrorCode::kValidation, "iteration counts must be positive");
  }
  if (!(step_size > 0)) Fail(ErrorCode::kValidation, "step size must be positive");
}

ThetaSolveOptions ThetaOptions(const FitConfig& cfg) {
  ThetaSolveOptions o;
  o.max_iters = cfg.inner_iters;
  o.tol = cfg.tol;
  o.step_size = cfg.step_size;
  return o;
}

Estimate MleFit(const Dataset& dataset, const LinkFunction& link,
                const ModelDims& dims, const FitConfig& cfg, std::uint64_t seed) {
  const auto groups = dataset.ByUser();
  std::vector<UserData> users;
  users.reserve(groups.size());
  for (const auto& g : groups) users.push_back(MakeUserData(g, dims.dim));
  return MleFit(users, link, dims, cfg, seed);
}

Estimate MleFit(std::span<const UserData> users, const LinkFunction& link,
                const ModelDims& dims, const FitConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  if (static_cast<int>(users.size()) != dims.num_users) {
    Fail(ErrorCode::kInput, "expected data for " + std::to_string(dims.num_users) +
                                " users, got " + std::to_string(users.size()));
  }
  if (dims.rank < 1 || dims.rank > dims.dim) {
    Fail(ErrorCode::kShape, "need 1 <= k <= d");
  }
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (users[i].size() == 0) {
      Fail(ErrorCode::kInput, "user " + std::to_string(i) + " has no comparisons");
    }
    if (users[i].diffs.rows() != dims.dim) {
      Fail(ErrorCode::kShape, "user " + std::to_string(i) + " has wrong feature dim");
    }
  }

  RunState best;
  int best_restart = -1;
  for (int r = 0; r < cfg.restarts; ++r) {
    Mat omega0;
    if (r == 0) {
      omega0 = SpectralInit(users, link, dims, ThetaOptions(cfg));
    } else {
      Rng rng = MakeRng(DeriveSeed(seed, static_cast<std::uint64_t>(r)));
      omega0 = RandomOrthonormalRows(rng, dims.rank, dims.dim);
    }
    RunState run = RunAlternating(users, link, dims, cfg, std::move(omega0));
    if (best_restart < 0 || run.objective > best.objective) {
      best = std::move(run);
      best_restart = r;
    }
  }

  Estimate est;
  est.omega_hat = best.omega;
  est.thetas_hat = best.thetas;
  est.log_likelihood = best.objective;
  est.grad_norm = best.grad_norm;
  est.iterations = best.iterations;
  est.converged = best.converged;
  est.best_restart = best_restart;
  est.log = std::move(best.log);
  est.designs.reserve(users.size());
  for (const auto& u : users) {
    est.designs.push_back(EmpiricalDesign(Project(est.omega_hat, u)));
  }
  return est;
}

LinkConstants ComputeLinkConstants(const LinkFunction& link, double r_max) {
  if (!(r_max >= 0) || !std::isfinite(r_max)) {
    Fail(ErrorCode::kDomain, "R_max must be finite and non-negative");
  }
  const double m = 2.0 * r_max;
  LinkConstants c;
  if (link.kind() == LinkFunction::Kind::kSigmoid) {
    // |Phi'/Phi| = sigma(-x) peaks at x = -m; Phi' and -(log Phi)'' both equal
    // sigma'(x), smallest at |x| = m.
    c.xi = link.Value(m);
    const double dmin = link.Derivative(m);
    c.kappa = 1.0 / dmin;
    c.eta = dmin;
  } else {
    const int points = 10000;
    double xi = 0.0;
    double dmin = std::numeric_limits<double>::infinity();
    double eta = std::numeric_limits<double>::infinity();
    for (int i = 0; i < points; ++i) {
      const double x = points == 1 ? 0.0 : -m + 2.0 * m * i / (points - 1);
      const double v = link.Value(x);
      const double d = link.Derivative(x);
      const double dd = link.SecondDerivative(x);
      xi = std::max(xi, std::abs(d / v));
      dmin = std::min(dmin, d);
      eta = std::min(eta, (d * d - dd * v) / (v * v));
    }
    c.xi = xi;
    c.kappa = 1.0 / dmin;
    c.eta = eta;
  }
  if (!(c.eta > 0)) {
    Fail(ErrorCode::kValidation, "link is not log-concave on [-2R_max, 2R_max] (eta <= 0)");
  }
  return c;
}

double ComplexityTerm(const FitConfig& cfg, const RadiusDims& dims) {
  if (cfg.complexity_term) return *cfg.complexity_term;
  const double n = dims.num_users;
  return (static_cast<double>(dims.dim) * dims.rank + n * dims.rank) *
         std::log(dims.r_max * n * dims.per_user / cfg.delta);
}

double ConfidenceRadius(const FitConfig& cfg, const LinkConstants& consts,
                        const RadiusDims& dims, RadiusKind kind) {
  if (dims.rank < 1 || dims.num_users < 1 || dims.per_user < 1) {
    Fail(ErrorCode::kDomain, "radius dims must be positive");
  }
  const double k = dims.rank;
  const double n = dims.num_users;
  const double np = dims.per_user;
  const double xi2 = consts.xi * consts.xi;
  const double eta2 = consts.eta * consts.eta;
  const double kappa2 = consts.kappa * consts.kappa;
  const double log_term = kind == RadiusKind::kPopulation
                              ? std::log(n / cfg.delta)
                              : std::log(1.0 / cfg.delta);
  const double representation =
      k * xi2 * kappa2 * ComplexityTerm(cfg, dims) / (eta2 * n * np);
  const double per_user = xi2 * (k + log_term) / (eta2 * np);
  const double ridge = cfg.lambda * dims.bound * dims.bound;
  return cfg.c8 * (representation + per_user + ridge);
}

void ConfidenceEllipsoid::Validate() const {
  if (!(radius >= 0)) Fail(ErrorCode::kValidation, "ellipsoid radius must be >= 0");
  if (design.rows() != center.size() || design.cols() != center.size()) {
    Fail(ErrorCode::kShape, "ellipsoid design does not match center");
  }
}

ConfidenceEllipsoid MakeEllipsoid(const Vec& center, const Mat& empirical_design,
                                  double lambda, double radius) {
  ConfidenceEllipsoid e;
  e.center = center;
  e.design = empirical_design +
             lambda * Mat::Identity(empirical_design.rows(), empirical_design.cols());
  e.radius = radius;
  e.Validate();
  return e;
}

TransferResult TransferFit(std::span<const ComparisonDatum> records,
                           const Mat& omega_hat, const LinkFunction& link,
                           double bound, double r_max, int population_size,
                           const FitConfig& cfg) {
  cfg.Validate();
  if (records.empty()) Fail(ErrorCode::kInput, "transfer dataset is empty");
  if (OrthonormalityError(omega_hat) > 1e-8) {
    Fail(ErrorCode::kValidation, "omega_hat is not orthonormal");
  }
  const UserData raw = MakeUserData(records, static_cast<int>(omega_hat.cols()));
  const ProjectedData data = Project(omega_hat, raw);

  ThetaSolveOptions options = ThetaOptions(cfg);
  options.max_iters = std::max(options.max_iters, 500);
  options.tol = std::min(options.tol, 1e-10);
  const ThetaSolveResult r = MaximizeTheta(
      link, data, Vec::Zero(omega_hat.rows()), bound, options);

  TransferResult out;
  out.theta = r.theta;
  out.log_likelihood = r.log_likelihood;
  out.grad_norm = r.grad_norm;
  const LinkConstants consts = ComputeLinkConstants(link, r_max);
  RadiusDims dims;
  dims.rank = static_cast<int>(omega_hat.rows());
  dims.num_users = std::max(1, population_size);
  dims.per_user = data.size();
  dims.dim = static_cast<int>(omega_hat.cols());
  dims.bound = bound;
  dims.r_max = r_max;
  out.ellipsoid = MakeEllipsoid(r.theta, EmpiricalDesign(data), cfg.lambda,
                                ConfidenceRadius(cfg, consts, dims, RadiusKind::kTransfer));
  return out;
}

Alignment ProcrustesAlign(const Mat& theta_hat, const Mat& theta_star) {
  if (theta_hat.rows() != theta_star.rows() || theta_hat.cols() != theta_star.cols()) {
    Fail(ErrorCode::kShape, "Procrustes inputs must both be k x N");
  }
  const Mat m = theta_star * theta_hat.transpose();
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();
  if (s.size() > 0 && s(s.size() - 1) <= 1e-12 * std::max(1.0, s(0))) {
    Warn("Procrustes: rank-deficient cross product; rotation is not unique");
  }
  Alignment a;
  a.rotation = svd.matrixU() * svd.matrixV().transpose();
  a.residual = (theta_hat - a.rotation.transpose() * theta_star).norm();
  return a;
}

}  // namespace prefagg
