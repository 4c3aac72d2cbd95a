#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "prefagg/common.h"
#include "prefagg/likelihood.h"
#include "prefagg/link.h"
#include "prefagg/population.h"

namespace prefagg {

struct FitConfig {
  int max_iters = 300;     // outer alternating iterations
  int inner_iters = 100;   // theta-solver iterations per user per outer step
  double step_size = 1.0;  // initial step for both solvers (mean-LL scale)
  double tol = 1e-7;       // stop when both gradient norms fall below this
  int restarts = 2;
  double lambda = 0.01;    // ridge added to the empirical design
  // Stands in for log(N_G(1/(N N_p)) / delta). Unset means
  // (d k + N k) log(R_max N N_p / delta).
  std::optional<double> complexity_term;
  double delta = 0.1;
  double c8 = 1.0;

  void Validate() const;
};

struct FitLogEntry {
  int iter = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
};

struct Estimate {
  Mat omega_hat;            // k x d
  Mat thetas_hat;           // k x N
  std::vector<Mat> designs; // per-user (1/N_p) sum x x^T, x = omega_hat diff
  double log_likelihood = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  int best_restart = 0;
  std::vector<FitLogEntry> log;  // trace of the selected restart
};

struct ModelDims {
  int num_users = 0;  // N
  int dim = 0;        // d
  int rank = 0;       // k
  double bound = 1.0; // B
};

// Joint MLE of (omega, theta_1..theta_N) by alternating ascent. Restart 0
// starts from a spectral initialization (top-k subspace of per-user
// d-dimensional fits); later restarts start from random orthonormal omega.
Estimate MleFit(const Dataset& dataset, const LinkFunction& link,
                const ModelDims& dims, const FitConfig& cfg,
                std::uint64_t seed);

// Same, on data already grouped per user.
Estimate MleFit(std::span<const UserData> users, const LinkFunction& link,
                const ModelDims& dims, const FitConfig& cfg,
                std::uint64_t seed);

struct LinkConstants {
  double xi = 0.0;     // max |Phi'/Phi|
  double kappa = 0.0;  // 1 / min Phi'
  double eta = 0.0;    // min (Phi'^2 - Phi'' Phi) / Phi^2
};

// Constants over [-2 R_max, 2 R_max]: closed forms for the sigmoid, a
// 10^4-point grid otherwise. Throws kValidation when eta <= 0.
LinkConstants ComputeLinkConstants(const LinkFunction& link, double r_max);

struct RadiusDims {
  int rank = 1;         // k
  int num_users = 1;    // N
  int per_user = 1;     // N_p
  int dim = 1;          // d, used by the default complexity term
  double bound = 1.0;   // B
  double r_max = 1.0;   // used by the default complexity term
};

enum class RadiusKind {
  kPopulation,  // log(N / delta) in the per-user term
  kTransfer,    // log(1 / delta)
};

double ComplexityTerm(const FitConfig& cfg, const RadiusDims& dims);

// c8 * (k xi^2 kappa^2 C / (eta^2 N N_p) + xi^2 (k + log(N/delta)) /
//       (eta^2 N_p) + lambda B^2), C the complexity term.
double ConfidenceRadius(const FitConfig& cfg, const LinkConstants& consts,
                        const RadiusDims& dims,
                        RadiusKind kind = RadiusKind::kPopulation);

// {theta : (theta - center)^T design (theta - center) <= radius}.
struct ConfidenceEllipsoid {
  Vec center;
  Mat design;  // Sigma_hat + lambda I
  double radius = 0.0;

  void Validate() const;
};

ConfidenceEllipsoid MakeEllipsoid(const Vec& center, const Mat& empirical_design,
                                  double lambda, double radius);

struct TransferResult {
  Vec theta;
  ConfidenceEllipsoid ellipsoid;
  double log_likelihood = 0.0;
  double grad_norm = 0.0;
};

// Theta-only fit for a new user with the representation frozen at omega_hat.
// population_size is the N of the fit that produced omega_hat.
TransferResult TransferFit(std::span<const ComparisonDatum> records,
                           const Mat& omega_hat, const LinkFunction& link,
                           double bound, double r_max, int population_size,
                           const FitConfig& cfg);

struct Alignment {
  Mat rotation;  // orthonormal P
  double residual = 0.0;  // ||theta_hat - P^T theta_star||_F
};

// Orthogonal Procrustes: the P minimizing ||theta_hat - P^T theta_star||_F.
Alignment ProcrustesAlign(const Mat& theta_hat, const Mat& theta_star);

ThetaSolveOptions ThetaOptions(const FitConfig& cfg);

}  // namespace prefagg
