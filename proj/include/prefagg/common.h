#pragma once

// Shared vocabulary: linear-algebra aliases, the error type used across the
// library, the warning sink, and seeded random streams.

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace prefagg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorCode {
  kDomain,
  kShape,
  kInput,
  kNumerical,
  kValidation,
  kParse,
  kDiversityUnsatisfiable,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void Fail(ErrorCode code, const std::string& what);

// Warnings go through a process-wide handler. The default handler writes each
// distinct message to stderr once.
using WarningHandler = std::function<void(std::string_view)>;
void Warn(std::string_view message);
WarningHandler SetWarningHandler(WarningHandler handler);

// Seeded stream. Every stochastic operation takes one of these explicitly.
using Rng = std::mt19937_64;

// Deterministic child seed for (master, stream) pairs, used for per-user and
// per-restart substreams.
std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t stream);

inline Rng MakeRng(std::uint64_t seed) { return Rng(seed); }

// Standard normal draws with a fixed algorithm (Box-Muller on 53-bit
// uniforms), so generated data does not depend on the standard library's
// normal_distribution implementation.
double StandardNormal(Rng& rng);
double Uniform01(Rng& rng);
Vec StandardNormalVector(Rng& rng, int n);
Mat StandardNormalMatrix(Rng& rng, int rows, int cols);

// Uniform point on the unit sphere in R^n.
Vec UnitSphere(Rng& rng, int n);

// Uniform draw from the probability simplex of dimension k (flat Dirichlet).
Vec RandomSimplex(Rng& rng, int k);

void RequireFinite(double x, std::string_view what);

}  // namespace prefagg
