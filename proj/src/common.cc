#include "prefagg/common.h"

#include <cmath>
#include <iostream>
#include <mutex>
#include <numbers>
#include <set>
#include <string>

namespace prefagg {
namespace {

std::mutex g_warn_mutex;

WarningHandler& Handler() {
  static WarningHandler handler = [](std::string_view message) {
    static std::set<std::string, std::less<>> seen;
    if (seen.insert(std::string(message)).second) {
      std::cerr << "prefagg: warning: " << message << "\n";
    }
  };
  return handler;
}

}  // namespace

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDomain:
      return "domain";
    case ErrorCode::kShape:
      return "shape";
    case ErrorCode::kInput:
      return "input";
    case ErrorCode::kNumerical:
      return "numerical";
    case ErrorCode::kValidation:
      return "validation";
    case ErrorCode::kParse:
      return "parse";
    case ErrorCode::kDiversityUnsatisfiable:
      return "diversity-unsatisfiable";
  }
  return "unknown";
}

void Fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

void Warn(std::string_view message) {
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  if (Handler()) Handler()(message);
}

WarningHandler SetWarningHandler(WarningHandler handler) {
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  WarningHandler previous = std::move(Handler());
  Handler() = std::move(handler);
  return previous;
}

std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double StandardNormal(Rng& rng) {
  double u1 = Uniform01(rng);
  while (u1 <= 0.0) u1 = Uniform01(rng);
  const double u2 = Uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

Vec StandardNormalVector(Rng& rng, int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = StandardNormal(rng);
  return v;
}

Mat StandardNormalMatrix(Rng& rng, int rows, int cols) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = StandardNormal(rng);
  return m;
}

Vec UnitSphere(Rng& rng, int n) {
  for (;;) {
    Vec v = StandardNormalVector(rng, n);
    const double norm = v.norm();
    if (norm > 1e-12) return v / norm;
  }
}

Vec RandomSimplex(Rng& rng, int k) {
  Vec v(k);
  for (int i = 0; i < k; ++i) {
    double u = Uniform01(rng);
    while (u <= 0.0) u = Uniform01(rng);
    v(i) = -std::log(u);
  }
  return v / v.sum();
}

void RequireFinite(double x, std::string_view what) {
  if (!std::isfinite(x)) {
    Fail(ErrorCode::kDomain, std::string(what) + " must be finite");
  }
}

}  // namespace prefagg
