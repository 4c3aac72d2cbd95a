#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace prefagg {

// Preference link Phi: maps a reward gap r(tau0) - r(tau1) to the probability
// that tau0 is preferred. Phi is increasing with Phi(x) + Phi(-x) = 1.
class LinkFunction {
 public:
  enum class Kind { kSigmoid, kTabulated };

  static LinkFunction Sigmoid();

  // Cubic B-spline through Phi values sampled on the uniform grid
  // x_min, x_min + step, ...; the grid must be symmetric about 0. Outside the
  // grid Phi is held at its end values. Throws kValidation if the table fails
  // the symmetry, monotonicity or Phi(0) = 1/2 checks.
  static LinkFunction Tabulated(std::vector<double> phi_values, double x_min,
                                double step);

  // Standard normal CDF tabulated on [-half_width, half_width].
  static LinkFunction Probit(double half_width = 12.0, int points = 4801);

  Kind kind() const { return kind_; }
  std::string name() const;

  double Value(double x) const;
  double Derivative(double x) const;
  double SecondDerivative(double x) const;

  // log Phi(x), stable in both tails.
  double LogValue(double x) const;
  // d/dx log Phi(x) = Phi'(x) / Phi(x).
  double Score(double x) const;
  // d^2/dx^2 log Phi(x); non-positive for log-concave links.
  double ScoreDerivative(double x) const;

  // Probe-grid check of the invariants; returns an empty string when they
  // hold, otherwise a description of the first failure.
  std::string CheckInvariants(double half_width, int points,
                              double tolerance) const;

 private:
  struct Table;

  LinkFunction(Kind kind, std::shared_ptr<const Table> table)
      : kind_(kind), table_(std::move(table)) {}

  Kind kind_;
  std::shared_ptr<const Table> table_;
};

// Phi(x) with domain checking (non-finite x is a kDomain error).
double LinkEval(const LinkFunction& link, double x);

}  // namespace prefagg
