#include "prefagg/link.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "prefagg/common.h"

namespace prefagg {
namespace {

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

struct LinkFunction::Table {
  boost::math::interpolators::cardinal_cubic_b_spline<double> spline;
  double x_min;
  double x_max;
  double lo_value;
  double hi_value;
};

LinkFunction LinkFunction::Sigmoid() { return LinkFunction(Kind::kSigmoid, nullptr); }

LinkFunction LinkFunction::Tabulated(std::vector<double> phi_values,
                                     double x_min, double step) {
  if (phi_values.size() < 5) {
    Fail(ErrorCode::kValidation, "tabulated link needs at least 5 points");
  }
  if (!(step > 0) || !std::isfinite(x_min)) {
    Fail(ErrorCode::kValidation, "tabulated link grid must have positive step");
  }
  const double x_max = x_min + step * static_cast<double>(phi_values.size() - 1);
  if (std::abs(x_min + x_max) > 1e-9 * std::max(1.0, x_max)) {
    Fail(ErrorCode::kValidation, "tabulated link grid must be symmetric about 0");
  }
  for (std::size_t i = 0; i < phi_values.size(); ++i) {
    const double v = phi_values[i];
    if (!(v > 0.0 && v < 1.0)) {
      Fail(ErrorCode::kValidation, "tabulated link value at index " +
                                       std::to_string(i) + " is outside (0,1)");
    }
    if (i > 0 && v < phi_values[i - 1]) {
      Fail(ErrorCode::kValidation, "tabulated link is not monotone at index " +
                                       std::to_string(i));
    }
  }
  const double lo = phi_values.front();
  const double hi = phi_values.back();
  auto table = std::make_shared<Table>(Table{
      boost::math::interpolators::cardinal_cubic_b_spline<double>(
          phi_values.begin(), phi_values.end(), x_min, step),
      x_min, x_max, lo, hi});
  LinkFunction link(Kind::kTabulated, std::move(table));
  const std::string problem = link.CheckInvariants(x_max, 2001, 1e-8);
  if (!problem.empty()) Fail(ErrorCode::kValidation, problem);
  return link;
}

LinkFunction LinkFunction::Probit(double half_width, int points) {
  std::vector<double> values(points);
  const double step = 2.0 * half_width / (points - 1);
  for (int i = 0; i < points; ++i) {
    const double x = -half_width + step * i;
    values[i] = 0.5 * std::erfc(-x / std::sqrt(2.0));
  }
  // Keep the tails strictly inside (0,1).
  for (double& v : values) v = std::clamp(v, 1e-300, 1.0 - 1e-16);
  return Tabulated(std::move(values), -half_width, step);
}

std::string LinkFunction::name() const {
  return kind_ == Kind::kSigmoid ? "sigmoid" : "tabulated";
}

double LinkFunction::Value(double x) const {
  if (kind_ == Kind::kSigmoid) return prefagg::Sigmoid(x);
  if (x <= table_->x_min) return table_->lo_value;
  if (x >= table_->x_max) return table_->hi_value;
  return table_->spline(x);
}

double LinkFunction::Derivative(double x) const {
  if (kind_ == Kind::kSigmoid) {
    const double s = prefagg::Sigmoid(x);
    return s * (1.0 - s);
  }
  if (x <= table_->x_min || x >= table_->x_max) return 0.0;
  return table_->spline.prime(x);
}

double LinkFunction::SecondDerivative(double x) const {
  if (kind_ == Kind::kSigmoid) {
    const double s = prefagg::Sigmoid(x);
    return s * (1.0 - s) * (1.0 - 2.0 * s);
  }
  if (x <= table_->x_min || x >= table_->x_max) return 0.0;
  return table_->spline.double_prime(x);
}

double LinkFunction::LogValue(double x) const {
  if (kind_ == Kind::kSigmoid) {
    // log sigma(x) = -log(1 + exp(-x))
    if (x >= 0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
  }
  return std::log(Value(x));
}

double LinkFunction::Score(double x) const {
  if (kind_ == Kind::kSigmoid) return prefagg::Sigmoid(-x);
  return Derivative(x) / Value(x);
}

double LinkFunction::ScoreDerivative(double x) const {
  if (kind_ == Kind::kSigmoid) {
    const double s = prefagg::Sigmoid(x);
    return -s * (1.0 - s);
  }
  const double v = Value(x);
  const double d = Derivative(x);
  return (SecondDerivative(x) * v - d * d) / (v * v);
}

std::string LinkFunction::CheckInvariants(double half_width, int points,
                                          double tolerance) const {
  std::ostringstream out;
  if (std::abs(Value(0.0) - 0.5) > tolerance) {
    out << "link violates Phi(0) = 0.5 (got " << Value(0.0) << ")";
    return out.str();
  }
  double previous = -1.0;
  for (int i = 0; i < points; ++i) {
    const double x = -half_width + 2.0 * half_width * i / (points - 1);
    const double v = Value(x);
    if (std::abs(v + Value(-x) - 1.0) > tolerance) {
      out << "link violates Phi(x) + Phi(-x) = 1 at x = " << x;
      return out.str();
    }
    if (v < previous - tolerance) {
      out << "link is not monotone increasing near x = " << x;
      return out.str();
    }
    previous = v;
  }
  return {};
}

double LinkEval(const LinkFunction& link, double x) {
  RequireFinite(x, "link argument");
  return link.Value(x);
}

}  // namespace prefagg
