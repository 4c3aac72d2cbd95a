#pragma once

// Independent reference computations used as test oracles. None of these
// call into the library's numerical routines.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain softmax in long double.
inline Vec Softmax(const Vec& r) {
  long double z = 0;
  for (Eigen::Index i = 0; i < r.size(); ++i) z += std::exp(static_cast<long double>(r(i)));
  Vec out(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    out(i) = static_cast<double>(std::exp(static_cast<long double>(r(i))) / z);
  }
  return out;
}

// Direct evaluation of the pooling formula with long double sums.
inline Vec Pool(double alpha, const Mat& rows) {
  Vec mass(rows.cols());
  for (Eigen::Index a = 0; a < rows.cols(); ++a) {
    long double acc = 0;
    if (alpha == 0.0) {
      for (Eigen::Index i = 0; i < rows.rows(); ++i) acc += std::log(static_cast<long double>(rows(i, a)));
      mass(a) = static_cast<double>(std::exp(acc / rows.rows()));
    } else {
      for (Eigen::Index i = 0; i < rows.rows(); ++i) acc += std::pow(static_cast<long double>(rows(i, a)), alpha);
      mass(a) = static_cast<double>(std::pow(acc, 1.0L / alpha));
    }
  }
  return mass / mass.sum();
}

// Euclidean projection onto the probability simplex (sort-based).
inline Vec ProjectSimplex(const Vec& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumulative = 0, tau = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0) tau = t;
  }
  Vec out = (v.array() - tau).cwiseMax(0.0).matrix();
  return out / out.sum();
}

// Projected gradient descent with central-difference gradients over a
// slightly shrunk simplex (entries >= floor), with backtracking.
inline Vec MinimizeOnSimplex(const std::function<double(const Vec&)>& f, int k,
                             int iters = 4000, double floor = 1e-9) {
  Vec p = Vec::Constant(k, 1.0 / k);
  auto clamp = [&](Vec q) {
    q = ProjectSimplex(q);
    q = q.cwiseMax(floor);
    return Vec(q / q.sum());
  };
  double value = f(p);
  double step = 0.1;
  for (int it = 0; it < iters; ++it) {
    Vec g(k);
    for (int j = 0; j < k; ++j) {
      const double h = 1e-7;
      Vec up = p, dn = p;
      up(j) += h;
      dn(j) -= h;
      g(j) = (f(up) - f(dn)) / (2 * h);
    }
    bool moved = false;
    for (int bt = 0; bt < 40; ++bt) {
      const Vec cand = clamp(p - step * g);
      const double cv = f(cand);
      if (cv < value) {
        p = cand;
        value = cv;
        moved = true;
        step *= 1.5;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return p;
}

inline Vec RandomSimplex(std::mt19937_64& rng, int k) {
  std::exponential_distribution<double> e(1.0);
  Vec v(k);
  for (int j = 0; j < k; ++j) v(j) = e(rng);
  return v / v.sum();
}

inline Vec RandomNormal(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(n);
  for (int j = 0; j < n; ++j) v(j) = g(rng);
  return v;
}

// Orthonormal rows by modified Gram-Schmidt on Gaussian rows.
inline Mat RandomOrthonormal(std::mt19937_64& rng, int k, int d) {
  Mat m(k, d);
  for (int r = 0; r < k; ++r) {
    Vec v = RandomNormal(rng, d);
    for (int q = 0; q < r; ++q) v -= v.dot(m.row(q).transpose()) * m.row(q).transpose();
    m.row(r) = v.normalized().transpose();
  }
  return m;
}

// Median of a copy.
inline double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace oracle
