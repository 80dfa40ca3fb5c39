#ifndef LCA_TEST_HELPERS_HPP
#define LCA_TEST_HELPERS_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Dense>

namespace testing {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> g;
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = g(rng);
  return m;
}

inline double uniform(double lo, double hi, Rng& rng) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// A A^T / d + shift I.
inline Matrix random_spd(Eigen::Index d, Rng& rng, double shift = 0.5) {
  const Matrix a = gaussian(d, d, rng);
  Matrix s = a * a.transpose() / static_cast<double>(d);
  s.diagonal().array() += shift;
  return 0.5 * (s + s.transpose());
}

/// Row-stochastic with zero diagonal, random positive entries.
inline Matrix random_responsibilities(Eigen::Index n, Rng& rng) {
  Matrix lam(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) lam(i, j) = i == j ? 0.0 : uniform(0.01, 1.0, rng);
    lam.row(i) /= lam.row(i).sum();
  }
  return lam;
}

/// log N(x; y, S) by explicit inverse and determinant, for oracles only.
inline double log_normal(const Vector& x, const Vector& y, const Matrix& s) {
  const Vector diff = x - y;
  const double quad = diff.dot(s.inverse() * diff);
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) +
                 std::log(s.determinant()) + quad);
}

/// Leave-one-out NLL by direct double summation.
inline double loo_nll_oracle(const Matrix& x, const Matrix& s) {
  const Eigen::Index n = x.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) acc += std::exp(log_normal(x.row(i).transpose(), x.row(j).transpose(), s));
    }
    total -= std::log(acc / static_cast<double>(n - 1));
  }
  return total;
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace testing

#endif
