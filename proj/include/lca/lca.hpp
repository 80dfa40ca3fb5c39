#ifndef LCA_LCA_HPP
#define LCA_LCA_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "lca/errors.hpp"

/**
 * @file lca.hpp
 *
 * Local component analysis: learns the full covariance of a Gaussian Parzen
 * window estimator by EM on the leave-one-out log-likelihood
 *
 *   L(S) = -sum_i log[ 1/(n-1) sum_{j != i} N(x_i; x_j, S) ].
 *
 * The E-step sets lam_ij proportional to N(x_i; x_j, S) over j != i and the
 * M-step sets S to the lam-weighted average of the local outer products
 * (x_i - x_j)(x_i - x_j)^T divided by n. Data are n x d, one row per point.
 */
namespace lca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Shape constraint applied after each M-step. The diagonal and isotropic
/// variants are the constrained optima of the same bound: diag(S*) and
/// (trace(S*)/d) I respectively.
enum class CovarianceStructure { full, diagonal, isotropic };

struct FitConfig {
  int max_iter = 200;
  double rel_tol = 1e-7;
  /// Ridge nu added to every covariance update. Unset means
  /// 1e-6 * trace(Cov(data)) / d.
  std::optional<double> reg_nu;
  /// Ridge on the global covariance of the Gauss-Parzen model; falls back to
  /// reg_nu when unset.
  std::optional<double> reg_nu_global;
  std::uint64_t seed = 0;
  CovarianceStructure structure = CovarianceStructure::full;
  /// Iterations of each probe run in the reduced-dimension search.
  int probe_iters = 40;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
  bool operator==(const FitConfig&) const = default;
};

/// Responsibilities lam (n x n): zero diagonal, rows summing to one.
struct Responsibilities {
  Matrix lam;
};

struct MetricModel {
  Matrix sigma;
  /// F with F^T F = sigma^-1. F is the symmetric inverse square root, so the
  /// transformed point is F x.
  Matrix precision_factor;
  /// Leave-one-out negative log-likelihood at sigma.
  double loo_nll = 0.0;
  /// loo_nll at the initial covariance and after every M-step.
  std::vector<double> loo_nll_trace;
  /// loo_nll + (n nu / 2) trace(sigma^-1); EM never increases it.
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  double reg_nu = 0.0;
  FitConfig config;

  Eigen::Index dim() const { return sigma.rows(); }
  bool operator==(const MetricModel&) const = default;
};

/// Throws DataError unless data has at least min_points rows, at least one
/// column, and only finite entries.
void validate_dataset(const Matrix& data, Eigen::Index min_points = 2);

/// 1e-6 * trace(Cov(data)) / d.
double default_reg_nu(const Matrix& data);
double resolve_reg_nu(const FitConfig& cfg, const Matrix& data);

/// Leave-one-out negative log-likelihood with fully normalized kernels.
/// Throws NumericalError ("degenerate metric") when sigma is singular.
double loo_nll(const Matrix& data, const Matrix& sigma);

/// loo_nll + (n nu / 2) trace(sigma^-1), the objective EM descends when a
/// ridge nu is added to the M-step.
double regularized_objective(const Matrix& data, const Matrix& sigma, double nu);

Responsibilities e_step(const Matrix& data, const Matrix& sigma);

/// Sigma* = (1/n) sum_ij lam_ij (x_i - x_j)(x_i - x_j)^T + nu I.
Matrix m_step(const Matrix& data, const Responsibilities& lam, double nu);

/// Restricts an M-step covariance to the given structure.
Matrix apply_structure(const Matrix& sigma, CovarianceStructure structure);

/**
 * Jensen upper bound on loo_nll for arbitrary row-stochastic lam:
 *   n log(n-1) - sum_ij lam_ij log N(x_i; x_j, S) + sum_ij lam_ij log lam_ij,
 * with 0 log 0 = 0. Equal to loo_nll when lam = e_step(data, S).
 */
double jensen_bound(const Matrix& data, const Responsibilities& lam, const Matrix& sigma);

/// EM from Cov(data) + nu I.
MetricModel fit(const Matrix& data, const FitConfig& cfg = {});
/// EM from an explicit initial covariance.
MetricModel fit(const Matrix& data, const FitConfig& cfg, const Matrix& initial_sigma);

/// Wraps a covariance in a model (precision factor and loo_nll filled in).
MetricModel make_metric_model(const Matrix& data, const Matrix& sigma);

/// Symmetric F = sigma^-1/2.
Matrix precision_factor(const Matrix& sigma);

/// Maps every row x to F x; Mahalanobis distances under sigma become
/// Euclidean distances.
Matrix transform(const Matrix& data, const MetricModel& model);

}  // namespace lca

#endif  // LCA_LCA_HPP
