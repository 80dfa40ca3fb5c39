#ifndef LCA_GAUSS_PARZEN_HPP
#define LCA_GAUSS_PARZEN_HPP

#include <vector>

#include "lca/lca.hpp"

/**
 * @file gauss_parzen.hpp
 *
 * Semi-parametric product model. An invertible basis B = (B_G, B_L) splits
 * every point into Gaussian coordinates B_G^T x, modelled as N(B_G^T mu, I),
 * and Parzen coordinates B_L^T x, modelled by a leave-one-out Parzen window
 * with identity kernel covariance. The density of x carries the Jacobian
 * |det B| so both limits (all-Gaussian, all-Parzen) are normalized densities.
 *
 * Fitting alternates responsibilities on the Parzen coordinates with the
 * closed-form minimizer of
 *
 *   tr(B_G^T M1 B_G) + tr(B_L^T M2 B_L) - log det(B_G B_G^T + B_L B_L^T),
 *
 * with M1 = Cov(X) + nu_G I held fixed and M2 the current local covariance.
 */
namespace lca::gauss_parzen {

struct SplitResult {
  Matrix b_g;
  Matrix b_l;
  /// Eigenvalues of M1^-1/2 M2 M1^-1/2, ascending. The first d_parzen belong
  /// to the Parzen side (values < 1).
  Vector eigvals;
  /// Matching eigenvectors U (columns).
  Matrix eigvecs;
  double objective_value = 0.0;
};

/// Closed-form minimizer. Eigenvalues equal to one go to the Gaussian side.
/// Throws NumericalError ("unbounded objective") unless m1 and m2 are SPD.
SplitResult split_solve(const Matrix& m1, const Matrix& m2);

/// The split objective evaluated directly at an arbitrary (b_g, b_l).
double split_objective(const Matrix& m1, const Matrix& m2, const Matrix& b_g, const Matrix& b_l);

struct GaussParzenModel {
  Matrix b_g;  ///< d x d_gauss
  Matrix b_l;  ///< d x d_parzen
  Vector mu;
  /// Last generalized eigenvalues (ascending); may be empty for hand-built models.
  Vector eigvals;
  /// Upper bound on -(2/n) sum_i log p(x_i) recorded after every M-step.
  std::vector<double> bound_trace;
  double loo_nll = 0.0;
  int iterations = 0;
  bool converged = false;
  double reg_nu = 0.0;
  double reg_nu_global = 0.0;
  FitConfig config;

  Eigen::Index dim() const { return mu.size(); }
  Eigen::Index d_gauss() const { return b_g.cols(); }
  Eigen::Index d_parzen() const { return b_l.cols(); }
  /// The d x d matrix (b_g, b_l).
  Matrix basis() const;
  bool operator==(const GaussParzenModel&) const = default;
};

/// Throws DataError on inconsistent shapes and NumericalError when the basis
/// is singular.
void validate_model(const GaussParzenModel& model);

/**
 * Negative log-likelihood of the product density summed over the rows of
 * data. With leave_one_out the Parzen factor of x_i excludes x_i itself and
 * divides by n - 1; otherwise it averages over all n points.
 */
double gp_nll(const Matrix& data, const GaussParzenModel& model, bool leave_one_out);

/// log p(q) for each query row with the Parzen factor supported on all rows
/// of `support` with weight 1/m.
Vector log_density(const Matrix& query, const Matrix& support, const GaussParzenModel& model);

/// C_L = (1/n) sum_ij lam_ij (x_i - x_j)(x_i - x_j)^T + nu I with lam the
/// leave-one-out responsibilities of the coordinates data * b_l.
Matrix local_covariance(const Matrix& data, const Matrix& b_l, double nu);

/// Algorithm starting with every dimension on the Parzen side,
/// B_L = chol_lower(C_G^-1).
GaussParzenModel fit_gauss(const Matrix& data, const FitConfig& cfg = {});

/// Continues from `start`: its b_l seeds the next E-step, and its bound trace
/// and iteration count carry over, so resuming a truncated run reproduces the
/// uninterrupted one. cfg.max_iter counts the iterations already done.
GaussParzenModel fit_gauss(const Matrix& data, const FitConfig& cfg, const GaussParzenModel& start);

/// Reduced-dimension search: probe run of cfg.probe_iters iterations, column
/// transfers from the Parzen to the Gaussian side scored by leave-one-out
/// gp_nll in a dichotomic search, then a run to convergence.
GaussParzenModel fit_gauss_red(const Matrix& data, const FitConfig& cfg = {});

/// Rows mapped to (B_G^T x, B_L^T x), or only B_L^T x when parzen_only.
Matrix transform(const Matrix& data, const GaussParzenModel& model, bool parzen_only);

}  // namespace lca::gauss_parzen

#endif  // LCA_GAUSS_PARZEN_HPP
