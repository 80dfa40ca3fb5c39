#ifndef LCA_MATRIX_CORE_HPP
#define LCA_MATRIX_CORE_HPP

#include <Eigen/Dense>

#include "lca/errors.hpp"

/**
 * @file matrix_core.hpp
 *
 * Dense symmetric-matrix kernels shared by every other module. All functions
 * are pure; they read only the lower triangle of symmetric inputs and never
 * form raw determinants.
 */
namespace lca::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Eigenvalues in ascending order and matching orthonormal eigenvectors
/// stored as columns.
struct EigenPairs {
  Vector values;
  Matrix vectors;
};

/// Throws DataError unless `m` is square with finite entries.
void require_symmetric_input(const Eigen::Ref<const Matrix>& m, const char* who);

/**
 * Symmetric eigendecomposition.
 *
 * Eigenvalues are sorted ascending. Each eigenvector is normalized so that its
 * largest-magnitude component is nonnegative (ties go to the lowest index),
 * which makes serialized models reproducible.
 */
EigenPairs sym_eig(const Eigen::Ref<const Matrix>& m);

/// Default eigenvalue floor used by inv_sqrt: 1e-12 * trace(m) / dim, with a
/// tiny absolute fallback for a zero trace.
double default_floor(const Eigen::Ref<const Matrix>& m);

/**
 * Inverse square root V diag(max(e, floor)^-1/2) V^T of a symmetric PSD
 * matrix. Throws NumericalError ("not PSD") when an eigenvalue is below
 * -10 * floor.
 */
Matrix inv_sqrt(const Eigen::Ref<const Matrix>& m, double floor);
Matrix inv_sqrt(const Eigen::Ref<const Matrix>& m);

/// Symmetric square root of a PSD matrix (negative round-off clipped to 0).
Matrix sqrt_psd(const Eigen::Ref<const Matrix>& m);

/// Lower Cholesky factor L with L L^T = m. Throws NotPositiveDefinite with
/// the failing pivot index.
Matrix chol_lower(const Eigen::Ref<const Matrix>& m);

/// Sum of log eigenvalues. Throws NumericalError ("singular") when an
/// eigenvalue is <= 0.
double log_det(const Eigen::Ref<const Matrix>& m);

/// log|det b| for a general square matrix via pivoted LU.
double log_abs_det(const Eigen::Ref<const Matrix>& b);

/// Mean-centred covariance with 1/n normalization.
Matrix covariance(const Eigen::Ref<const Matrix>& x);

/// (m + m^T) / 2.
Matrix symmetrized(const Eigen::Ref<const Matrix>& m);

}  // namespace lca::linalg

#endif  // LCA_MATRIX_CORE_HPP
