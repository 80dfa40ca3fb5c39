#ifndef LCA_SRC_PAIRWISE_HPP
#define LCA_SRC_PAIRWISE_HPP

#include <Eigen/Dense>

// Blockwise pairwise Gaussian-kernel machinery shared by the batch fitters.
// Every routine works in log space and centres its inputs first; squared
// distances come from Gram products and are clamped at zero.
namespace lca::detail {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr Eigen::Index kBlockRows = 128;

struct LooKernelPass {
  /// Sum over i of log sum_{j != i} exp(-sq_ij / 2).
  double sum_lse = 0.0;
  /// Sum over i, j of lam_ij * sq_ij at the E-step responsibilities.
  double sum_weighted_sq = 0.0;
  /// Sum over i, j of lam_ij (x_i - x_j)(x_i - x_j)^T; empty unless requested.
  Matrix scatter;
};

/// One leave-one-out pass. Distances are Euclidean in `y` (n x p); the
/// scatter, when requested, is accumulated from `x` (n x d).
LooKernelPass loo_kernel_pass(const Matrix& y, const Matrix& x, bool want_scatter);

/// log[(1/m) sum_j exp(-|q_i - s_j|^2 / 2)] for every query row.
Vector log_mean_kernel(const Matrix& query, const Matrix& support);

/// Full n x n matrix of squared Euclidean distances between rows of y.
Matrix squared_distances(const Matrix& y);

/// Leave-one-out responsibilities for distances in y; zero diagonal.
Matrix loo_responsibilities(const Matrix& y);

/// sum_ij lam_ij (x_i - x_j)(x_i - x_j)^T for an explicit weight matrix.
Matrix weighted_scatter(const Matrix& x, const Matrix& lam);

}  // namespace lca::detail

#endif  // LCA_SRC_PAIRWISE_HPP
