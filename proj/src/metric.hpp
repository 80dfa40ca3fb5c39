#ifndef LCA_SRC_METRIC_HPP
#define LCA_SRC_METRIC_HPP

#include <Eigen/Dense>

namespace lca::detail {

/// Spectral view of an SPD covariance: F = S^-1/2, log det S, trace S^-1.
struct Metric {
  Eigen::MatrixXd factor;
  double log_det = 0.0;
  double trace_inverse = 0.0;
};

/// Throws NumericalError ("degenerate metric") unless sigma is SPD.
Metric metric_from_sigma(const Eigen::MatrixXd& sigma);

}  // namespace lca::detail

#endif  // LCA_SRC_METRIC_HPP
