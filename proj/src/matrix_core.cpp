#include "lca/matrix_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lca::linalg {

void require_symmetric_input(const Eigen::Ref<const Matrix>& m, const char* who) {
  if (m.rows() != m.cols()) {
    throw DataError(std::string(who) + ": matrix is not square");
  }
  if (!m.allFinite()) {
    throw DataError(std::string(who) + ": matrix has non-finite entries");
  }
}

EigenPairs sym_eig(const Eigen::Ref<const Matrix>& m) {
  require_symmetric_input(m, "sym_eig");
  EigenPairs out;
  if (m.rows() == 0) {
    out.values.resize(0);
    out.vectors.resize(0, 0);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("sym_eig: eigensolver did not converge");
  }
  out.values = solver.eigenvalues();
  out.vectors = solver.eigenvectors();
  for (Eigen::Index c = 0; c < out.vectors.cols(); ++c) {
    Eigen::Index arg = 0;
    out.vectors.col(c).cwiseAbs().maxCoeff(&arg);
    if (out.vectors(arg, c) < 0.0) out.vectors.col(c) *= -1.0;
  }
  return out;
}

double default_floor(const Eigen::Ref<const Matrix>& m) {
  if (m.rows() == 0) return 1e-300;
  const double scale = std::abs(m.trace()) / static_cast<double>(m.rows());
  return scale > 0.0 ? 1e-12 * scale : 1e-300;
}

Matrix inv_sqrt(const Eigen::Ref<const Matrix>& m, double floor) {
  if (!(floor > 0.0)) throw std::invalid_argument("inv_sqrt: floor must be positive");
  const EigenPairs eig = sym_eig(m);
  if (eig.values.size() > 0 && eig.values(0) < -10.0 * floor) {
    throw NumericalError("inv_sqrt: matrix is not PSD");
  }
  const Vector scale =
      eig.values.unaryExpr([floor](double v) { return 1.0 / std::sqrt(std::max(v, floor)); });
  return eig.vectors * scale.asDiagonal() * eig.vectors.transpose();
}

Matrix inv_sqrt(const Eigen::Ref<const Matrix>& m) { return inv_sqrt(m, default_floor(m)); }

Matrix sqrt_psd(const Eigen::Ref<const Matrix>& m) {
  const EigenPairs eig = sym_eig(m);
  const Vector scale = eig.values.unaryExpr([](double v) { return std::sqrt(std::max(v, 0.0)); });
  return eig.vectors * scale.asDiagonal() * eig.vectors.transpose();
}

Matrix chol_lower(const Eigen::Ref<const Matrix>& m) {
  require_symmetric_input(m, "chol_lower");
  const Eigen::Index n = m.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = m(j, j) - l.row(j).head(j).squaredNorm();
    if (!(pivot > 0.0)) {
      throw NotPositiveDefinite(
          "chol_lower: matrix is not positive definite (pivot " + std::to_string(j) + ")", j);
    }
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (m(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
    }
  }
  return l;
}

double log_det(const Eigen::Ref<const Matrix>& m) {
  const EigenPairs eig = sym_eig(m);
  if (eig.values.size() > 0 && !(eig.values(0) > 0.0)) {
    throw NumericalError("log_det: matrix is singular");
  }
  return eig.values.array().log().sum();
}

double log_abs_det(const Eigen::Ref<const Matrix>& b) {
  if (b.rows() != b.cols()) throw DataError("log_abs_det: matrix is not square");
  if (b.rows() == 0) return 0.0;
  Eigen::FullPivLU<Matrix> lu(b);
  const Vector diag = lu.matrixLU().diagonal();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    const double a = std::abs(diag(i));
    if (!(a > 0.0) || !std::isfinite(a)) throw NumericalError("log_abs_det: matrix is singular");
    acc += std::log(a);
  }
  return acc;
}

Matrix covariance(const Eigen::Ref<const Matrix>& x) {
  if (x.rows() == 0) throw DataError("covariance: empty dataset");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centred = x.rowwise() - mean;
  return symmetrized(centred.transpose() * centred / static_cast<double>(x.rows()));
}

Matrix symmetrized(const Eigen::Ref<const Matrix>& m) { return 0.5 * (m + m.transpose()); }

}  // namespace lca::linalg
