#include "pairwise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "lca/errors.hpp"
#include "lca/matrix_core.hpp"
#include "lca/parallel.hpp"

namespace lca::detail {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Matrix centred(const Matrix& m) {
  if (m.rows() == 0) return m;
  return m.rowwise() - m.colwise().mean();
}

// Squared distances between the rows [begin, begin + rows) of y and all rows
// of other, with y and other already centred consistently.
Matrix block_sq(const Matrix& y, Eigen::Index begin, Eigen::Index rows, const Matrix& other,
                const Vector& other_norms) {
  const auto yb = y.middleRows(begin, rows);
  Matrix sq = -2.0 * (yb * other.transpose());
  sq.colwise() += yb.rowwise().squaredNorm();
  sq.rowwise() += other_norms.transpose();
  sq = sq.cwiseMax(0.0);
  if (!sq.allFinite()) throw DataError("pairwise: non-finite distances");
  return sq;
}

std::size_t block_count(Eigen::Index n) {
  return static_cast<std::size_t>((n + kBlockRows - 1) / kBlockRows);
}

struct BlockResult {
  double sum_lse = 0.0;
  double sum_weighted_sq = 0.0;
  Vector col_weight;
  Matrix partial;
};

}  // namespace

LooKernelPass loo_kernel_pass(const Matrix& y_in, const Matrix& x_in, bool want_scatter) {
  const Eigen::Index n = y_in.rows();
  if (n < 2) throw DataError("leave-one-out pass needs at least two points");
  const Matrix y = centred(y_in);
  const Matrix x = want_scatter ? centred(x_in) : Matrix();
  const Vector norms = y.rowwise().squaredNorm();
  const std::size_t blocks = block_count(n);
  std::vector<BlockResult> results(blocks);

  parallel_for(blocks, [&](std::size_t b) {
    const Eigen::Index begin = static_cast<Eigen::Index>(b) * kBlockRows;
    const Eigen::Index rows = std::min(kBlockRows, n - begin);
    Matrix logits = -0.5 * block_sq(y, begin, rows, y, norms);
    for (Eigen::Index r = 0; r < rows; ++r) logits(r, begin + r) = kNegInf;
    BlockResult& out = results[b];
    Matrix lam(rows, n);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double mx = logits.row(r).maxCoeff();
      const double s = (logits.row(r).array() - mx).exp().sum();
      const double lse = mx + std::log(s);
      out.sum_lse += lse;
      lam.row(r) = (logits.row(r).array() - lse).exp();
      lam(r, begin + r) = 0.0;
      logits(r, begin + r) = 0.0;
    }
    out.sum_weighted_sq = -2.0 * (lam.array() * logits.array()).sum();
    if (want_scatter) {
      const auto xb = x.middleRows(begin, rows);
      out.col_weight = lam.colwise().sum().transpose();
      const Matrix cross = xb.transpose() * (lam * x);
      out.partial = xb.transpose() * xb - cross - cross.transpose();
    }
  });

  LooKernelPass pass;
  Vector col_weight;
  if (want_scatter) {
    pass.scatter = Matrix::Zero(x.cols(), x.cols());
    col_weight = Vector::Zero(n);
  }
  for (const BlockResult& r : results) {
    pass.sum_lse += r.sum_lse;
    pass.sum_weighted_sq += r.sum_weighted_sq;
    if (want_scatter) {
      pass.scatter += r.partial;
      col_weight += r.col_weight;
    }
  }
  if (want_scatter) {
    pass.scatter += x.transpose() * col_weight.asDiagonal() * x;
    pass.scatter = linalg::symmetrized(pass.scatter);
  }
  return pass;
}

Vector log_mean_kernel(const Matrix& query_in, const Matrix& support_in) {
  const Eigen::Index m = support_in.rows();
  if (m == 0) throw DataError("log_mean_kernel: empty support");
  if (query_in.cols() != support_in.cols()) throw DataError("log_mean_kernel: dimension mismatch");
  const Eigen::RowVectorXd shift = support_in.colwise().mean();
  const Matrix support = support_in.rowwise() - shift;
  const Matrix query = query_in.rowwise() - shift;
  const Vector norms = support.rowwise().squaredNorm();
  const Eigen::Index nq = query.rows();
  Vector out(nq);
  const double log_m = std::log(static_cast<double>(m));
  parallel_for(block_count(nq), [&](std::size_t b) {
    const Eigen::Index begin = static_cast<Eigen::Index>(b) * kBlockRows;
    const Eigen::Index rows = std::min(kBlockRows, nq - begin);
    const Matrix logits = -0.5 * block_sq(query, begin, rows, support, norms);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double mx = logits.row(r).maxCoeff();
      out(begin + r) = mx + std::log((logits.row(r).array() - mx).exp().sum()) - log_m;
    }
  });
  return out;
}

Matrix squared_distances(const Matrix& y_in) {
  const Matrix y = centred(y_in);
  const Vector norms = y.rowwise().squaredNorm();
  Matrix sq = block_sq(y, 0, y.rows(), y, norms);
  sq.diagonal().setZero();
  return linalg::symmetrized(sq);
}

Matrix loo_responsibilities(const Matrix& y) {
  const Eigen::Index n = y.rows();
  if (n < 2) throw DataError("responsibilities need at least two points");
  Matrix logits = -0.5 * squared_distances(y);
  Matrix lam(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    logits(i, i) = kNegInf;
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    lam.row(i) = (logits.row(i).array() - lse).exp();
    lam(i, i) = 0.0;
  }
  return lam;
}

Matrix weighted_scatter(const Matrix& x_in, const Matrix& lam) {
  const Matrix x = centred(x_in);
  const Vector row_weight = lam.rowwise().sum();
  const Vector col_weight = lam.colwise().sum().transpose();
  const Matrix cross = x.transpose() * lam * x;
  const Matrix s = x.transpose() * (row_weight + col_weight).asDiagonal() * x - cross -
                   cross.transpose();
  return linalg::symmetrized(s);
}

}  // namespace lca::detail
