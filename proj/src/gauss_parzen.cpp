#include "lca/gauss_parzen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "lca/matrix_core.hpp"
#include "pairwise.hpp"

namespace lca::gauss_parzen {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Split with M1^-1/2 and log det M1 precomputed; M1 stays fixed while fitting.
SplitResult split_with(const Matrix& m1_inv_sqrt, double m1_log_det, const Matrix& m2) {
  const Eigen::Index d = m2.rows();
  const Matrix w = linalg::symmetrized(m1_inv_sqrt * m2 * m1_inv_sqrt);
  const linalg::EigenPairs eig = linalg::sym_eig(w);
  if (d > 0 && !(eig.values(0) > 0.0)) {
    throw NumericalError("split_solve: unbounded objective (M2 is singular)");
  }
  Eigen::Index cut = 0;
  while (cut < d && eig.values(cut) < 1.0) ++cut;

  SplitResult out;
  out.eigvals = eig.values;
  out.eigvecs = eig.vectors;
  out.b_g = m1_inv_sqrt * eig.vectors.rightCols(d - cut);
  const Vector scale = eig.values.head(cut).array().rsqrt();
  out.b_l = m1_inv_sqrt * eig.vectors.leftCols(cut) * scale.asDiagonal();
  out.objective_value = static_cast<double>(d) + m1_log_det + eig.values.head(cut).array().log().sum();
  return out;
}

struct FixedGlobal {
  Matrix c_g;
  Matrix inv_sqrt;
  double log_det = 0.0;
};

FixedGlobal global_part(const Matrix& data, double nu_g) {
  FixedGlobal g;
  g.c_g = linalg::covariance(data);
  g.c_g.diagonal().array() += nu_g;
  try {
    g.log_det = linalg::log_det(g.c_g);
  } catch (const NumericalError&) {
    throw NumericalError("fit_gauss: global covariance is singular; increase the regularization");
  }
  g.inv_sqrt = linalg::inv_sqrt(g.c_g);
  return g;
}

double gaussian_quadratic(const Matrix& data, const GaussParzenModel& model) {
  if (model.d_gauss() == 0) return 0.0;
  const Matrix centred = data.rowwise() - model.mu.transpose();
  return (centred * model.b_g).squaredNorm();
}

GaussParzenModel run(const Matrix& data, const FitConfig& cfg, GaussParzenModel model) {
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  const double nd = static_cast<double>(n);
  const double nu_l = resolve_reg_nu(cfg, data);
  const double nu_g = cfg.reg_nu_global ? *cfg.reg_nu_global : nu_l;
  const FixedGlobal global = global_part(data, nu_g);
  const double constant = 2.0 * std::log(nd - 1.0) + static_cast<double>(d) * kLog2Pi;

  model.mu = data.colwise().mean().transpose();
  model.reg_nu = nu_l;
  model.reg_nu_global = nu_g;
  model.config = cfg;

  while (!model.converged && model.iterations < cfg.max_iter) {
    const auto pass = detail::loo_kernel_pass(data * model.b_l, data, true);
    Matrix c_l = pass.scatter / nd;
    c_l.diagonal().array() += nu_l;
    const SplitResult split = split_with(global.inv_sqrt, global.log_det, c_l);
    // sum lam log lam = -sum lam sq / 2 - sum lse at the E-step responsibilities.
    const double entropy = -0.5 * pass.sum_weighted_sq - pass.sum_lse;
    const double bound = split.objective_value + 2.0 * entropy / nd + constant;
    model.b_g = split.b_g;
    model.b_l = split.b_l;
    model.eigvals = split.eigvals;
    model.bound_trace.push_back(bound);
    ++model.iterations;
    const auto& tr = model.bound_trace;
    if (tr.size() >= 2) {
      const double prev = tr[tr.size() - 2];
      if (prev - tr.back() < cfg.rel_tol * std::abs(prev)) {
        model.converged = true;
        break;
      }
    }
  }
  model.loo_nll = gp_nll(data, model, true);
  return model;
}

}  // namespace

SplitResult split_solve(const Matrix& m1, const Matrix& m2) {
  linalg::require_symmetric_input(m1, "split_solve");
  linalg::require_symmetric_input(m2, "split_solve");
  if (m1.rows() != m2.rows()) throw DataError("split_solve: dimension mismatch");
  double log_det_m1 = 0.0;
  try {
    log_det_m1 = linalg::log_det(m1);
  } catch (const NumericalError&) {
    throw NumericalError("split_solve: unbounded objective (M1 is singular)");
  }
  return split_with(linalg::inv_sqrt(m1), log_det_m1, m2);
}

double split_objective(const Matrix& m1, const Matrix& m2, const Matrix& b_g, const Matrix& b_l) {
  Matrix basis(m1.rows(), b_g.cols() + b_l.cols());
  basis << b_g, b_l;
  const double quad = (b_g.transpose() * m1 * b_g).trace() + (b_l.transpose() * m2 * b_l).trace();
  return quad - 2.0 * linalg::log_abs_det(basis);
}

Matrix GaussParzenModel::basis() const {
  Matrix b(b_g.rows() > 0 ? b_g.rows() : b_l.rows(), b_g.cols() + b_l.cols());
  b << b_g, b_l;
  return b;
}

void validate_model(const GaussParzenModel& model) {
  const Eigen::Index d = model.mu.size();
  if (d == 0) throw DataError("Gauss-Parzen model has zero dimension");
  if (model.b_g.rows() != d || model.b_l.rows() != d ||
      model.b_g.cols() + model.b_l.cols() != d) {
    throw DataError("Gauss-Parzen model has inconsistent shapes");
  }
  const double ld = linalg::log_abs_det(model.basis());
  if (!std::isfinite(ld)) throw NumericalError("Gauss-Parzen basis is singular");
}

double gp_nll(const Matrix& data, const GaussParzenModel& model, bool leave_one_out) {
  validate_model(model);
  validate_dataset(data, 1);
  if (data.cols() != model.dim()) throw DataError("gp_nll: dimension mismatch");
  const Eigen::Index n = data.rows();
  const double nd = static_cast<double>(n);
  const double log_det_b = linalg::log_abs_det(model.basis());
  double nll = nd * (0.5 * static_cast<double>(model.dim()) * kLog2Pi - log_det_b) +
               0.5 * gaussian_quadratic(data, model);
  if (model.d_parzen() > 0) {
    const Matrix y = data * model.b_l;
    if (leave_one_out) {
      validate_dataset(data, 2);
      const auto pass = detail::loo_kernel_pass(y, y, false);
      nll += -pass.sum_lse + nd * std::log(nd - 1.0);
    } else {
      nll -= detail::log_mean_kernel(y, y).sum();
    }
  }
  return nll;
}

Vector log_density(const Matrix& query, const Matrix& support, const GaussParzenModel& model) {
  validate_model(model);
  if (query.cols() != model.dim() || support.cols() != model.dim()) {
    throw DataError("log_density: dimension mismatch");
  }
  const double base =
      linalg::log_abs_det(model.basis()) - 0.5 * static_cast<double>(model.dim()) * kLog2Pi;
  Vector out = Vector::Constant(query.rows(), base);
  if (model.d_gauss() > 0) {
    const Matrix centred = query.rowwise() - model.mu.transpose();
    out -= 0.5 * (centred * model.b_g).rowwise().squaredNorm();
  }
  if (model.d_parzen() > 0) {
    out += detail::log_mean_kernel(query * model.b_l, support * model.b_l);
  }
  return out;
}

Matrix local_covariance(const Matrix& data, const Matrix& b_l, double nu) {
  validate_dataset(data);
  if (b_l.rows() != data.cols()) throw DataError("local_covariance: dimension mismatch");
  const auto pass = detail::loo_kernel_pass(data * b_l, data, true);
  Matrix c_l = pass.scatter / static_cast<double>(data.rows());
  c_l.diagonal().array() += nu;
  return c_l;
}

GaussParzenModel fit_gauss(const Matrix& data, const FitConfig& cfg) {
  cfg.validate();
  validate_dataset(data);
  const double nu_l = resolve_reg_nu(cfg, data);
  const double nu_g = cfg.reg_nu_global ? *cfg.reg_nu_global : nu_l;
  const FixedGlobal global = global_part(data, nu_g);
  GaussParzenModel start;
  start.b_g = Matrix::Zero(data.cols(), 0);
  start.b_l = linalg::chol_lower(linalg::symmetrized(global.inv_sqrt * global.inv_sqrt));
  return run(data, cfg, std::move(start));
}

GaussParzenModel fit_gauss(const Matrix& data, const FitConfig& cfg, const GaussParzenModel& start) {
  cfg.validate();
  validate_dataset(data);
  if (start.b_l.rows() != data.cols()) throw DataError("fit_gauss: start model dimension mismatch");
  return run(data, cfg, start);
}

GaussParzenModel fit_gauss_red(const Matrix& data, const FitConfig& cfg) {
  cfg.validate();
  validate_dataset(data);
  const Eigen::Index d = data.cols();
  FitConfig probe_cfg = cfg;
  probe_cfg.max_iter = cfg.probe_iters;

  const GaussParzenModel incumbent = fit_gauss(data, probe_cfg);
  const Eigen::Index d0 = incumbent.d_gauss();

  struct Scored {
    GaussParzenModel model;
    double score;
  };
  std::map<Eigen::Index, Scored> cache;
  cache.emplace(d0, Scored{incumbent, incumbent.loo_nll});

  // Moving k Parzen columns to the Gaussian side drops the columns whose
  // eigenvalues are closest to one, i.e. the trailing columns of b_l.
  auto evaluate = [&](Eigen::Index target) -> double {
    auto it = cache.find(target);
    if (it != cache.end()) return it->second.score;
    GaussParzenModel start;
    const Eigen::Index keep = d - target;
    start.b_l = incumbent.b_l.leftCols(keep);
    start.b_g = Matrix::Zero(d, 0);
    start.mu = incumbent.mu;
    double score = std::numeric_limits<double>::infinity();
    GaussParzenModel candidate;
    try {
      candidate = fit_gauss(data, probe_cfg, start);
      score = candidate.loo_nll;
    } catch (const NumericalError&) {
      candidate = start;
    }
    cache.emplace(target, Scored{std::move(candidate), score});
    return score;
  };

  Eigen::Index lo = d0;
  Eigen::Index hi = d;
  while (lo < hi) {
    const Eigen::Index mid = lo + (hi - lo) / 2;
    if (evaluate(mid + 1) < evaluate(mid)) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }

  const Scored* best = &cache.at(d0);
  for (const auto& [target, scored] : cache) {
    if (scored.score < best->score) best = &scored;
  }

  GaussParzenModel result = fit_gauss(data, cfg, incumbent);
  if (best != &cache.at(d0)) {
    GaussParzenModel restart = best->model;
    restart.bound_trace.clear();
    restart.iterations = 0;
    restart.converged = false;
    GaussParzenModel alternative = fit_gauss(data, cfg, restart);
    if (alternative.loo_nll < result.loo_nll) result = std::move(alternative);
  }
  result.config = cfg;
  return result;
}

Matrix transform(const Matrix& data, const GaussParzenModel& model, bool parzen_only) {
  if (data.cols() != model.dim()) {
    throw DataError("transform: data has " + std::to_string(data.cols()) +
                    " columns but the model expects " + std::to_string(model.dim()));
  }
  if (parzen_only) {
    if (model.d_parzen() == 0) throw DataError("no Parzen dimensions");
    return data * model.b_l;
  }
  return data * model.basis();
}

}  // namespace lca::gauss_parzen
