#include "lca/lca.hpp"

#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>

#include "lca/matrix_core.hpp"
#include "metric.hpp"
#include "pairwise.hpp"

namespace lca {

namespace detail {

Metric metric_from_sigma(const Eigen::MatrixXd& sigma) {
  const linalg::EigenPairs eig = linalg::sym_eig(sigma);
  if (eig.values.size() == 0 || !(eig.values(0) > 0.0)) {
    throw NumericalError("degenerate metric: covariance is not positive definite");
  }
  Metric m;
  const Vector inv_root = eig.values.array().rsqrt();
  m.factor = linalg::symmetrized(eig.vectors * inv_root.asDiagonal() * eig.vectors.transpose());
  m.log_det = eig.values.array().log().sum();
  m.trace_inverse = eig.values.array().inverse().sum();
  return m;
}

}  // namespace detail

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void require_sigma(const Matrix& data, const Matrix& sigma) {
  if (sigma.rows() != data.cols() || sigma.cols() != data.cols()) {
    throw DataError("covariance dimension does not match the data");
  }
}

// loo_nll from a pass at the transformed data: each point contributes
// log(n-1) - lse_i + (d log 2pi + log det S) / 2.
double loo_from_pass(double sum_lse, Eigen::Index n, Eigen::Index d, double log_det) {
  const double nd = static_cast<double>(n);
  return -sum_lse + nd * std::log(nd - 1.0) + 0.5 * nd * (static_cast<double>(d) * kLog2Pi + log_det);
}

}  // namespace

void FitConfig::validate() const {
  if (max_iter < 1) throw std::invalid_argument("max_iter must be positive");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("rel_tol must be positive");
  if (reg_nu && !(*reg_nu >= 0.0)) throw std::invalid_argument("reg_nu must be nonnegative");
  if (reg_nu_global && !(*reg_nu_global >= 0.0)) {
    throw std::invalid_argument("reg_nu_global must be nonnegative");
  }
  if (probe_iters < 1) throw std::invalid_argument("probe_iters must be positive");
}

void validate_dataset(const Matrix& data, Eigen::Index min_points) {
  if (data.rows() < min_points) {
    throw DataError("dataset needs at least " + std::to_string(min_points) + " points, got " +
                    std::to_string(data.rows()));
  }
  if (data.cols() < 1) throw DataError("dataset has no columns");
  if (!data.allFinite()) throw DataError("dataset contains non-finite values");
}

double default_reg_nu(const Matrix& data) {
  return 1e-6 * linalg::covariance(data).trace() / static_cast<double>(data.cols());
}

double resolve_reg_nu(const FitConfig& cfg, const Matrix& data) {
  return cfg.reg_nu ? *cfg.reg_nu : default_reg_nu(data);
}

double loo_nll(const Matrix& data, const Matrix& sigma) {
  validate_dataset(data);
  require_sigma(data, sigma);
  const detail::Metric metric = detail::metric_from_sigma(sigma);
  const auto pass = detail::loo_kernel_pass(data * metric.factor, data, false);
  return loo_from_pass(pass.sum_lse, data.rows(), data.cols(), metric.log_det);
}

double regularized_objective(const Matrix& data, const Matrix& sigma, double nu) {
  const detail::Metric metric = detail::metric_from_sigma(sigma);
  return loo_nll(data, sigma) + 0.5 * static_cast<double>(data.rows()) * nu * metric.trace_inverse;
}

Responsibilities e_step(const Matrix& data, const Matrix& sigma) {
  validate_dataset(data);
  require_sigma(data, sigma);
  const detail::Metric metric = detail::metric_from_sigma(sigma);
  return {detail::loo_responsibilities(data * metric.factor)};
}

Matrix m_step(const Matrix& data, const Responsibilities& lam, double nu) {
  validate_dataset(data);
  const Eigen::Index n = data.rows();
  if (lam.lam.rows() != n || lam.lam.cols() != n) {
    throw DataError("responsibilities do not match the dataset size");
  }
  if (!(nu >= 0.0)) throw std::invalid_argument("reg_nu must be nonnegative");
  Matrix sigma = detail::weighted_scatter(data, lam.lam) / static_cast<double>(n);
  sigma.diagonal().array() += nu;
  return sigma;
}

Matrix apply_structure(const Matrix& sigma, CovarianceStructure structure) {
  switch (structure) {
    case CovarianceStructure::full:
      return sigma;
    case CovarianceStructure::diagonal:
      return Matrix(sigma.diagonal().asDiagonal());
    case CovarianceStructure::isotropic: {
      const double scale = sigma.trace() / static_cast<double>(sigma.rows());
      return scale * Matrix::Identity(sigma.rows(), sigma.cols());
    }
  }
  return sigma;
}

double jensen_bound(const Matrix& data, const Responsibilities& lam, const Matrix& sigma) {
  validate_dataset(data);
  require_sigma(data, sigma);
  const Eigen::Index n = data.rows();
  if (lam.lam.rows() != n || lam.lam.cols() != n) {
    throw DataError("responsibilities do not match the dataset size");
  }
  const detail::Metric metric = detail::metric_from_sigma(sigma);
  const Matrix sq = detail::squared_distances(data * metric.factor);
  const double log_norm = -0.5 * (static_cast<double>(data.cols()) * kLog2Pi + metric.log_det);
  double value = static_cast<double>(n) * std::log(static_cast<double>(n) - 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double w = lam.lam(i, j);
      if (i == j || w <= 0.0) continue;
      value -= w * (log_norm - 0.5 * sq(i, j));
      value += w * std::log(w);
    }
  }
  return value;
}

Matrix precision_factor(const Matrix& sigma) { return detail::metric_from_sigma(sigma).factor; }

MetricModel make_metric_model(const Matrix& data, const Matrix& sigma) {
  MetricModel model;
  model.sigma = linalg::symmetrized(sigma);
  model.precision_factor = precision_factor(model.sigma);
  model.loo_nll = loo_nll(data, model.sigma);
  model.loo_nll_trace = {model.loo_nll};
  model.objective_trace = {model.loo_nll};
  return model;
}

MetricModel fit(const Matrix& data, const FitConfig& cfg) {
  validate_dataset(data);
  const double nu = resolve_reg_nu(cfg, data);
  Matrix sigma0 = linalg::covariance(data);
  sigma0.diagonal().array() += nu;
  return fit(data, cfg, sigma0);
}

MetricModel fit(const Matrix& data, const FitConfig& cfg, const Matrix& initial_sigma) {
  cfg.validate();
  validate_dataset(data);
  require_sigma(data, initial_sigma);
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  const double nd = static_cast<double>(n);
  const double nu = resolve_reg_nu(cfg, data);

  MetricModel model;
  model.config = cfg;
  model.reg_nu = nu;
  Matrix sigma = linalg::symmetrized(initial_sigma);

  auto record = [&](const detail::Metric& metric, double sum_lse) {
    const double nll = loo_from_pass(sum_lse, n, d, metric.log_det);
    model.loo_nll_trace.push_back(nll);
    model.objective_trace.push_back(nll + 0.5 * nd * nu * metric.trace_inverse);
    return nll;
  };
  // A constrained first step leaves the unconstrained starting point, so the
  // descent guarantee (and the stopping rule) only covers later steps.
  const std::size_t first = cfg.structure == CovarianceStructure::full ? 2 : 3;
  auto check_monotone = [&]() {
    const auto& obj = model.objective_trace;
    const std::size_t k = obj.size();
    if (k >= first && obj[k - 1] > obj[k - 2] + 1e-8 * std::abs(obj[k - 2])) {
      std::clog << "lca: warning: EM objective increased at iteration " << (k - 1) << " ("
                << obj[k - 2] << " -> " << obj[k - 1] << ")\n";
    }
  };

  detail::Metric metric = detail::metric_from_sigma(sigma);
  for (int it = 0; it < cfg.max_iter; ++it) {
    const auto pass = detail::loo_kernel_pass(data * metric.factor, data, true);
    model.loo_nll = record(metric, pass.sum_lse);
    check_monotone();
    const auto& obj = model.objective_trace;
    if (obj.size() >= first) {
      const double prev = obj[obj.size() - 2];
      if (prev - obj.back() < cfg.rel_tol * std::abs(prev)) {
        model.converged = true;
        break;
      }
    }
    Matrix next = pass.scatter / nd;
    next.diagonal().array() += nu;
    sigma = linalg::symmetrized(apply_structure(next, cfg.structure));
    metric = detail::metric_from_sigma(sigma);
    model.iterations = it + 1;
  }
  if (!model.converged) {
    const auto pass = detail::loo_kernel_pass(data * metric.factor, data, false);
    model.loo_nll = record(metric, pass.sum_lse);
    check_monotone();
  }
  model.sigma = sigma;
  model.precision_factor = metric.factor;
  return model;
}

Matrix transform(const Matrix& data, const MetricModel& model) {
  if (data.cols() != model.precision_factor.rows()) {
    throw DataError("transform: data has " + std::to_string(data.cols()) +
                    " columns but the model expects " +
                    std::to_string(model.precision_factor.rows()));
  }
  return data * model.precision_factor.transpose();
}

}  // namespace lca
