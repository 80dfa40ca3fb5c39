#include "lca/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lca/matrix_core.hpp"
#include "lca/parallel.hpp"
#include "metric.hpp"

namespace lca::stochastic {
namespace {

// Partial Fisher-Yates over a persistent permutation. Any starting order of
// the pool yields a uniform sample without replacement.
class IndexPool {
 public:
  explicit IndexPool(Eigen::Index n) : pool_(static_cast<std::size_t>(n)), pos_(pool_.size()) {
    for (std::size_t i = 0; i < pool_.size(); ++i) pool_[i] = pos_[i] = static_cast<Eigen::Index>(i);
  }

  // `count` distinct indices among the first `limit` pool slots.
  std::vector<Eigen::Index> draw(Eigen::Index limit, Eigen::Index count, Rng& rng) {
    std::vector<Eigen::Index> out(static_cast<std::size_t>(count));
    for (Eigen::Index t = 0; t < count; ++t) {
      std::uniform_int_distribution<Eigen::Index> pick(t, limit - 1);
      swap_slots(t, pick(rng));
      out[static_cast<std::size_t>(t)] = pool_[static_cast<std::size_t>(t)];
    }
    return out;
  }

  // Moves `index` to the last slot so draws over the first n - 1 slots skip it.
  void exclude(Eigen::Index index) {
    swap_slots(pos_[static_cast<std::size_t>(index)], static_cast<Eigen::Index>(pool_.size()) - 1);
  }

 private:
  void swap_slots(Eigen::Index a, Eigen::Index b) {
    auto& pa = pool_[static_cast<std::size_t>(a)];
    auto& pb = pool_[static_cast<std::size_t>(b)];
    std::swap(pa, pb);
    pos_[static_cast<std::size_t>(pa)] = a;
    pos_[static_cast<std::size_t>(pb)] = b;
  }

  std::vector<Eigen::Index> pool_;
  std::vector<Eigen::Index> pos_;
};

constexpr std::size_t kLocationBlock = 32;

// Scatter of the sampled pairs, divided by the number of locations. `x` is
// centred data, `proj` maps a row to the coordinates that define distances.
Matrix sampled_local_cov(const Matrix& x, std::span<const Eigen::Index> locations,
                         Eigen::Index neigh, const Matrix& proj, Rng& rng) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (locations.empty()) throw std::invalid_argument("minibatch_cov: no locations");
  if (neigh < 1) throw std::invalid_argument("minibatch_cov: neighbors_per_location must be >= 1");
  if (n < 2) throw DataError("minibatch_cov: need at least two points");
  neigh = std::min(neigh, n - 1);
  const bool all_neighbors = neigh >= n - 1;
  const std::size_t nloc = locations.size();

  std::vector<std::vector<Eigen::Index>> neighbors;
  if (!all_neighbors) {
    neighbors.resize(nloc);
    IndexPool pool(n);
    for (std::size_t l = 0; l < nloc; ++l) {
      pool.exclude(locations[l]);
      neighbors[l] = pool.draw(n - 1, neigh, rng);
    }
  }

  // Project only the rows that take part in some pair.
  std::vector<Eigen::Index> slot(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> used;
  auto mark = [&](Eigen::Index r) {
    if (slot[static_cast<std::size_t>(r)] < 0) {
      slot[static_cast<std::size_t>(r)] = static_cast<Eigen::Index>(used.size());
      used.push_back(r);
    }
  };
  if (all_neighbors) {
    for (Eigen::Index r = 0; r < n; ++r) mark(r);
  } else {
    for (std::size_t l = 0; l < nloc; ++l) {
      mark(locations[l]);
      for (Eigen::Index j : neighbors[l]) mark(j);
    }
  }
  const Eigen::Index m = static_cast<Eigen::Index>(used.size());
  Matrix xs(m, d);
  for (Eigen::Index r = 0; r < m; ++r) xs.row(r) = x.row(used[static_cast<std::size_t>(r)]);
  const Matrix ys = xs * proj;

  // Per location: responsibilities over its neighbours and r_i = sum_j lam_ij x_j.
  Matrix weighted(static_cast<Eigen::Index>(nloc), d);
  std::vector<Vector> lam(nloc);
  const std::size_t blocks = (nloc + kLocationBlock - 1) / kLocationBlock;
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t end = std::min(nloc, (b + 1) * kLocationBlock);
    for (std::size_t l = b * kLocationBlock; l < end; ++l) {
      const Eigen::Index i = locations[l];
      const Eigen::Index si = slot[static_cast<std::size_t>(i)];
      const Eigen::Index count = all_neighbors ? n - 1 : neigh;
      Vector logits(count);
      for (Eigen::Index t = 0; t < count; ++t) {
        const Eigen::Index j = all_neighbors ? (t < i ? t : t + 1)
                                             : neighbors[l][static_cast<std::size_t>(t)];
        logits(t) = -0.5 * (ys.row(si) - ys.row(slot[static_cast<std::size_t>(j)])).squaredNorm();
      }
      const double mx = logits.maxCoeff();
      const double lse = mx + std::log((logits.array() - mx).exp().sum());
      Vector w = (logits.array() - lse).exp();
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(d);
      for (Eigen::Index t = 0; t < count; ++t) {
        const Eigen::Index j = all_neighbors ? (t < i ? t : t + 1)
                                             : neighbors[l][static_cast<std::size_t>(t)];
        r += w(t) * xs.row(slot[static_cast<std::size_t>(j)]);
      }
      weighted.row(static_cast<Eigen::Index>(l)) = r;
      lam[l] = std::move(w);
    }
  });

  Vector col_weight = Vector::Zero(m);
  Matrix xl(static_cast<Eigen::Index>(nloc), d);
  for (std::size_t l = 0; l < nloc; ++l) {
    const Eigen::Index i = locations[l];
    xl.row(static_cast<Eigen::Index>(l)) = xs.row(slot[static_cast<std::size_t>(i)]);
    const Eigen::Index count = lam[l].size();
    for (Eigen::Index t = 0; t < count; ++t) {
      const Eigen::Index j = all_neighbors ? (t < i ? t : t + 1)
                                           : neighbors[l][static_cast<std::size_t>(t)];
      col_weight(slot[static_cast<std::size_t>(j)]) += lam[l](t);
    }
  }
  const Matrix cross = xl.transpose() * weighted;
  Matrix scatter = xl.transpose() * xl + xs.transpose() * col_weight.asDiagonal() * xs - cross -
                   cross.transpose();
  return linalg::symmetrized(scatter / static_cast<double>(nloc));
}

Matrix centred(const Matrix& data) { return data.rowwise() - data.colwise().mean(); }

}  // namespace

void StochasticConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (neigh_size < 1) throw std::invalid_argument("neigh_size must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
}

ClampedSizes clamp_sizes(const StochasticConfig& scfg, Eigen::Index n) {
  return {std::clamp<Eigen::Index>(scfg.batch_size, 1, n),
          std::clamp<Eigen::Index>(scfg.neigh_size, 1, std::max<Eigen::Index>(n - 1, 1))};
}

std::vector<Eigen::Index> sample_locations(Eigen::Index n, Eigen::Index count, Rng& rng) {
  if (count >= n) {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }
  IndexPool pool(n);
  return pool.draw(n, count, rng);
}

Matrix minibatch_cov(const Matrix& data, std::span<const Eigen::Index> locations,
                     Eigen::Index neighbors_per_location, const Matrix& sigma_current, Rng& rng) {
  validate_dataset(data);
  if (neighbors_per_location < 1) {
    throw std::invalid_argument("minibatch_cov: neighbors_per_location must be >= 1");
  }
  for (Eigen::Index i : locations) {
    if (i < 0 || i >= data.rows()) throw std::out_of_range("minibatch_cov: location out of range");
  }
  const Matrix factor = detail::metric_from_sigma(sigma_current).factor;
  return sampled_local_cov(centred(data), locations, neighbors_per_location, factor, rng);
}

CovAccumulator discounted_update(const CovAccumulator& acc, const Matrix& fresh, double gamma,
                                 Eigen::Index batch_size, Eigen::Index n) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (batch_size < 1 || n < 1) throw std::invalid_argument("batch size and n must be positive");
  if (!acc.initialized) return {fresh, true};
  const double w = std::pow(gamma, static_cast<double>(batch_size) / static_cast<double>(n));
  return {w * acc.c_l + (1.0 - w) * fresh, true};
}

MetricModel fit_stochastic(const Matrix& data, const FitConfig& cfg, const StochasticConfig& scfg) {
  cfg.validate();
  scfg.validate();
  validate_dataset(data);
  const Eigen::Index n = data.rows();
  const double nu = resolve_reg_nu(cfg, data);
  const ClampedSizes sizes = clamp_sizes(scfg, n);
  const Matrix x = centred(data);
  const Eigen::Index updates_per_epoch = (n + sizes.batch - 1) / sizes.batch;

  MetricModel model;
  model.config = cfg;
  model.reg_nu = nu;
  Matrix sigma = linalg::covariance(data);
  sigma.diagonal().array() += nu;
  detail::Metric metric = detail::metric_from_sigma(sigma);

  Rng rng(scfg.seed);
  CovAccumulator acc;
  auto track = [&]() {
    const double nll = loo_nll(data, sigma);
    model.loo_nll_trace.push_back(nll);
    model.objective_trace.push_back(nll + 0.5 * static_cast<double>(n) * nu * metric.trace_inverse);
  };
  if (scfg.track_objective) track();
  for (int epoch = 0; epoch < scfg.epochs; ++epoch) {
    for (Eigen::Index u = 0; u < updates_per_epoch; ++u) {
      const auto locations = sample_locations(n, sizes.batch, rng);
      const Matrix fresh = sampled_local_cov(x, locations, sizes.neigh, metric.factor, rng);
      acc = discounted_update(acc, fresh, scfg.gamma, sizes.batch, n);
      Matrix next = acc.c_l;
      next.diagonal().array() += nu;
      sigma = linalg::symmetrized(apply_structure(next, cfg.structure));
      metric = detail::metric_from_sigma(sigma);
      ++model.iterations;
    }
    if (scfg.track_objective) track();
  }
  model.sigma = sigma;
  model.precision_factor = metric.factor;
  model.loo_nll = scfg.track_objective ? model.loo_nll_trace.back() : loo_nll(data, sigma);
  if (!scfg.track_objective) {
    model.loo_nll_trace = {model.loo_nll};
    model.objective_trace = {model.loo_nll + 0.5 * static_cast<double>(n) * nu * metric.trace_inverse};
  }
  return model;
}

gauss_parzen::GaussParzenModel fit_stochastic_gauss(const Matrix& data, const FitConfig& cfg,
                                                    const StochasticConfig& scfg) {
  cfg.validate();
  scfg.validate();
  validate_dataset(data);
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  const double nu_l = resolve_reg_nu(cfg, data);
  const double nu_g = cfg.reg_nu_global ? *cfg.reg_nu_global : nu_l;
  const ClampedSizes sizes = clamp_sizes(scfg, n);
  const Matrix x = centred(data);
  const Eigen::Index updates_per_epoch = (n + sizes.batch - 1) / sizes.batch;

  Matrix c_g = linalg::covariance(data);
  c_g.diagonal().array() += nu_g;
  const Matrix i_g = linalg::inv_sqrt(c_g);

  gauss_parzen::GaussParzenModel model;
  model.mu = data.colwise().mean().transpose();
  model.b_g = Matrix::Zero(d, 0);
  model.b_l = linalg::chol_lower(linalg::symmetrized(i_g * i_g));
  model.reg_nu = nu_l;
  model.reg_nu_global = nu_g;
  model.config = cfg;

  Rng rng(scfg.seed);
  CovAccumulator acc;
  for (int epoch = 0; epoch < scfg.epochs; ++epoch) {
    for (Eigen::Index u = 0; u < updates_per_epoch; ++u) {
      const auto locations = sample_locations(n, sizes.batch, rng);
      const Matrix fresh = sampled_local_cov(x, locations, sizes.neigh, model.b_l, rng);
      acc = discounted_update(acc, fresh, scfg.gamma, sizes.batch, n);
      Matrix c_l = acc.c_l;
      c_l.diagonal().array() += nu_l;
      const auto split = gauss_parzen::split_solve(c_g, c_l);
      model.b_g = split.b_g;
      model.b_l = split.b_l;
      model.eigvals = split.eigvals;
      ++model.iterations;
    }
    if (scfg.track_objective) {
      model.bound_trace.push_back(2.0 * gauss_parzen::gp_nll(data, model, true) /
                                  static_cast<double>(n));
    }
  }
  model.loo_nll = gauss_parzen::gp_nll(data, model, true);
  return model;
}

}  // namespace lca::stochastic
