#include "lca/density_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "lca/eval_harness.hpp"
#include "lca/matrix_core.hpp"
#include "lca/stochastic.hpp"
#include "metric.hpp"
#include "pairwise.hpp"

namespace lca::density {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
const double kNaN = std::numeric_limits<double>::quiet_NaN();

double parzen_test_nll(const Matrix& sigma, const Matrix& support, const Matrix& test) {
  const detail::Metric metric = detail::metric_from_sigma(sigma);
  const Vector log_kernel =
      detail::log_mean_kernel(test * metric.factor, support * metric.factor);
  const double norm = 0.5 * (static_cast<double>(test.cols()) * kLog2Pi + metric.log_det);
  return norm - log_kernel.mean();
}

std::pair<double, double> mean_stderr(const std::vector<double>& v) {
  if (v.empty()) return {kNaN, 0.0};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

CovarianceStructure structure_of(Kind kind) {
  switch (kind) {
    case Kind::parzen_isotropic:
      return CovarianceStructure::isotropic;
    case Kind::parzen_diagonal:
      return CovarianceStructure::diagonal;
    default:
      return CovarianceStructure::full;
  }
}

bool is_parzen(Kind kind) {
  return kind == Kind::parzen_isotropic || kind == Kind::parzen_diagonal ||
         kind == Kind::parzen_full;
}

}  // namespace

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::parzen_isotropic:
      return "parzen_isotropic";
    case Kind::parzen_diagonal:
      return "parzen_diagonal";
    case Kind::parzen_full:
      return "parzen_full";
    case Kind::gaussian:
      return "gaussian";
    case Kind::gauss_parzen:
      return "gauss_parzen";
  }
  return "unknown";
}

Kind parse_kind(std::string_view name) {
  std::string s(name);
  std::replace(s.begin(), s.end(), '-', '_');
  for (Kind k : all_kinds()) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown density kind '" + std::string(name) + "'");
}

const std::vector<Kind>& all_kinds() {
  static const std::vector<Kind> kinds = {Kind::parzen_isotropic, Kind::parzen_diagonal,
                                          Kind::parzen_full, Kind::gaussian, Kind::gauss_parzen};
  return kinds;
}

DensityModel fit_density(Kind kind, const Matrix& train, double nu,
                         std::optional<double> nu_global, const FitConfig& base) {
  if (!(nu >= 0.0)) throw std::invalid_argument("regularization must be nonnegative");
  DensityModel model;
  model.kind = kind;
  model.reg_nu = nu;
  model.reg_nu_global = nu_global.value_or(nu);
  FitConfig cfg = base;
  cfg.reg_nu = nu;
  if (is_parzen(kind)) {
    validate_dataset(train);
    // Isotropic and diagonal windows are read off the full optimum: the
    // trace-matched lambda I, or its diagonal.
    cfg.structure = CovarianceStructure::full;
    model.metric = fit(train, cfg);
    if (kind != Kind::parzen_full) {
      MetricModel full = std::move(model.metric);
      model.metric = make_metric_model(train, apply_structure(full.sigma, structure_of(kind)));
      model.metric.iterations = full.iterations;
      model.metric.converged = full.converged;
      model.metric.reg_nu = full.reg_nu;
      model.metric.config = full.config;
    }
    model.support = train;
  } else if (kind == Kind::gaussian) {
    validate_dataset(train, 1);
    model.mean = train.colwise().mean().transpose();
    model.covariance = linalg::covariance(train);
    model.covariance.diagonal().array() += nu;
    detail::metric_from_sigma(model.covariance);
  } else {
    cfg.reg_nu_global = model.reg_nu_global;
    model.product = gauss_parzen::fit_gauss(train, cfg);
    model.support = train;
  }
  return model;
}

double test_nll(const DensityModel& model, const Matrix& test) {
  validate_dataset(test, 1);
  if (is_parzen(model.kind)) {
    if (test.cols() != model.metric.sigma.rows()) throw DataError("test_nll: dimension mismatch");
    return parzen_test_nll(model.metric.sigma, model.support, test);
  }
  if (model.kind == Kind::gaussian) {
    if (test.cols() != model.mean.size()) throw DataError("test_nll: dimension mismatch");
    const detail::Metric metric = detail::metric_from_sigma(model.covariance);
    const Matrix centred = test.rowwise() - model.mean.transpose();
    const double quad = (centred * metric.factor).rowwise().squaredNorm().mean();
    return 0.5 * (static_cast<double>(test.cols()) * kLog2Pi + metric.log_det + quad);
  }
  return -gauss_parzen::log_density(test, model.support, model.product).mean();
}

std::vector<double> default_reg_grid(const Matrix& train) {
  const double tau = linalg::covariance(train).trace() / static_cast<double>(train.cols());
  std::vector<double> grid(10);
  for (int i = 0; i < 10; ++i) grid[static_cast<std::size_t>(i)] = tau * std::pow(10.0, -8.0 + 7.0 * i / 9.0);
  return grid;
}

Selection select_regularization(const Matrix& train, const Matrix& valid, Kind kind,
                                const std::vector<double>& grid, std::optional<double> nu_global,
                                const FitConfig& base) {
  if (grid.empty()) throw std::invalid_argument("regularization grid is empty");
  if (kind == Kind::gauss_parzen && !nu_global) {
    nu_global = select_regularization(train, valid, Kind::gaussian, grid, std::nullopt, base)
                    .model.reg_nu;
  }
  Selection sel;
  sel.grid = grid;
  sel.validation_nll.assign(grid.size(), kNaN);
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    try {
      DensityModel m = fit_density(kind, train, grid[g], nu_global, base);
      const double score = test_nll(m, valid);
      if (!std::isfinite(score)) continue;
      sel.validation_nll[g] = score;
      if (score < best) {
        best = score;
        sel.best_index = g;
        sel.model = std::move(m);
        found = true;
      }
    } catch (const NumericalError&) {
    }
  }
  if (!found) {
    throw NumericalError("every regularization value gave a degenerate " + to_string(kind) +
                         " model");
  }
  return sel;
}

void EvalProtocol::validate(Eigen::Index n) const {
  if (train_n < 2 || valid_n < 1 || test_n < 1) {
    throw DataError("split sizes must be at least 2 / 1 / 1");
  }
  if (train_n + valid_n + test_n > n) {
    throw DataError("split sizes (" + std::to_string(train_n + valid_n + test_n) +
                    ") exceed the dataset size (" + std::to_string(n) + ")");
  }
  if (runs < 1) throw std::invalid_argument("runs must be positive");
  if (kinds.empty()) throw std::invalid_argument("no density kinds requested");
}

Splits random_splits(Eigen::Index n, const EvalProtocol& protocol, std::uint64_t seed) {
  protocol.validate(n);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  Splits s;
  auto it = perm.begin();
  s.train.assign(it, it + protocol.train_n);
  it += protocol.train_n;
  s.valid.assign(it, it + protocol.valid_n);
  it += protocol.valid_n;
  s.test.assign(it, it + protocol.test_n);
  return s;
}

void check_disjoint(const Splits& splits, Eigen::Index n) {
  std::set<Eigen::Index> seen;
  for (const auto* part : {&splits.train, &splits.valid, &splits.test}) {
    for (Eigen::Index i : *part) {
      if (i < 0 || i >= n) throw DataError("split index " + std::to_string(i) + " out of range");
      if (!seen.insert(i).second) {
        throw DataError("split index " + std::to_string(i) + " appears in more than one split");
      }
    }
  }
}

Matrix take_rows(const Matrix& data, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = data.row(rows[r]);
  return out;
}

std::vector<BenchmarkRow> evaluate_split(const Matrix& train, const Matrix& valid,
                                         const Matrix& test, const EvalProtocol& protocol,
                                         int run) {
  const std::vector<double> grid =
      protocol.reg_grid.empty() ? default_reg_grid(train) : protocol.reg_grid;
  std::map<Kind, Selection> selected;
  const bool want_product =
      std::find(protocol.kinds.begin(), protocol.kinds.end(), Kind::gauss_parzen) !=
      protocol.kinds.end();
  if (want_product) {
    selected.emplace(Kind::gaussian, select_regularization(train, valid, Kind::gaussian, grid,
                                                           std::nullopt, protocol.fit));
  }
  std::vector<BenchmarkRow> rows;
  for (Kind kind : protocol.kinds) {
    if (!selected.count(kind)) {
      std::optional<double> nu_global;
      if (kind == Kind::gauss_parzen) nu_global = selected.at(Kind::gaussian).model.reg_nu;
      selected.emplace(kind, select_regularization(train, valid, kind, grid, nu_global, protocol.fit));
    }
    const Selection& sel = selected.at(kind);
    rows.push_back({to_string(kind), run, test_nll(sel.model, test), sel.model.reg_nu});
  }
  return rows;
}

BenchmarkTable run_density_benchmark(const Matrix& data, const EvalProtocol& protocol) {
  validate_dataset(data);
  protocol.validate(data.rows());
  std::vector<std::vector<BenchmarkRow>> per_run(static_cast<std::size_t>(protocol.runs));
  for (int run = 0; run < protocol.runs; ++run) {
    const Splits s = random_splits(data.rows(), protocol,
                                   harness::derive_seed(protocol.seed, static_cast<std::uint64_t>(run)));
    per_run[static_cast<std::size_t>(run)] = evaluate_split(
        take_rows(data, s.train), take_rows(data, s.valid), take_rows(data, s.test), protocol, run);
  }
  // Group by kind, runs in order.
  BenchmarkTable table;
  for (Kind kind : protocol.kinds) {
    for (const auto& rows : per_run) {
      for (const auto& r : rows) {
        if (r.kind == to_string(kind)) table.rows.push_back(r);
      }
    }
  }
  return table;
}

std::vector<BenchmarkSummary> BenchmarkTable::summary() const {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> cells;
  for (const auto& r : rows) {
    if (!cells.count(r.kind)) order.push_back(r.kind);
    cells[r.kind].push_back(r.test_nll);
  }
  std::vector<BenchmarkSummary> out;
  for (const auto& k : order) {
    const auto [mean, se] = mean_stderr(cells[k]);
    out.push_back({k, static_cast<int>(cells[k].size()), mean, se});
  }
  return out;
}

double BenchmarkTable::mean_nll(std::string_view kind) const {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.kind == kind) v.push_back(r.test_nll);
  }
  return mean_stderr(v).first;
}

SubsampleTable run_subsample_grid(const Matrix& data, const SubsampleGridOptions& opts) {
  validate_dataset(data);
  if (opts.train_n < 2 || opts.train_n >= data.rows()) {
    throw DataError("subsample grid: train_n must leave at least one test point");
  }
  if (opts.runs < 1) throw std::invalid_argument("runs must be positive");
  SubsampleTable table;
  for (int run = 0; run < opts.runs; ++run) {
    const std::uint64_t run_seed = harness::derive_seed(opts.seed, static_cast<std::uint64_t>(run));
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(data.rows()));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::mt19937_64 rng(run_seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Matrix train = take_rows(data, {perm.begin(), perm.begin() + opts.train_n});
    const Matrix test = take_rows(data, {perm.begin() + opts.train_n, perm.end()});
    const Eigen::Index n = train.rows();
    const double nd = static_cast<double>(n);

    auto evaluate = [&](double gamma, Eigen::Index batch, Eigen::Index neigh) {
      stochastic::StochasticConfig scfg;
      scfg.gamma = gamma;
      scfg.batch_size = batch;
      scfg.neigh_size = neigh;
      scfg.seed = harness::derive_seed(run_seed, 1);
      scfg.epochs = opts.epochs;
      const MetricModel m = stochastic::fit_stochastic(train, opts.fit, scfg);
      return std::make_pair(m.loo_nll / nd, parzen_test_nll(m.sigma, train, test));
    };
    const auto reference = evaluate(0.0, n, n - 1);
    for (double gamma : opts.gammas) {
      for (Eigen::Index batch : opts.batches) {
        for (Eigen::Index neigh : opts.neighs) {
          const auto cell = evaluate(gamma, batch, neigh);
          table.rows.push_back({gamma, batch, neigh, run, cell.first - reference.first,
                                cell.second - reference.second});
        }
      }
    }
  }
  return table;
}

std::vector<SubsampleSummary> SubsampleTable::summary() const {
  std::vector<std::tuple<double, Eigen::Index, Eigen::Index>> order;
  std::map<std::tuple<double, Eigen::Index, Eigen::Index>, std::pair<std::vector<double>, std::vector<double>>> cells;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.gamma, r.batch, r.neigh);
    if (!cells.count(key)) order.push_back(key);
    cells[key].first.push_back(r.train_diff);
    cells[key].second.push_back(r.test_diff);
  }
  std::vector<SubsampleSummary> out;
  for (const auto& key : order) {
    const auto& [tr, te] = cells[key];
    const auto [tm, ts] = mean_stderr(tr);
    const auto [em, es] = mean_stderr(te);
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), static_cast<int>(tr.size()),
                   tm, ts, em, es});
  }
  return out;
}

}  // namespace lca::density
