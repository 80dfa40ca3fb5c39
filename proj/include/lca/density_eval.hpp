#ifndef LCA_DENSITY_EVAL_HPP
#define LCA_DENSITY_EVAL_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lca/gauss_parzen.hpp"
#include "lca/lca.hpp"

/**
 * @file density_eval.hpp
 *
 * Density-model comparison: Parzen windows with isotropic, diagonal and full
 * LCA metrics, a single Gaussian, and the Gauss-Parzen product. Every model
 * is regularized by the ridge nu (the M-step optimum of a (n nu / 2)
 * trace(Sigma^-1) penalty), with nu picked on a validation split.
 */
namespace lca::density {

enum class Kind { parzen_isotropic, parzen_diagonal, parzen_full, gaussian, gauss_parzen };

std::string to_string(Kind kind);
/// Accepts the enumerator names, with dashes or underscores.
Kind parse_kind(std::string_view name);
const std::vector<Kind>& all_kinds();

struct DensityModel {
  Kind kind = Kind::parzen_full;
  /// Parzen kinds: the fitted metric (sigma carries the structure).
  MetricModel metric;
  /// Gaussian kind: mean and covariance (Cov + nu I).
  Vector mean;
  Matrix covariance;
  /// Gauss-Parzen kind.
  gauss_parzen::GaussParzenModel product;
  /// Parzen support: the training points, each with weight 1/n.
  Matrix support;
  double reg_nu = 0.0;
  double reg_nu_global = 0.0;
};

/// Fits one model on `train` with ridge nu (and nu_global for the Gaussian
/// part of the product; defaults to nu).
DensityModel fit_density(Kind kind, const Matrix& train, double nu,
                         std::optional<double> nu_global = std::nullopt,
                         const FitConfig& base = {});

/// Mean per-point negative log density of `test`. Parzen factors use the
/// whole training support with weight 1/n (no leave-one-out).
double test_nll(const DensityModel& model, const Matrix& test);

/// Ten log-spaced values from 1e-8 tau to 1e-1 tau, tau = trace(Cov)/d.
std::vector<double> default_reg_grid(const Matrix& train);

struct Selection {
  DensityModel model;
  std::vector<double> grid;
  /// Validation NLL per grid value; NaN where the fit failed numerically.
  std::vector<double> validation_nll;
  std::size_t best_index = 0;
};

/// Fits every grid value, scores on `valid`, returns the argmin. For
/// gauss_parzen the global ridge must be supplied (the best Gaussian value)
/// and only the local ridge is searched. Throws NumericalError when every
/// grid value fails.
Selection select_regularization(const Matrix& train, const Matrix& valid, Kind kind,
                                const std::vector<double>& grid,
                                std::optional<double> nu_global = std::nullopt,
                                const FitConfig& base = {});

struct EvalProtocol {
  Eigen::Index train_n = 2000;
  Eigen::Index valid_n = 1000;
  Eigen::Index test_n = 3000;
  /// Empty selects default_reg_grid(train) per run.
  std::vector<double> reg_grid;
  int runs = 20;
  std::uint64_t seed = 0;
  std::vector<Kind> kinds = all_kinds();
  FitConfig fit;

  /// Throws DataError when the splits do not fit in n points.
  void validate(Eigen::Index n) const;
};

struct Splits {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> valid;
  std::vector<Eigen::Index> test;
};

/// Disjoint random index sets of the protocol sizes.
Splits random_splits(Eigen::Index n, const EvalProtocol& protocol, std::uint64_t seed);
/// Throws DataError if any index is out of range or shared between splits.
void check_disjoint(const Splits& splits, Eigen::Index n);
Matrix take_rows(const Matrix& data, const std::vector<Eigen::Index>& rows);

struct BenchmarkRow {
  std::string kind;
  int run = 0;
  double test_nll = 0.0;
  double reg_nu = 0.0;
};

struct BenchmarkSummary {
  std::string kind;
  int runs = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
};

struct BenchmarkTable {
  std::vector<BenchmarkRow> rows;
  std::vector<BenchmarkSummary> summary() const;
  double mean_nll(std::string_view kind) const;
};

/// Evaluates the models of one split; the Gaussian is always selected first
/// when gauss_parzen is requested, since its ridge fixes the global part.
std::vector<BenchmarkRow> evaluate_split(const Matrix& train, const Matrix& valid,
                                         const Matrix& test, const EvalProtocol& protocol,
                                         int run);

/// Repeats evaluate_split on `runs` random splits drawn from the seed.
BenchmarkTable run_density_benchmark(const Matrix& data, const EvalProtocol& protocol);

/// Subsampling ablation: NLL differences of stochastic fits against the
/// (gamma = 0, B = n, N = n - 1) reference on the same split.
struct SubsampleGridOptions {
  std::vector<double> gammas = {0.3, 0.6, 0.9};
  std::vector<Eigen::Index> batches = {1000, 3000, 6000};
  std::vector<Eigen::Index> neighs = {1000, 3000, 6000};
  int runs = 20;
  std::uint64_t seed = 0;
  /// Training points per run; the remainder is the test set.
  Eigen::Index train_n = 6000;
  int epochs = 30;
  FitConfig fit;
};

struct SubsampleRow {
  double gamma = 0.0;
  Eigen::Index batch = 0;
  Eigen::Index neigh = 0;
  int run = 0;
  /// Mean per-point leave-one-out train NLL minus the reference value.
  double train_diff = 0.0;
  /// Mean per-point test NLL minus the reference value.
  double test_diff = 0.0;
};

struct SubsampleSummary {
  double gamma = 0.0;
  Eigen::Index batch = 0;
  Eigen::Index neigh = 0;
  int runs = 0;
  double train_mean = 0.0;
  double train_stderr = 0.0;
  double test_mean = 0.0;
  double test_stderr = 0.0;
};

struct SubsampleTable {
  std::vector<SubsampleRow> rows;
  std::vector<SubsampleSummary> summary() const;
};

SubsampleTable run_subsample_grid(const Matrix& data, const SubsampleGridOptions& opts);

}  // namespace lca::density

#endif  // LCA_DENSITY_EVAL_HPP
