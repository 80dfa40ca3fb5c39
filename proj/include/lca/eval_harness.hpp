#ifndef LCA_EVAL_HARNESS_HPP
#define LCA_EVAL_HARNESS_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lca/lca.hpp"

/**
 * @file eval_harness.hpp
 *
 * Clustering benchmark apparatus: synthetic 2-D datasets padded with white
 * Gaussian noise dimensions and whitened, normalized spectral clustering,
 * permutation-matched accuracy, and the noise / EM-iteration sweeps.
 */
namespace lca::harness {

enum class BaseDataset { two_blobs, circles, five_gaussians };

std::string to_string(BaseDataset base);
/// Accepts "two_blobs", "circles", "five_gaussians" (dashes allowed).
BaseDataset parse_base(std::string_view name);
/// Ground-truth cluster count: 2, 2 and 5.
int cluster_count(BaseDataset base);
/// 600 points for two_blobs and circles, 800 for five_gaussians.
Eigen::Index default_points(BaseDataset base);

struct SyntheticSpec {
  BaseDataset base = BaseDataset::two_blobs;
  Eigen::Index n_points = 600;
  int noise_dims = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledDataset {
  /// Whitened data, n x (2 + noise_dims).
  Matrix data;
  /// The same points before whitening.
  Matrix raw;
  std::vector<int> labels;
  int k = 0;
};

/**
 * two_blobs: unit-variance isotropic Gaussians at (-3, 0) and (3, 0).
 * circles: radii 1 and 2 with isotropic noise of standard deviation 0.1.
 * five_gaussians: unit-variance Gaussians at the origin and (+-4, 0),
 * (0, +-4); the centre cluster holds n - 4 floor(n/8) points.
 * Labels come in contiguous blocks.
 */
LabeledDataset generate(const SyntheticSpec& spec);

/// Centred data times Cov^-1/2 (symmetric root, 1/n covariance).
Matrix pca_whiten(const Matrix& data);

struct SpectralConfig {
  /// Affinity bandwidth as a multiple of the median pairwise distance.
  double bandwidth_scale = 1.0;
  int kmeans_restarts = 10;
  int kmeans_max_iter = 300;
};

/// k-means with k-means++ seeding; the restart with the lowest inertia wins.
std::vector<int> kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts = 10,
                        int max_iter = 300);

/// Normalized spectral clustering: Gaussian affinity with zero diagonal,
/// D^-1/2 A D^-1/2, top-k eigenvectors with unit-length rows, k-means.
std::vector<int> spectral_cluster(const Matrix& data, int k, std::uint64_t seed,
                                  const SpectralConfig& cfg = {});

/// E(a, l) = number of points with assignment a and label l.
Eigen::MatrixXi confusion_matrix(const std::vector<int>& assignments,
                                 const std::vector<int>& labels, int k);

/// 100/n times the best permutation-matched trace of the confusion matrix.
/// Exhaustive over permutations for k <= 8, Hungarian algorithm otherwise.
double clustering_accuracy(const std::vector<int>& assignments, const std::vector<int>& labels,
                           int k);
/// Best matched trace by enumerating all k! permutations.
long best_matching_exhaustive(const Eigen::MatrixXi& confusion);
/// Best matched trace by the Hungarian algorithm.
long best_matching_hungarian(const Eigen::MatrixXi& confusion);

enum class Method { raw, mpw, lca, lca_gauss, lca_gauss_red };

std::string to_string(Method method);
Method parse_method(std::string_view name);

/// Data as seen by the clusterer: unchanged for raw, F x for the LCA metrics,
/// the Parzen coordinates B_L^T x for the Gauss-Parzen fits (all coordinates
/// when the fit keeps no Parzen dimension).
Matrix apply_method(Method method, const Matrix& data, const FitConfig& cfg);

/// splitmix64 mix of a master seed with up to three integer keys.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

struct SweepRow {
  std::string method;
  int noise_dims = 0;
  int run = 0;
  double accuracy = 0.0;
};

struct SweepSummary {
  std::string method;
  int noise_dims = 0;
  int runs = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::vector<SweepSummary> summary() const;
  double mean_accuracy(std::string_view method, int noise_dims) const;
};

struct SweepOptions {
  BaseDataset base = BaseDataset::two_blobs;
  std::vector<int> noise_dims = {0, 4, 8};
  int runs = 20;
  std::uint64_t seed = 0;
  /// 0 selects default_points(base).
  Eigen::Index n_points = 0;
  FitConfig fit;
  SpectralConfig spectral;
};

/// Every (noise_dims, run) cell draws one dataset from
/// derive_seed(seed, noise_dims, run) and clusters it with every method.
SweepTable run_noise_sweep(const SweepOptions& opts, const std::vector<Method>& methods);

/// LCA capped at each iteration count; 0 means "run to convergence" and is
/// labelled "lca", 1 is labelled "mpw", others "lca-<count>".
SweepTable run_iteration_sweep(const SweepOptions& opts, const std::vector<int>& iteration_counts);

}  // namespace lca::harness

#endif  // LCA_EVAL_HARNESS_HPP
