#ifndef LCA_STOCHASTIC_HPP
#define LCA_STOCHASTIC_HPP

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lca/gauss_parzen.hpp"
#include "lca/lca.hpp"

/**
 * @file stochastic.hpp
 *
 * Large-scale variant. Each update samples B locations and, for each of them,
 * N neighbours (both without replacement, freshly every update), estimates
 * the local covariance from those pairs only, and folds it into a running
 * estimate with weight gamma^(B/n) on the old value, so gamma is the weight
 * left after one full pass over the data.
 *
 * Random draws come from a single std::mt19937_64 stream, consumed in a fixed
 * order: the B locations first, then the neighbours of each location in
 * location order. When B >= n all locations are used in index order, and when
 * N >= n - 1 every other point is a neighbour; neither case draws numbers.
 */
namespace lca::stochastic {

using Rng = std::mt19937_64;

struct StochasticConfig {
  double gamma = 0.6;
  Eigen::Index batch_size = 100;
  Eigen::Index neigh_size = 3000;
  std::uint64_t seed = 0;
  int epochs = 30;
  /// Record the full leave-one-out NLL after every epoch (O(n^2 d) each).
  bool track_objective = false;

  void validate() const;
  bool operator==(const StochasticConfig&) const = default;
};

/// Batch and neighbourhood sizes clamped to [1, n] and [1, n - 1].
struct ClampedSizes {
  Eigen::Index batch;
  Eigen::Index neigh;
};
ClampedSizes clamp_sizes(const StochasticConfig& scfg, Eigen::Index n);

struct CovAccumulator {
  Matrix c_l;
  bool initialized = false;
};

/// Draws `count` distinct indices from [0, n); all of them in order when
/// count >= n.
std::vector<Eigen::Index> sample_locations(Eigen::Index n, Eigen::Index count, Rng& rng);

/**
 * Local covariance averaged over the given locations:
 *
 *   (1/|locations|) sum_i sum_{j in nbr(i)} lam_ij (x_i - x_j)(x_i - x_j)^T,
 *
 * where nbr(i) holds `neighbors_per_location` points drawn from the others
 * and lam_i. is normalized within nbr(i). Distances use sigma_current.
 */
Matrix minibatch_cov(const Matrix& data, std::span<const Eigen::Index> locations,
                     Eigen::Index neighbors_per_location, const Matrix& sigma_current, Rng& rng);

/// C_L <- w C_L + (1 - w) fresh with w = gamma^(B/n); the first call stores
/// fresh. Throws std::invalid_argument unless 0 <= gamma < 1.
CovAccumulator discounted_update(const CovAccumulator& acc, const Matrix& fresh, double gamma,
                                 Eigen::Index batch_size, Eigen::Index n);

/// Stochastic LCA. The ridge nu is added to the running estimate when it is
/// turned into the metric, not to each minibatch. The metric is refreshed
/// after every update. MetricModel::iterations counts updates.
MetricModel fit_stochastic(const Matrix& data, const FitConfig& cfg, const StochasticConfig& scfg);

/// Stochastic Gauss-Parzen fit: the same running local covariance feeds the
/// closed-form split after every update.
gauss_parzen::GaussParzenModel fit_stochastic_gauss(const Matrix& data, const FitConfig& cfg,
                                                    const StochasticConfig& scfg);

}  // namespace lca::stochastic

#endif  // LCA_STOCHASTIC_HPP
