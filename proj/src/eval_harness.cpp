#include "lca/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "lca/gauss_parzen.hpp"
#include "lca/matrix_core.hpp"
#include "pairwise.hpp"

namespace lca::harness {
namespace {

std::string normalized(std::string_view name) {
  std::string s(name);
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

using Rng = std::mt19937_64;

struct Stats {
  double mean;
  double stderr_;
};

Stats mean_stderr(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

// Lloyd iterations from k-means++ seeds; returns the inertia.
double lloyd(const Matrix& pts, int k, Rng& rng, int max_iter, std::vector<int>& assign) {
  const Eigen::Index n = pts.rows();
  Matrix centres(k, pts.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centres.row(0) = pts.row(first(rng));
  Vector best_sq = (pts.rowwise() - centres.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = best_sq.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        target -= best_sq(pick);
        if (target <= 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    centres.row(c) = pts.row(pick);
    best_sq = best_sq.cwiseMin((pts.rowwise() - centres.row(c)).rowwise().squaredNorm());
  }

  assign.assign(static_cast<std::size_t>(n), -1);
  double inertia = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    inertia = 0.0;
    Vector dist(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index c = 0;
      const double sq = (centres.rowwise() - pts.row(i)).rowwise().squaredNorm().minCoeff(&c);
      dist(i) = sq;
      inertia += sq;
      if (assign[static_cast<std::size_t>(i)] != static_cast<int>(c)) {
        assign[static_cast<std::size_t>(i)] = static_cast<int>(c);
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    Matrix sums = Matrix::Zero(k, pts.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += pts.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centres.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // Empty cluster: re-seed at the point farthest from its centre.
        Eigen::Index far = 0;
        dist.maxCoeff(&far);
        centres.row(c) = pts.row(far);
        dist(far) = 0.0;
      }
    }
  }
  return inertia;
}

}  // namespace

std::string to_string(BaseDataset base) {
  switch (base) {
    case BaseDataset::two_blobs:
      return "two_blobs";
    case BaseDataset::circles:
      return "circles";
    case BaseDataset::five_gaussians:
      return "five_gaussians";
  }
  return "unknown";
}

BaseDataset parse_base(std::string_view name) {
  const std::string s = normalized(name);
  if (s == "two_blobs") return BaseDataset::two_blobs;
  if (s == "circles") return BaseDataset::circles;
  if (s == "five_gaussians") return BaseDataset::five_gaussians;
  throw std::invalid_argument("unknown base dataset '" + std::string(name) + "'");
}

int cluster_count(BaseDataset base) { return base == BaseDataset::five_gaussians ? 5 : 2; }

Eigen::Index default_points(BaseDataset base) {
  return base == BaseDataset::five_gaussians ? 800 : 600;
}

void SyntheticSpec::validate() const {
  if (n_points < 10) throw std::invalid_argument("n_points must be at least 10");
  if (noise_dims < 0) throw std::invalid_argument("noise_dims must be nonnegative");
}

LabeledDataset generate(const SyntheticSpec& spec) {
  spec.validate();
  const Eigen::Index n = spec.n_points;
  const int k = cluster_count(spec.base);
  LabeledDataset out;
  out.k = k;
  out.labels.resize(static_cast<std::size_t>(n));

  std::vector<Eigen::Index> sizes;
  if (spec.base == BaseDataset::five_gaussians) {
    const Eigen::Index outer = n / 8;
    sizes = {n - 4 * outer, outer, outer, outer, outer};
  } else {
    sizes = {n - n / 2, n / 2};
  }
  std::size_t pos = 0;
  for (int c = 0; c < k; ++c) {
    for (Eigen::Index t = 0; t < sizes[static_cast<std::size_t>(c)]; ++t) out.labels[pos++] = c;
  }

  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const Eigen::Index d = 2 + spec.noise_dims;
  out.raw.resize(n, d);
  static const double five_means[5][2] = {{0, 0}, {4, 0}, {-4, 0}, {0, 4}, {0, -4}};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = out.labels[static_cast<std::size_t>(i)];
    double px = 0.0;
    double py = 0.0;
    switch (spec.base) {
      case BaseDataset::two_blobs:
        px = (c == 0 ? -3.0 : 3.0) + normal(rng);
        py = normal(rng);
        break;
      case BaseDataset::circles: {
        const double radius = c == 0 ? 1.0 : 2.0;
        const double theta = angle(rng);
        px = radius * std::cos(theta) + 0.1 * normal(rng);
        py = radius * std::sin(theta) + 0.1 * normal(rng);
        break;
      }
      case BaseDataset::five_gaussians:
        px = five_means[c][0] + normal(rng);
        py = five_means[c][1] + normal(rng);
        break;
    }
    out.raw(i, 0) = px;
    out.raw(i, 1) = py;
    for (int j = 0; j < spec.noise_dims; ++j) out.raw(i, 2 + j) = normal(rng);
  }
  out.data = pca_whiten(out.raw);
  return out;
}

Matrix pca_whiten(const Matrix& data) {
  validate_dataset(data, 1);
  const Matrix centred = data.rowwise() - data.colwise().mean();
  const Matrix w = linalg::inv_sqrt(linalg::covariance(data));
  return centred * w;
}

std::vector<int> kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts,
                        int max_iter) {
  if (k < 1 || points.rows() < k) throw std::invalid_argument("kmeans: need at least k points");
  std::vector<int> best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(restarts, 1); ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    std::vector<int> assign;
    const double inertia = lloyd(points, k, rng, max_iter, assign);
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = std::move(assign);
    }
  }
  return best;
}

std::vector<int> spectral_cluster(const Matrix& data, int k, std::uint64_t seed,
                                  const SpectralConfig& cfg) {
  const Eigen::Index n = data.rows();
  if (k < 2 || n <= k) throw std::invalid_argument("spectral_cluster: need k >= 2 and n > k");
  validate_dataset(data, 2);
  const Matrix sq = detail::squared_distances(data);

  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) dists.push_back(std::sqrt(sq(i, j)));
  }
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double bandwidth = cfg.bandwidth_scale * *mid;
  if (!(bandwidth > 0.0)) bandwidth = 1.0;

  Matrix affinity = (-sq / (2.0 * bandwidth * bandwidth)).array().exp();
  affinity.diagonal().setZero();
  const Vector degree = affinity.rowwise().sum().cwiseMax(std::numeric_limits<double>::min());
  const Vector inv_root = degree.array().rsqrt();
  const Matrix normalized = inv_root.asDiagonal() * affinity * inv_root.asDiagonal();
  const linalg::EigenPairs eig = linalg::sym_eig(linalg::symmetrized(normalized));
  Matrix embedding = eig.vectors.rightCols(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = embedding.row(i).norm();
    if (norm > 0.0) embedding.row(i) /= norm;
  }
  return kmeans(embedding, k, seed, cfg.kmeans_restarts, cfg.kmeans_max_iter);
}

Eigen::MatrixXi confusion_matrix(const std::vector<int>& assignments,
                                 const std::vector<int>& labels, int k) {
  if (assignments.size() != labels.size()) {
    throw DataError("clustering_accuracy: assignments and labels differ in length");
  }
  if (k < 1) throw std::invalid_argument("clustering_accuracy: k must be positive");
  Eigen::MatrixXi e = Eigen::MatrixXi::Zero(k, k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int a = assignments[i];
    const int l = labels[i];
    if (a < 0 || a >= k || l < 0 || l >= k) {
      throw DataError("clustering_accuracy: cluster index outside [0, k)");
    }
    ++e(a, l);
  }
  return e;
}

long best_matching_exhaustive(const Eigen::MatrixXi& confusion) {
  const int k = static_cast<int>(confusion.rows());
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  long best = 0;
  do {
    long trace = 0;
    for (int a = 0; a < k; ++a) trace += confusion(a, perm[static_cast<std::size_t>(a)]);
    best = std::max(best, trace);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

long best_matching_hungarian(const Eigen::MatrixXi& confusion) {
  // Minimum-cost assignment on cost = max - E (potentials formulation, 1-based).
  const int k = static_cast<int>(confusion.rows());
  const long top = confusion.size() > 0 ? confusion.maxCoeff() : 0;
  const long inf = std::numeric_limits<long>::max() / 4;
  std::vector<long> u(static_cast<std::size_t>(k) + 1, 0), v(static_cast<std::size_t>(k) + 1, 0);
  std::vector<int> match(static_cast<std::size_t>(k) + 1, 0), way(static_cast<std::size_t>(k) + 1, 0);
  auto cost = [&](int i, int j) { return top - static_cast<long>(confusion(i - 1, j - 1)); };
  for (int i = 1; i <= k; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<long> minv(static_cast<std::size_t>(k) + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(k) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = match[static_cast<std::size_t>(j0)];
      long delta = inf;
      int j1 = 0;
      for (int j = 1; j <= k; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const long cur = cost(i0, j) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= k; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  long trace = 0;
  for (int j = 1; j <= k; ++j) trace += confusion(match[static_cast<std::size_t>(j)] - 1, j - 1);
  return trace;
}

double clustering_accuracy(const std::vector<int>& assignments, const std::vector<int>& labels,
                           int k) {
  const Eigen::MatrixXi e = confusion_matrix(assignments, labels, k);
  if (labels.empty()) throw DataError("clustering_accuracy: empty labelling");
  const long matched = k <= 8 ? best_matching_exhaustive(e) : best_matching_hungarian(e);
  return 100.0 * static_cast<double>(matched) / static_cast<double>(labels.size());
}

std::string to_string(Method method) {
  switch (method) {
    case Method::raw:
      return "raw";
    case Method::mpw:
      return "mpw";
    case Method::lca:
      return "lca";
    case Method::lca_gauss:
      return "lca-gauss";
    case Method::lca_gauss_red:
      return "lca-gauss-red";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  const std::string s = normalized(name);
  if (s == "raw") return Method::raw;
  if (s == "mpw") return Method::mpw;
  if (s == "lca") return Method::lca;
  if (s == "lca_gauss") return Method::lca_gauss;
  if (s == "lca_gauss_red") return Method::lca_gauss_red;
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

Matrix apply_method(Method method, const Matrix& data, const FitConfig& cfg) {
  switch (method) {
    case Method::raw:
      return data;
    case Method::mpw: {
      FitConfig one = cfg;
      one.max_iter = 1;
      return transform(data, fit(data, one));
    }
    case Method::lca:
      return transform(data, fit(data, cfg));
    case Method::lca_gauss:
    case Method::lca_gauss_red: {
      const auto model = method == Method::lca_gauss ? gauss_parzen::fit_gauss(data, cfg)
                                                     : gauss_parzen::fit_gauss_red(data, cfg);
      return gauss_parzen::transform(data, model, model.d_parzen() > 0);
    }
  }
  return data;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(master);
  h = mix(h ^ a);
  h = mix(h ^ b);
  h = mix(h ^ c);
  return h;
}

std::vector<SweepSummary> SweepTable::summary() const {
  std::vector<std::pair<std::string, int>> keys;
  std::map<std::pair<std::string, int>, std::vector<double>> cells;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.method, r.noise_dims);
    if (!cells.count(key)) keys.push_back(key);
    cells[key].push_back(r.accuracy);
  }
  std::vector<SweepSummary> out;
  for (const auto& key : keys) {
    const auto& v = cells[key];
    const Stats s = mean_stderr(v);
    out.push_back({key.first, key.second, static_cast<int>(v.size()), s.mean, s.stderr_});
  }
  return out;
}

double SweepTable::mean_accuracy(std::string_view method, int noise_dims) const {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.method == method && r.noise_dims == noise_dims) v.push_back(r.accuracy);
  }
  return mean_stderr(v).mean;
}

namespace {

struct Variant {
  std::string label;
  Method method;
  int max_iter;
};

SweepTable sweep(const SweepOptions& opts, const std::vector<Variant>& variants) {
  if (opts.runs < 1) throw std::invalid_argument("runs must be positive");
  const Eigen::Index n = opts.n_points > 0 ? opts.n_points : default_points(opts.base);
  // One row bucket per variant keeps the long table grouped by method.
  std::vector<std::vector<SweepRow>> buckets(variants.size());
  for (int noise : opts.noise_dims) {
    for (int run = 0; run < opts.runs; ++run) {
      const std::uint64_t cell_seed = derive_seed(opts.seed, static_cast<std::uint64_t>(noise),
                                                  static_cast<std::uint64_t>(run));
      SyntheticSpec spec{opts.base, n, noise, cell_seed};
      const LabeledDataset ds = generate(spec);
      const std::uint64_t sc_seed = derive_seed(cell_seed, 0x5c);
      for (std::size_t v = 0; v < variants.size(); ++v) {
        FitConfig cfg = opts.fit;
        if (variants[v].max_iter > 0) cfg.max_iter = variants[v].max_iter;
        Matrix view;
        try {
          view = apply_method(variants[v].method, ds.data, cfg);
        } catch (const NumericalError& e) {
          std::clog << "lca: warning: " << variants[v].label << " failed on noise=" << noise
                    << " run=" << run << " (" << e.what() << "); clustering raw data\n";
          view = ds.data;
        }
        const auto assign = spectral_cluster(view, ds.k, sc_seed, opts.spectral);
        buckets[v].push_back({variants[v].label, noise, run, clustering_accuracy(assign, ds.labels, ds.k)});
      }
    }
  }
  SweepTable table;
  for (auto& b : buckets) table.rows.insert(table.rows.end(), b.begin(), b.end());
  return table;
}

}  // namespace

SweepTable run_noise_sweep(const SweepOptions& opts, const std::vector<Method>& methods) {
  std::vector<Variant> variants;
  for (Method m : methods) variants.push_back({to_string(m), m, 0});
  return sweep(opts, variants);
}

SweepTable run_iteration_sweep(const SweepOptions& opts, const std::vector<int>& iteration_counts) {
  if (iteration_counts.empty()) throw std::invalid_argument("iteration_counts must be nonempty");
  std::vector<Variant> variants;
  for (int c : iteration_counts) {
    if (c < 0) throw std::invalid_argument("iteration counts must be nonnegative");
    if (c == 0) {
      variants.push_back({"lca", Method::lca, 0});
    } else if (c == 1) {
      variants.push_back({"mpw", Method::mpw, 1});
    } else {
      variants.push_back({"lca-" + std::to_string(c), Method::lca, c});
    }
  }
  return sweep(opts, variants);
}

}  // namespace lca::harness
