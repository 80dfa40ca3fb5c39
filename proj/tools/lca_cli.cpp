#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lca/density_eval.hpp"
#include "lca/errors.hpp"
#include "lca/eval_harness.hpp"
#include "lca/gauss_parzen.hpp"
#include "lca/io.hpp"
#include "lca/lca.hpp"
#include "lca/parallel.hpp"
#include "lca/stochastic.hpp"

namespace {

using lca::Matrix;
namespace io = lca::io;
namespace harness = lca::harness;
namespace density = lca::density;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Comma-separated text table with 17-digit numbers.
class CsvText {
 public:
  explicit CsvText(const std::vector<std::string>& header) { row(header); }

  CsvText& cell(const std::string& s) {
    if (!first_) text_ += ',';
    text_ += s;
    first_ = false;
    return *this;
  }
  CsvText& cell(double v) { return cell(io::format_double(v)); }
  CsvText& cell(long long v) { return cell(std::to_string(v)); }
  CsvText& cell(int v) { return cell(std::to_string(v)); }
  CsvText& cell(long v) { return cell(std::to_string(v)); }
  void end() {
    text_ += '\n';
    first_ = true;
  }
  const std::string& str() const { return text_; }

 private:
  void row(const std::vector<std::string>& fields) {
    for (const auto& f : fields) cell(f);
    end();
  }
  std::string text_;
  bool first_ = true;
};

std::string replace_suffix(const std::string& path, const std::string& suffix) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) {
    return path.substr(0, dot) + suffix;
  }
  return path + suffix;
}

lca::CovarianceStructure parse_structure(const std::string& s) {
  if (s == "full") return lca::CovarianceStructure::full;
  if (s == "diagonal") return lca::CovarianceStructure::diagonal;
  if (s == "isotropic") return lca::CovarianceStructure::isotropic;
  throw UsageError("unknown structure '" + s + "'");
}

struct FitFlags {
  int max_iter = 200;
  double tol = 1e-7;
  std::optional<double> nu;
  std::optional<double> nu_global;
  std::uint64_t seed = 0;
  std::string structure = "full";
  int probe_iters = 40;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--max-iter", max_iter, "EM iteration cap (1 gives Manifold Parzen Windows)");
    cmd->add_option("--tol", tol, "Stop when the objective improves by less than tol * |objective|");
    cmd->add_option("--nu", nu, "Covariance ridge; default 1e-6 * trace(Cov) / d");
    cmd->add_option("--nu-global", nu_global, "Ridge on the Gaussian part of lca-gauss fits");
    cmd->add_option("--seed", seed, "Random seed");
    cmd->add_option("--structure", structure, "Covariance structure: full, diagonal or isotropic")
        ->check(CLI::IsMember({"full", "diagonal", "isotropic"}));
    cmd->add_option("--probe-iters", probe_iters, "Probe iterations of the lca-gauss-red search");
  }

  lca::FitConfig config() const {
    lca::FitConfig cfg;
    cfg.max_iter = max_iter;
    cfg.rel_tol = tol;
    cfg.reg_nu = nu;
    cfg.reg_nu_global = nu_global;
    cfg.seed = seed;
    cfg.structure = parse_structure(structure);
    cfg.probe_iters = probe_iters;
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }
};

struct StochasticFlags {
  bool enabled = false;
  double gamma = 0.6;
  long batch = 100;
  long neigh = 3000;
  int epochs = 30;
  bool track = false;

  void add_to(CLI::App* cmd) {
    cmd->add_flag("--stochastic", enabled, "Use minibatch updates");
    cmd->add_option("--gamma", gamma, "Weight left on the running covariance after one data pass");
    cmd->add_option("--batch", batch, "Locations per minibatch (B)");
    cmd->add_option("--neigh", neigh, "Neighbours per location (N)");
    cmd->add_option("--epochs", epochs, "Passes over the data");
    cmd->add_flag("--track-objective", track, "Record the full leave-one-out NLL every epoch");
  }

  lca::stochastic::StochasticConfig config(std::uint64_t seed) const {
    lca::stochastic::StochasticConfig s;
    s.gamma = gamma;
    s.batch_size = batch;
    s.neigh_size = neigh;
    s.epochs = epochs;
    s.seed = seed;
    s.track_objective = track;
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return s;
  }
};

/// Flags of the command that ran, in a form --config accepts.
void write_sidecar(const CLI::App& app, const std::string& out) {
  const CLI::App* cmd = app.get_subcommands().front();
  io::write_text(out + ".ini", "[" + cmd->get_name() + "]\n" + cmd->config_to_str(true, false));
}

// generate

struct GenerateArgs {
  std::string base = "two_blobs";
  long n = 0;
  int noise_dims = 0;
  std::uint64_t seed = 0;
  bool whiten = false;
  std::string out;
  std::string labels;
};

void add_generate(CLI::App& app, GenerateArgs& a) {
  auto* cmd = app.add_subcommand("generate", "Write a synthetic clustering dataset and its labels");
  cmd->configurable();
  cmd->add_option("--base", a.base, "two_blobs, circles or five_gaussians");
  cmd->add_option("--n", a.n, "Number of points; 0 picks 600 (800 for five_gaussians)");
  cmd->add_option("--noise-dims", a.noise_dims, "White Gaussian noise dimensions appended");
  cmd->add_option("--seed", a.seed, "Random seed");
  cmd->add_flag("--whiten", a.whiten, "Write PCA-whitened coordinates");
  cmd->add_option("--out", a.out, "Data CSV")->required();
  cmd->add_option("--labels", a.labels, "Label CSV; default <out>.labels.csv");
}

int run_generate(const CLI::App& app, const GenerateArgs& a) {
  harness::SyntheticSpec spec;
  try {
    spec.base = harness::parse_base(a.base);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  spec.n_points = a.n == 0 ? harness::default_points(spec.base) : a.n;
  spec.noise_dims = a.noise_dims;
  spec.seed = a.seed;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto ds = harness::generate(spec);
  const std::string labels = a.labels.empty() ? replace_suffix(a.out, ".labels.csv") : a.labels;
  io::write_matrix(a.out, a.whiten ? ds.data : ds.raw);
  io::write_labels(labels, ds.labels);
  write_sidecar(app, a.out);
  std::cout << "wrote " << ds.raw.rows() << " x " << ds.raw.cols() << " to " << a.out << '\n';
  return 0;
}

// fit

struct FitArgs {
  std::string data;
  std::string method = "lca";
  std::string out;
  std::string trace;
  FitFlags fit;
  StochasticFlags stochastic;
};

void add_fit(CLI::App& app, FitArgs& a) {
  auto* cmd = app.add_subcommand("fit", "Fit a metric or Gauss-Parzen model to a data CSV");
  cmd->configurable();
  cmd->add_option("--data", a.data, "Input CSV")->required();
  cmd->add_option("--method", a.method, "lca, lca-gauss or lca-gauss-red")
      ->check(CLI::IsMember({"lca", "lca-gauss", "lca-gauss-red"}));
  cmd->add_option("--out", a.out, "Model file (JSON)")->required();
  cmd->add_option("--trace", a.trace, "Optional CSV of the per-iteration objective");
  a.fit.add_to(cmd);
  a.stochastic.add_to(cmd);
}

void write_trace(const std::string& path, const io::AnyModel& model) {
  if (const auto* m = std::get_if<lca::MetricModel>(&model)) {
    CsvText csv({"step", "loo_nll", "objective"});
    for (std::size_t i = 0; i < m->loo_nll_trace.size(); ++i) {
      csv.cell(static_cast<long>(i)).cell(m->loo_nll_trace[i]).cell(m->objective_trace[i]).end();
    }
    io::write_text(path, csv.str());
  } else {
    const auto& g = std::get<lca::gauss_parzen::GaussParzenModel>(model);
    CsvText csv({"step", "bound"});
    for (std::size_t i = 0; i < g.bound_trace.size(); ++i) {
      csv.cell(static_cast<long>(i + 1)).cell(g.bound_trace[i]).end();
    }
    io::write_text(path, csv.str());
  }
}

int run_fit(const CLI::App& app, const FitArgs& a) {
  const auto cfg = a.fit.config();
  const Matrix x = io::read_matrix(a.data).values;
  lca::validate_dataset(x);
  io::AnyModel model;
  if (a.stochastic.enabled) {
    const auto scfg = a.stochastic.config(cfg.seed);
    if (a.method == "lca") {
      model = lca::stochastic::fit_stochastic(x, cfg, scfg);
    } else if (a.method == "lca-gauss") {
      model = lca::stochastic::fit_stochastic_gauss(x, cfg, scfg);
    } else {
      throw UsageError("--stochastic is not available for lca-gauss-red");
    }
  } else if (a.method == "lca") {
    model = lca::fit(x, cfg);
  } else if (a.method == "lca-gauss") {
    model = lca::gauss_parzen::fit_gauss(x, cfg);
  } else {
    model = lca::gauss_parzen::fit_gauss_red(x, cfg);
  }
  io::save_model(a.out, model);
  if (!a.trace.empty()) write_trace(a.trace, model);
  write_sidecar(app, a.out);

  std::visit(
      [&](const auto& m) {
        std::cout << "method " << a.method << ", n " << x.rows() << ", d " << x.cols()
                  << ", iterations " << m.iterations << (m.converged ? " (converged)" : "")
                  << ", loo_nll " << io::format_double(m.loo_nll) << '\n';
      },
      model);
  if (const auto* g = std::get_if<lca::gauss_parzen::GaussParzenModel>(&model)) {
    std::cout << "gaussian dims " << g->d_gauss() << ", parzen dims " << g->d_parzen() << '\n';
  }
  return 0;
}

// transform

struct TransformArgs {
  std::string data;
  std::string model;
  std::string out;
  bool parzen_only = false;
};

void add_transform(CLI::App& app, TransformArgs& a) {
  auto* cmd = app.add_subcommand("transform", "Map data through a fitted model");
  cmd->configurable();
  cmd->add_option("--data", a.data, "Input CSV")->required();
  cmd->add_option("--model", a.model, "Model file")->required();
  cmd->add_option("--out", a.out, "Output CSV")->required();
  cmd->add_flag("--parzen-only", a.parzen_only, "Keep only the Parzen coordinates of a Gauss-Parzen model");
}

int run_transform(const CLI::App& app, const TransformArgs& a) {
  const auto model = io::load_model(a.model);
  const Matrix x = io::read_matrix(a.data).values;
  Matrix y;
  if (const auto* m = std::get_if<lca::MetricModel>(&model)) {
    if (a.parzen_only) throw UsageError("--parzen-only needs a Gauss-Parzen model");
    y = lca::transform(x, *m);
  } else {
    y = lca::gauss_parzen::transform(x, std::get<lca::gauss_parzen::GaussParzenModel>(model),
                                     a.parzen_only);
  }
  io::write_matrix(a.out, y);
  write_sidecar(app, a.out);
  return 0;
}

// density

struct DensityArgs {
  std::string data;
  std::string train, valid, test;
  std::string train_idx, valid_idx, test_idx;
  std::vector<std::string> kinds;
  long train_n = 2000, valid_n = 1000, test_n = 3000;
  int runs = 20;
  std::vector<double> reg_grid;
  std::string out;
  std::string summary;
  FitFlags fit;
};

void add_density(CLI::App& app, DensityArgs& a) {
  auto* cmd = app.add_subcommand("density", "Compare density models by test negative log-likelihood");
  cmd->configurable();
  cmd->add_option("--data", a.data, "Pooled data CSV, split at random per run (or by index files)");
  cmd->add_option("--train", a.train, "Explicit training CSV");
  cmd->add_option("--valid", a.valid, "Explicit validation CSV");
  cmd->add_option("--test", a.test, "Explicit test CSV");
  cmd->add_option("--train-idx", a.train_idx, "Row indices of --data used for training");
  cmd->add_option("--valid-idx", a.valid_idx, "Row indices of --data used for validation");
  cmd->add_option("--test-idx", a.test_idx, "Row indices of --data used for testing");
  cmd->add_option("--kind", a.kinds,
                  "Models: parzen_isotropic, parzen_diagonal, parzen_full, gaussian, gauss_parzen");
  cmd->add_option("--train-n", a.train_n, "Training points per random split");
  cmd->add_option("--valid-n", a.valid_n, "Validation points per random split");
  cmd->add_option("--test-n", a.test_n, "Test points per random split");
  cmd->add_option("--runs", a.runs, "Random splits");
  cmd->add_option("--reg-grid", a.reg_grid, "Ridge values; default 10 log-spaced multiples of trace(Cov)/d");
  cmd->add_option("--out", a.out, "Per-run CSV")->required();
  cmd->add_option("--summary", a.summary, "Summary CSV; default <out>.summary.csv");
  a.fit.add_to(cmd);
}

std::vector<Eigen::Index> read_indices(const std::string& path) {
  const auto labels = io::read_labels(path);
  return {labels.begin(), labels.end()};
}

void emit_density(const density::BenchmarkTable& table, const std::string& out,
                  const std::string& summary_path) {
  CsvText rows({"kind", "run", "test_nll", "reg_nu"});
  for (const auto& r : table.rows) rows.cell(r.kind).cell(r.run).cell(r.test_nll).cell(r.reg_nu).end();
  io::write_text(out, rows.str());
  CsvText summary({"kind", "runs", "mean", "stderr"});
  for (const auto& s : table.summary()) {
    summary.cell(s.kind).cell(s.runs).cell(s.mean).cell(s.stderr_).end();
    std::printf("%-18s %4d runs  %14.6f +- %.6f\n", s.kind.c_str(), s.runs, s.mean, s.stderr_);
  }
  io::write_text(summary_path, summary.str());
}

int run_density(const CLI::App& app, const DensityArgs& a) {
  density::EvalProtocol protocol;
  protocol.train_n = a.train_n;
  protocol.valid_n = a.valid_n;
  protocol.test_n = a.test_n;
  protocol.runs = a.runs;
  protocol.reg_grid = a.reg_grid;
  protocol.fit = a.fit.config();
  protocol.seed = protocol.fit.seed;
  if (!a.kinds.empty()) {
    protocol.kinds.clear();
    try {
      for (const auto& k : a.kinds) protocol.kinds.push_back(density::parse_kind(k));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (protocol.runs < 1) throw UsageError("--runs must be positive");

  const bool explicit_files = !a.train.empty() || !a.valid.empty() || !a.test.empty();
  const bool index_files = !a.train_idx.empty() || !a.valid_idx.empty() || !a.test_idx.empty();
  density::BenchmarkTable table;
  if (explicit_files) {
    if (a.train.empty() || a.valid.empty() || a.test.empty()) {
      throw UsageError("--train, --valid and --test go together");
    }
    if (!a.data.empty() || index_files) throw UsageError("explicit split files exclude --data");
    table.rows = density::evaluate_split(io::read_matrix(a.train).values,
                                         io::read_matrix(a.valid).values,
                                         io::read_matrix(a.test).values, protocol, 0);
  } else if (index_files) {
    if (a.data.empty() || a.train_idx.empty() || a.valid_idx.empty() || a.test_idx.empty()) {
      throw UsageError("index splits need --data and all three index files");
    }
    const Matrix x = io::read_matrix(a.data).values;
    density::Splits splits{read_indices(a.train_idx), read_indices(a.valid_idx),
                           read_indices(a.test_idx)};
    density::check_disjoint(splits, x.rows());
    table.rows = density::evaluate_split(density::take_rows(x, splits.train),
                                         density::take_rows(x, splits.valid),
                                         density::take_rows(x, splits.test), protocol, 0);
  } else {
    if (a.data.empty()) throw UsageError("density needs --data or --train/--valid/--test");
    table = density::run_density_benchmark(io::read_matrix(a.data).values, protocol);
  }
  emit_density(table, a.out, a.summary.empty() ? replace_suffix(a.out, ".summary.csv") : a.summary);
  write_sidecar(app, a.out);
  return 0;
}

// bench

struct BenchArgs {
  std::string benchmark;
  std::string base = "two_blobs";
  long n = 0;
  std::vector<int> noise_dims = {0, 4, 8};
  int runs = 20;
  std::vector<std::string> methods = {"raw", "mpw", "lca", "lca-gauss", "lca-gauss-red"};
  std::vector<int> counts = {1, 0};
  std::string data;
  std::vector<double> gammas = {0.3, 0.6, 0.9};
  std::vector<long> batches = {1000, 3000, 6000};
  std::vector<long> neighs = {1000, 3000, 6000};
  long train_n = 6000;
  int epochs = 30;
  std::string out;
  std::string summary;
  FitFlags fit;
};

void add_bench(CLI::App& app, BenchArgs& a) {
  auto* cmd = app.add_subcommand("bench", "Reproduce a benchmark table as CSV");
  cmd->configurable();
  cmd->add_option("benchmark", a.benchmark, "noise-sweep, iteration-sweep or subsample-grid")
      ->required()
      ->check(CLI::IsMember({"noise-sweep", "iteration-sweep", "subsample-grid"}));
  cmd->add_option("--base", a.base, "Synthetic dataset of the clustering sweeps");
  cmd->add_option("--n", a.n, "Points per synthetic dataset; 0 picks the dataset default");
  cmd->add_option("--noise-dims", a.noise_dims, "Noise dimension grid of the clustering sweeps");
  cmd->add_option("--runs", a.runs, "Runs per cell");
  cmd->add_option("--method", a.methods, "noise-sweep methods: raw, mpw, lca, lca-gauss, lca-gauss-red");
  cmd->add_option("--counts", a.counts, "iteration-sweep EM iteration caps; 0 runs to convergence");
  cmd->add_option("--data", a.data, "subsample-grid input CSV");
  cmd->add_option("--gammas", a.gammas, "subsample-grid discount factors");
  cmd->add_option("--batches", a.batches, "subsample-grid batch sizes");
  cmd->add_option("--neighs", a.neighs, "subsample-grid neighbourhood sizes");
  cmd->add_option("--train-n", a.train_n, "subsample-grid training points per run");
  cmd->add_option("--epochs", a.epochs, "subsample-grid passes over the data");
  cmd->add_option("--out", a.out, "Per-run CSV")->required();
  cmd->add_option("--summary", a.summary, "Summary CSV; default <out>.summary.csv");
  a.fit.add_to(cmd);
}

void emit_sweep(const harness::SweepTable& table, const std::string& out,
                const std::string& summary_path) {
  CsvText rows({"method", "noise_dims", "run", "accuracy"});
  for (const auto& r : table.rows) {
    rows.cell(r.method).cell(r.noise_dims).cell(r.run).cell(r.accuracy).end();
  }
  io::write_text(out, rows.str());
  CsvText summary({"method", "noise_dims", "runs", "mean", "stderr"});
  for (const auto& s : table.summary()) {
    summary.cell(s.method).cell(s.noise_dims).cell(s.runs).cell(s.mean).cell(s.stderr_).end();
    std::printf("%-16s noise %3d  %3d runs  %7.2f +- %.2f\n", s.method.c_str(), s.noise_dims,
                s.runs, s.mean, s.stderr_);
  }
  io::write_text(summary_path, summary.str());
}

void emit_subsample(const density::SubsampleTable& table, const std::string& out,
                    const std::string& summary_path) {
  CsvText rows({"gamma", "batch", "neigh", "run", "train_diff", "test_diff"});
  for (const auto& r : table.rows) {
    rows.cell(r.gamma).cell(static_cast<long>(r.batch)).cell(static_cast<long>(r.neigh))
        .cell(r.run).cell(r.train_diff).cell(r.test_diff).end();
  }
  io::write_text(out, rows.str());
  CsvText summary({"gamma", "batch", "neigh", "runs", "train_mean", "train_stderr", "test_mean",
                   "test_stderr"});
  for (const auto& s : table.summary()) {
    summary.cell(s.gamma).cell(static_cast<long>(s.batch)).cell(static_cast<long>(s.neigh))
        .cell(s.runs).cell(s.train_mean).cell(s.train_stderr).cell(s.test_mean)
        .cell(s.test_stderr).end();
    std::printf("gamma %.2f  B %6ld  N %6ld  train %+.6f  test %+.6f\n", s.gamma,
                static_cast<long>(s.batch), static_cast<long>(s.neigh), s.train_mean, s.test_mean);
  }
  io::write_text(summary_path, summary.str());
}

int run_bench(const CLI::App& app, const BenchArgs& a) {
  const std::string summary = a.summary.empty() ? replace_suffix(a.out, ".summary.csv") : a.summary;
  const auto fit = a.fit.config();
  if (a.runs < 1) throw UsageError("--runs must be positive");
  if (a.benchmark == "subsample-grid") {
    if (a.data.empty()) throw UsageError("subsample-grid needs --data");
    density::SubsampleGridOptions opts;
    opts.gammas = a.gammas;
    opts.batches.assign(a.batches.begin(), a.batches.end());
    opts.neighs.assign(a.neighs.begin(), a.neighs.end());
    opts.runs = a.runs;
    opts.seed = fit.seed;
    opts.train_n = a.train_n;
    opts.epochs = a.epochs;
    opts.fit = fit;
    emit_subsample(density::run_subsample_grid(io::read_matrix(a.data).values, opts), a.out,
                   summary);
  } else {
    harness::SweepOptions opts;
    try {
      opts.base = harness::parse_base(a.base);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    opts.noise_dims = a.noise_dims;
    opts.runs = a.runs;
    opts.seed = fit.seed;
    opts.n_points = a.n;
    opts.fit = fit;
    if (a.benchmark == "noise-sweep") {
      std::vector<harness::Method> methods;
      try {
        for (const auto& m : a.methods) methods.push_back(harness::parse_method(m));
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      emit_sweep(harness::run_noise_sweep(opts, methods), a.out, summary);
    } else {
      emit_sweep(harness::run_iteration_sweep(opts, a.counts), a.out, summary);
    }
  }
  write_sidecar(app, a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local component analysis: metric learning for Parzen windows"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "Read flags from an INI file (every command writes one next to its output)");
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads; results do not depend on it")
      ->envname("LCA_NUM_THREADS");
  app.require_subcommand(1);

  GenerateArgs gen;
  FitArgs fit;
  TransformArgs tr;
  DensityArgs den;
  BenchArgs bench;
  add_generate(app, gen);
  add_fit(app, fit);
  add_transform(app, tr);
  add_density(app, den);
  add_bench(app, bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (threads > 0) lca::set_num_threads(threads);
    if (app.got_subcommand("generate")) return run_generate(app, gen);
    if (app.got_subcommand("fit")) return run_fit(app, fit);
    if (app.got_subcommand("transform")) return run_transform(app, tr);
    if (app.got_subcommand("density")) return run_density(app, den);
    return run_bench(app, bench);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const lca::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const lca::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
