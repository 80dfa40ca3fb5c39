#include <pybind11/eigen.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lca/errors.hpp"
#include "lca/eval_harness.hpp"
#include "lca/gauss_parzen.hpp"
#include "lca/io.hpp"
#include "lca/lca.hpp"
#include "lca/parallel.hpp"
#include "lca/stochastic.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace gp = lca::gauss_parzen;
namespace st = lca::stochastic;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Local component analysis core";

  py::register_exception<lca::DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<lca::NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::enum_<lca::CovarianceStructure>(m, "CovarianceStructure")
      .value("full", lca::CovarianceStructure::full)
      .value("diagonal", lca::CovarianceStructure::diagonal)
      .value("isotropic", lca::CovarianceStructure::isotropic);

  py::class_<lca::FitConfig>(m, "FitConfig")
      .def(py::init<>())
      .def_readwrite("max_iter", &lca::FitConfig::max_iter)
      .def_readwrite("rel_tol", &lca::FitConfig::rel_tol)
      .def_readwrite("reg_nu", &lca::FitConfig::reg_nu)
      .def_readwrite("reg_nu_global", &lca::FitConfig::reg_nu_global)
      .def_readwrite("seed", &lca::FitConfig::seed)
      .def_readwrite("structure", &lca::FitConfig::structure)
      .def_readwrite("probe_iters", &lca::FitConfig::probe_iters)
      .def("validate", &lca::FitConfig::validate)
      .def(py::self == py::self);

  py::class_<st::StochasticConfig>(m, "StochasticConfig")
      .def(py::init<>())
      .def_readwrite("gamma", &st::StochasticConfig::gamma)
      .def_readwrite("batch_size", &st::StochasticConfig::batch_size)
      .def_readwrite("neigh_size", &st::StochasticConfig::neigh_size)
      .def_readwrite("seed", &st::StochasticConfig::seed)
      .def_readwrite("epochs", &st::StochasticConfig::epochs)
      .def_readwrite("track_objective", &st::StochasticConfig::track_objective)
      .def("validate", &st::StochasticConfig::validate);

  py::class_<lca::MetricModel>(m, "MetricModel")
      .def_readonly("sigma", &lca::MetricModel::sigma)
      .def_readonly("precision_factor", &lca::MetricModel::precision_factor)
      .def_readonly("loo_nll", &lca::MetricModel::loo_nll)
      .def_readonly("loo_nll_trace", &lca::MetricModel::loo_nll_trace)
      .def_readonly("objective_trace", &lca::MetricModel::objective_trace)
      .def_readonly("iterations", &lca::MetricModel::iterations)
      .def_readonly("converged", &lca::MetricModel::converged)
      .def_readonly("reg_nu", &lca::MetricModel::reg_nu)
      .def_readonly("config", &lca::MetricModel::config)
      .def(py::self == py::self);

  py::class_<gp::GaussParzenModel>(m, "GaussParzenModel")
      .def_readonly("b_g", &gp::GaussParzenModel::b_g)
      .def_readonly("b_l", &gp::GaussParzenModel::b_l)
      .def_readonly("mu", &gp::GaussParzenModel::mu)
      .def_readonly("eigvals", &gp::GaussParzenModel::eigvals)
      .def_readonly("bound_trace", &gp::GaussParzenModel::bound_trace)
      .def_readonly("loo_nll", &gp::GaussParzenModel::loo_nll)
      .def_readonly("iterations", &gp::GaussParzenModel::iterations)
      .def_readonly("converged", &gp::GaussParzenModel::converged)
      .def_readonly("reg_nu", &gp::GaussParzenModel::reg_nu)
      .def_readonly("reg_nu_global", &gp::GaussParzenModel::reg_nu_global)
      .def_readonly("config", &gp::GaussParzenModel::config)
      .def_property_readonly("d_gauss", &gp::GaussParzenModel::d_gauss)
      .def_property_readonly("d_parzen", &gp::GaussParzenModel::d_parzen)
      .def("basis", &gp::GaussParzenModel::basis)
      .def(py::self == py::self);

  py::class_<gp::SplitResult>(m, "SplitResult")
      .def_readonly("b_g", &gp::SplitResult::b_g)
      .def_readonly("b_l", &gp::SplitResult::b_l)
      .def_readonly("eigvals", &gp::SplitResult::eigvals)
      .def_readonly("eigvecs", &gp::SplitResult::eigvecs)
      .def_readonly("objective_value", &gp::SplitResult::objective_value);

  m.def("loo_nll", &lca::loo_nll, "data"_a, "sigma"_a,
        "Leave-one-out negative log-likelihood of a Gaussian Parzen window.");
  m.def(
      "e_step", [](const lca::Matrix& x, const lca::Matrix& s) { return lca::e_step(x, s).lam; },
      "data"_a, "sigma"_a, "Leave-one-out responsibilities (n x n, rows sum to one).");
  m.def(
      "m_step",
      [](const lca::Matrix& x, const lca::Matrix& lam, double nu) {
        return lca::m_step(x, lca::Responsibilities{lam}, nu);
      },
      "data"_a, "lam"_a, "nu"_a = 0.0);
  m.def(
      "jensen_bound",
      [](const lca::Matrix& x, const lca::Matrix& lam, const lca::Matrix& s) {
        return lca::jensen_bound(x, lca::Responsibilities{lam}, s);
      },
      "data"_a, "lam"_a, "sigma"_a);

  m.def("fit", py::overload_cast<const lca::Matrix&, const lca::FitConfig&>(&lca::fit), "data"_a,
        "config"_a = lca::FitConfig{}, py::call_guard<py::gil_scoped_release>());
  m.def("fit_gauss",
        py::overload_cast<const lca::Matrix&, const lca::FitConfig&>(&gp::fit_gauss), "data"_a,
        "config"_a = lca::FitConfig{}, py::call_guard<py::gil_scoped_release>());
  m.def("fit_gauss_red", &gp::fit_gauss_red, "data"_a, "config"_a = lca::FitConfig{},
        py::call_guard<py::gil_scoped_release>());
  m.def("fit_stochastic", &st::fit_stochastic, "data"_a, "config"_a = lca::FitConfig{},
        "stochastic"_a = st::StochasticConfig{}, py::call_guard<py::gil_scoped_release>());
  m.def("fit_stochastic_gauss", &st::fit_stochastic_gauss, "data"_a,
        "config"_a = lca::FitConfig{}, "stochastic"_a = st::StochasticConfig{},
        py::call_guard<py::gil_scoped_release>());
  m.def("split_solve", &gp::split_solve, "m1"_a, "m2"_a);
  m.def("gp_nll", &gp::gp_nll, "data"_a, "model"_a, "leave_one_out"_a = true);

  m.def(
      "transform",
      [](const lca::Matrix& x, const lca::MetricModel& model) { return lca::transform(x, model); },
      "data"_a, "model"_a);
  m.def(
      "transform",
      [](const lca::Matrix& x, const gp::GaussParzenModel& model, bool parzen_only) {
        return gp::transform(x, model, parzen_only);
      },
      "data"_a, "model"_a, "parzen_only"_a = false);

  m.def(
      "generate",
      [](const std::string& base, long n, int noise_dims, std::uint64_t seed) {
        lca::harness::SyntheticSpec spec;
        spec.base = lca::harness::parse_base(base);
        spec.n_points = n == 0 ? lca::harness::default_points(spec.base) : n;
        spec.noise_dims = noise_dims;
        spec.seed = seed;
        auto ds = lca::harness::generate(spec);
        return py::make_tuple(ds.data, ds.raw, ds.labels, ds.k);
      },
      "base"_a = "two_blobs", "n"_a = 0, "noise_dims"_a = 0, "seed"_a = 0,
      "Returns (whitened, raw, labels, k).");
  m.def(
      "spectral_cluster",
      [](const lca::Matrix& x, int k, std::uint64_t seed) {
        return lca::harness::spectral_cluster(x, k, seed);
      },
      "data"_a, "k"_a, "seed"_a = 0, py::call_guard<py::gil_scoped_release>());
  m.def("clustering_accuracy", &lca::harness::clustering_accuracy, "assignments"_a, "labels"_a,
        "k"_a);

  m.def(
      "serialize", [](const lca::MetricModel& model) { return lca::io::serialize(model); },
      "model"_a);
  m.def(
      "serialize", [](const gp::GaussParzenModel& model) { return lca::io::serialize(model); },
      "model"_a);
  m.def(
      "deserialize",
      [](const std::string& text) -> py::object {
        auto model = lca::io::deserialize(text);
        return std::visit([](auto&& v) { return py::cast(std::move(v)); }, std::move(model));
      },
      "text"_a);

  m.def("set_num_threads", &lca::set_num_threads, "threads"_a);
}
