#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "lca/lca.hpp"
#include "lca/matrix_core.hpp"
#include "lca/parallel.hpp"

using lca::Matrix;
using lca::Vector;
using testing::Rng;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

Matrix scalar(double s) { return Matrix::Constant(1, 1, s); }

// Sum_ij lam_ij (x_i - x_j)(x_i - x_j)^T / n, explicit double loop.
Matrix m_step_oracle(const Matrix& x, const Matrix& lam) {
  const Eigen::Index n = x.rows();
  Matrix s = Matrix::Zero(x.cols(), x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vector diff = (x.row(i) - x.row(j)).transpose();
      s += lam(i, j) * diff * diff.transpose();
    }
  }
  return s / static_cast<double>(n);
}

double jensen_oracle(const Matrix& x, const Matrix& lam, const Matrix& s) {
  const Eigen::Index n = x.rows();
  double v = static_cast<double>(n) * std::log(static_cast<double>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || lam(i, j) == 0.0) continue;
      v -= lam(i, j) * testing::log_normal(x.row(i).transpose(), x.row(j).transpose(), s);
      v += lam(i, j) * std::log(lam(i, j));
    }
  }
  return v;
}

lca::FitConfig exact_config(int max_iter, double nu = 0.0) {
  lca::FitConfig cfg;
  cfg.max_iter = max_iter;
  cfg.rel_tol = 1e-300;
  cfg.reg_nu = nu;
  return cfg;
}

}  // namespace

TEST_SUITE("lca") {

TEST_CASE("loo_nll two-point closed form") {
  const double expected = 2.0 * (0.5 * std::log(2.0 * std::numbers::pi) + 0.5);
  CHECK(lca::loo_nll(column({0.0, 1.0}), scalar(1.0)) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(2.837877).epsilon(1e-6));
}

TEST_CASE("loo_nll matches direct summation over covariance scalings") {
  const Matrix x = column({-0.3, 0.4, 1.7});
  for (double c : {0.05, 0.3, 1.0, 2.5, 10.0}) {
    CHECK(lca::loo_nll(x, scalar(c)) == doctest::Approx(testing::loo_nll_oracle(x, scalar(c))).epsilon(1e-12));
  }
  Rng rng(4);
  const Matrix y = testing::gaussian(30, 3, rng);
  const Matrix s = testing::random_spd(3, rng);
  CHECK(lca::loo_nll(y, s) == doctest::Approx(testing::loo_nll_oracle(y, s)).epsilon(1e-10));
}

TEST_CASE("loo_nll is translation invariant") {
  Rng rng(8);
  const Matrix x = testing::gaussian(40, 4, rng);
  const Matrix s = testing::random_spd(4, rng);
  const Eigen::RowVectorXd shift = Eigen::RowVectorXd::Constant(4, 37.5);
  const Matrix moved = x.rowwise() + shift;
  CHECK(std::abs(lca::loo_nll(moved, s) - lca::loo_nll(x, s)) < 1e-10 * std::abs(lca::loo_nll(x, s)));
}

TEST_CASE("loo_nll stays finite in high dimension") {
  Rng rng(12);
  const Matrix x = testing::gaussian(50, 200, rng) * 30.0;
  const double v = lca::loo_nll(x, Matrix::Identity(200, 200) * 1e-2);
  CHECK(std::isfinite(v));
}

TEST_CASE("loo_nll rejects singular covariance and bad data") {
  CHECK_THROWS_WITH_AS(lca::loo_nll(column({0.0, 1.0}), scalar(0.0)),
                       doctest::Contains("degenerate metric"), lca::NumericalError);
  CHECK_THROWS_AS(lca::loo_nll(column({0.0}), scalar(1.0)), lca::DataError);
  CHECK_THROWS_AS(lca::loo_nll(column({0.0, std::nan("")}), scalar(1.0)), lca::DataError);
  CHECK_THROWS_AS(lca::loo_nll(column({0.0, 1.0}), Matrix::Identity(2, 2)), lca::DataError);
}

TEST_CASE("e_step examples") {
  const Matrix lam2 = lca::e_step(column({0.0, 5.0}), scalar(0.01)).lam;
  CHECK(lam2(0, 0) == 0.0);
  CHECK(lam2(0, 1) == 1.0);
  CHECK(lam2(1, 0) == 1.0);

  const Matrix lam3 = lca::e_step(column({0.0, 1.0, 2.0}), scalar(1.0)).lam;
  const double expected = std::exp(-0.5) / (std::exp(-0.5) + std::exp(-2.0));
  CHECK(lam3(0, 1) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(0.817574).epsilon(1e-6));

  Matrix tri(3, 2);
  tri << 0.0, 0.0, 1.0, 0.0, 0.5, std::sqrt(3.0) / 2.0;
  const Matrix lam_t = lca::e_step(tri, Matrix::Identity(2, 2)).lam;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(lam_t(i, j) == doctest::Approx(i == j ? 0.0 : 0.5).epsilon(1e-14));
}

TEST_CASE("e_step invariants on random data, including underflow") {
  Rng rng(13);
  for (double scale : {1.0, 1e3}) {
    const Matrix x = testing::gaussian(60, 5, rng) * scale;
    const Matrix lam = lca::e_step(x, testing::random_spd(5, rng)).lam;
    for (Eigen::Index i = 0; i < lam.rows(); ++i) {
      CHECK(lam(i, i) == 0.0);
      CHECK(std::abs(lam.row(i).sum() - 1.0) < 1e-12);
    }
    CHECK(lam.minCoeff() >= 0.0);
    CHECK(lam.maxCoeff() <= 1.0);
  }
}

TEST_CASE("m_step examples") {
  const Matrix two = column({0.0, 1.0});
  const Matrix s = lca::m_step(two, lca::e_step(two, scalar(1.0)), 0.0);
  CHECK(s(0, 0) == doctest::Approx(1.0).epsilon(1e-14));

  const Matrix same = Matrix::Constant(4, 2, 3.0);
  const Matrix lam = Matrix::Constant(4, 4, 1.0 / 3.0) - Matrix::Identity(4, 4) / 3.0;
  CHECK(lca::m_step(same, {lam}, 0.0).cwiseAbs().maxCoeff() < 1e-14);

  const Matrix three = column({0.0, 1.0, 2.0});
  const auto resp = lca::e_step(three, scalar(1.0));
  const Matrix expected = m_step_oracle(three, resp.lam);
  CHECK(std::abs(lca::m_step(three, resp, 0.0)(0, 0) - expected(0, 0)) < 1e-12);
  CHECK(lca::m_step(three, resp, 0.25)(0, 0) == doctest::Approx(expected(0, 0) + 0.25));
}

TEST_CASE("m_step matches the double sum for random responsibilities") {
  Rng rng(15);
  const Matrix x = testing::gaussian(300, 4, rng) + Matrix::Constant(300, 4, 50.0);
  const Matrix lam = testing::random_responsibilities(300, rng);
  CHECK(testing::rel_diff(lca::m_step(x, {lam}, 0.0), m_step_oracle(x, lam)) < 1e-10);
}

TEST_CASE("jensen_bound matches the explicit formula and dominates loo_nll") {
  Rng rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix x = testing::gaussian(25, 2, rng);
    const Matrix s = testing::random_spd(2, rng);
    const Matrix uniform = (Matrix::Ones(25, 25) - Matrix::Identity(25, 25)) / 24.0;
    const double bound = lca::jensen_bound(x, {uniform}, s);
    CHECK(bound == doctest::Approx(jensen_oracle(x, uniform, s)).epsilon(1e-11));
    CHECK(bound >= lca::loo_nll(x, s) - 1e-9);
    const auto opt = lca::e_step(x, s);
    CHECK(lca::jensen_bound(x, opt, s) == doctest::Approx(lca::loo_nll(x, s)).epsilon(1e-11));
  }
  const Matrix two = column({0.0, 3.0});
  const Matrix forced = (Matrix(2, 2) << 0.0, 1.0, 1.0, 0.0).finished();
  for (double c : {0.1, 1.0, 7.0}) {
    CHECK(lca::jensen_bound(two, {forced}, scalar(c)) == doctest::Approx(lca::loo_nll(two, scalar(c))));
  }
}

TEST_CASE("m_step minimizes the bound for fixed responsibilities") {
  Rng rng(19);
  const Matrix x = testing::gaussian(30, 3, rng);
  const auto lam = lca::e_step(x, testing::random_spd(3, rng));
  const Matrix star = lca::m_step(x, lam, 0.0);
  const double at_star = lca::jensen_bound(x, lam, star);
  for (int rep = 0; rep < 100; ++rep) {
    Matrix delta = testing::gaussian(3, 3, rng);
    delta = 0.5 * (delta + delta.transpose());
    CHECK(at_star <= lca::jensen_bound(x, lam, star + 1e-3 * delta) + 1e-12 * std::abs(at_star));
  }
}

TEST_CASE("fit: two points reach the fixed point after one iteration") {
  const Matrix two = (Matrix(2, 2) << 0.0, 0.0, 1.0, 2.0).finished();
  const double nu = 0.01;
  Matrix expected(2, 2);
  expected << 1.0, 2.0, 2.0, 4.0;
  expected.diagonal().array() += nu;
  const auto one = lca::fit(two, exact_config(1, nu));
  CHECK(testing::rel_diff(one.sigma, expected) < 1e-12);
  // The stopping rule needs one more step to see that nothing moves.
  lca::FitConfig cfg;
  cfg.reg_nu = nu;
  const auto model = lca::fit(two, cfg);
  CHECK(testing::rel_diff(model.sigma, expected) < 1e-12);
  CHECK(model.converged);
  CHECK(model.iterations == 2);
}

TEST_CASE("fit: max_iter 1 is one M-step from the global covariance") {
  Rng rng(23);
  const Matrix x = testing::gaussian(80, 3, rng);
  const double nu = 1e-3;
  const auto mpw = lca::fit(x, exact_config(1, nu));
  Matrix s0 = lca::linalg::covariance(x);
  s0.diagonal().array() += nu;
  const Matrix s1 = lca::m_step(x, lca::e_step(x, s0), nu);
  CHECK(testing::rel_diff(mpw.sigma, s1) < 1e-12);
  CHECK(mpw.iterations == 1);
  CHECK(mpw.loo_nll_trace.size() == 2);
  CHECK(mpw.loo_nll == doctest::Approx(lca::loo_nll(x, s1)).epsilon(1e-12));
}

TEST_CASE("fit: loo_nll never increases without regularization") {
  Rng rng(29);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix x = testing::gaussian(70, 4, rng) * testing::random_spd(4, rng);
    const auto m = lca::fit(x, exact_config(30));
    for (std::size_t t = 1; t < m.loo_nll_trace.size(); ++t) {
      const double prev = m.loo_nll_trace[t - 1];
      CHECK(m.loo_nll_trace[t] <= prev + 1e-8 * std::abs(prev));
    }
  }
}

TEST_CASE("fit: the regularized objective never increases with nu > 0") {
  Rng rng(31);
  const Matrix x = testing::gaussian(60, 3, rng);
  const auto m = lca::fit(x, exact_config(40, 0.2));
  for (std::size_t t = 1; t < m.objective_trace.size(); ++t) {
    CHECK(m.objective_trace[t] <= m.objective_trace[t - 1] + 1e-10 * std::abs(m.objective_trace[t - 1]));
  }
  CHECK(m.objective_trace.back() ==
        doctest::Approx(lca::regularized_objective(x, m.sigma, 0.2)).epsilon(1e-12));
}

TEST_CASE("fit: isotropic Gaussian sample gives a near-scalar metric") {
  Rng rng(37);
  const Matrix x = testing::gaussian(1500, 3, rng);
  const auto m = lca::fit(x);
  // The leave-one-out optimum is flat in the off-diagonal directions: across
  // seeds the off/on-diagonal ratio of the exact optimum ranges from about
  // 0.04 to 0.27 at this size, so the check bounds the spread of the spectrum.
  const Vector ev = lca::linalg::sym_eig(m.sigma).values;
  CHECK(ev(2) / ev(0) < 2.0);
  CHECK(m.converged);
  // It is the optimum and not a stall: one more EM step barely moves it.
  const Matrix next = lca::m_step(x, lca::e_step(x, m.sigma), m.reg_nu);
  CHECK(testing::rel_diff(next, m.sigma) < 1e-3);
}

TEST_CASE("fit: stopping rule and config echo") {
  Rng rng(41);
  const Matrix x = testing::gaussian(50, 2, rng);
  lca::FitConfig cfg;
  cfg.rel_tol = 1e-3;
  const auto m = lca::fit(x, cfg);
  CHECK(m.converged);
  CHECK(m.config == cfg);
  CHECK(m.reg_nu == doctest::Approx(lca::default_reg_nu(x)));
  const auto& tr = m.objective_trace;
  CHECK(tr[tr.size() - 2] - tr.back() < 1e-3 * std::abs(tr[tr.size() - 2]));
  CHECK(m.loo_nll == m.loo_nll_trace.back());
}

TEST_CASE("fit: the precision factor is consistent with sigma") {
  Rng rng(43);
  const Matrix x = testing::gaussian(60, 4, rng);
  const auto m = lca::fit(x);
  const Matrix prod = m.precision_factor.transpose() * m.precision_factor;
  CHECK(testing::rel_diff(prod, m.sigma.inverse()) < 1e-8);
}

TEST_CASE("fit: structures stay diagonal or scalar") {
  Rng rng(47);
  const Matrix x = testing::gaussian(60, 3, rng) * testing::random_spd(3, rng);
  lca::FitConfig cfg;
  cfg.structure = lca::CovarianceStructure::diagonal;
  const auto d = lca::fit(x, cfg);
  Matrix off = d.sigma;
  off.diagonal().setZero();
  CHECK(off.cwiseAbs().maxCoeff() == 0.0);
  cfg.structure = lca::CovarianceStructure::isotropic;
  const auto iso = lca::fit(x, cfg);
  CHECK(iso.sigma(0, 0) == iso.sigma(2, 2));
}

TEST_CASE("fit: rejects invalid input") {
  CHECK_THROWS_AS(lca::fit(column({1.0})), lca::DataError);
  lca::FitConfig cfg;
  cfg.rel_tol = 0.0;
  CHECK_THROWS_AS(lca::fit(column({1.0, 2.0}), cfg), std::invalid_argument);
  cfg = {};
  cfg.max_iter = 0;
  CHECK_THROWS_AS(lca::fit(column({1.0, 2.0}), cfg), std::invalid_argument);
}

TEST_CASE("fit: results do not depend on the thread count") {
  Rng rng(53);
  const Matrix x = testing::gaussian(400, 5, rng);
  lca::set_num_threads(1);
  const auto one = lca::fit(x, exact_config(5));
  lca::set_num_threads(4);
  const auto four = lca::fit(x, exact_config(5));
  lca::set_num_threads(0);
  CHECK(one == four);
}

TEST_CASE("transform examples") {
  Rng rng(59);
  const Matrix x = testing::gaussian(10, 2, rng);
  const auto id = lca::make_metric_model(x, Matrix::Identity(2, 2));
  CHECK(testing::rel_diff(lca::transform(x, id), x) < 1e-15);

  const auto diag = lca::make_metric_model(x, (Matrix(2, 2) << 4.0, 0.0, 0.0, 1.0).finished());
  const Matrix y = lca::transform(x, diag);
  CHECK(testing::rel_diff(y.col(0), x.col(0) / 2.0) < 1e-15);
  CHECK(testing::rel_diff(y.col(1), x.col(1)) < 1e-15);

  const Matrix s = testing::random_spd(2, rng);
  const auto m = lca::make_metric_model(x, s);
  const Matrix t = lca::transform(x, m);
  const Matrix inv = s.inverse();
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const Vector diff = (x.row(i) - x.row(j)).transpose();
      CHECK(std::abs(diff.dot(inv * diff) - (t.row(i) - t.row(j)).squaredNorm()) < 1e-8);
    }
  }
  CHECK_THROWS_AS(lca::transform(Matrix::Zero(3, 3), m), lca::DataError);
}

TEST_CASE("one EM step is equivariant under linear reparametrization") {
  Rng rng(61);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix x = testing::gaussian(40, 3, rng);
    const Matrix a = testing::gaussian(3, 3, rng) + 2.0 * Matrix::Identity(3, 3);
    const Matrix ax = x * a.transpose();
    const Matrix s0 = testing::random_spd(3, rng);
    const Matrix s1 = lca::m_step(x, lca::e_step(x, s0), 0.0);
    const Matrix as0 = a * s0 * a.transpose();
    const Matrix as1 = lca::m_step(ax, lca::e_step(ax, as0), 0.0);
    CHECK(testing::rel_diff(as1, a * s1 * a.transpose()) < 1e-8);
    const double shift = 40.0 * std::log(std::abs(a.determinant()));
    CHECK(lca::loo_nll(ax, as1) - lca::loo_nll(x, s1) == doctest::Approx(shift).epsilon(1e-9));
  }
}

}  // TEST_SUITE
