#include <doctest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "unitavg/error.hpp"
#include "unitavg/lamse.hpp"

using namespace unitavg;
using testing::make_fit;
using testing::scalar_fit;

namespace {

// Entry-by-entry psi: d1'(T (th_i - th_1)(th_j - th_1)' + [i == j] V_i) d1.
Eigen::MatrixXd psi_entrywise(const std::vector<UnitFit>& fits, const Eigen::VectorXd& d1, double T) {
  const auto n = static_cast<Eigen::Index>(fits.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd di = fits[i].theta - fits[0].theta;
      const Eigen::VectorXd dj = fits[j].theta - fits[0].theta;
      Eigen::MatrixXd m = T * di * dj.transpose();
      if (i == j) m += fits[i].V;
      out(i, j) = d1.dot(m * d1);
    }
  }
  return out;
}

// Large-N criterion evaluated term by term: w' psi w + (s B - 2 sum_i w_i b_i) s B,
// with s the tail mass, b_i the unit biases and B the tail bias.
double large_direct(const std::vector<UnitFit>& fits, const Eigen::VectorXd& d1, double T,
                    const std::vector<std::size_t>& order, std::size_t nbar, const Eigen::VectorXd& w) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(fits[0].theta.size());
  for (const auto& f : fits) mean += f.theta;
  mean /= static_cast<double>(fits.size());
  const double B = std::sqrt(T) * d1.dot(fits[0].theta - mean);
  double quad = 0.0, cross = 0.0;
  for (std::size_t a = 0; a < nbar; ++a) {
    const auto& fa = fits[order[a]];
    const double ba = std::sqrt(T) * d1.dot(fa.theta - fits[0].theta);
    cross += w(a) * ba;
    for (std::size_t c = 0; c < nbar; ++c) {
      const auto& fc = fits[order[c]];
      const double bc = std::sqrt(T) * d1.dot(fc.theta - fits[0].theta);
      quad += w(a) * w(c) * (ba * bc + (a == c ? d1.dot(fa.V * d1) : 0.0));
    }
  }
  const double s = 1.0 - w.sum();
  return quad + (s * B - 2.0 * cross) * s * B;
}

std::vector<UnitFit> psi_fixture() {
  return {make_fit(Eigen::Vector2d(1, 0), Eigen::Matrix2d::Identity()),
          make_fit(Eigen::Vector2d(1.5, 0), Eigen::Matrix2d::Identity())};
}

std::vector<UnitFit> large_fixture() {
  return {scalar_fit(0, 1), scalar_fit(1, 1), scalar_fit(2, 1)};
}

}  // namespace

TEST_CASE("psi_hat fixture") {
  const auto fits = psi_fixture();
  const LamseFixedN obj = build_psi_hat(fits, Coordinate{0}, 4.0);
  const Eigen::MatrixXd oracle = psi_entrywise(fits, Eigen::Vector2d(1, 0), 4.0);
  Eigen::Matrix2d frozen;
  frozen << 1, 0, 0, 2;
  CHECK((oracle - frozen).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((obj.psi - frozen).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(obj.bias(0) == 0.0);
  CHECK(obj.bias(1) == doctest::Approx(1.0));
  CHECK(obj.var == Eigen::Vector2d(1, 1));
}

TEST_CASE("psi_hat: single unit and focus scaling") {
  CounterRng rng(1, {});
  const auto one = testing::random_fits(rng, 1, 3);
  const Focus f(AffineConditionalMean{Eigen::Vector3d(0.5, -1, 2), 0.3});
  const LamseFixedN o = build_psi_hat(one, f, 50.0);
  REQUIRE(o.psi.rows() == 1);
  const Eigen::Vector3d d(0.5, -1, 2);
  CHECK(o.psi(0, 0) == doctest::Approx(d.dot(one[0].V * d)).epsilon(1e-14));

  const auto fits = testing::random_fits(rng, 5, 3);
  const Focus f3(AffineConditionalMean{3.0 * d, 7.0});
  const Eigen::MatrixXd base = build_psi_hat(fits, f, 50.0).psi;
  const Eigen::MatrixXd scaled = build_psi_hat(fits, f3, 50.0).psi;
  CHECK((scaled - 9.0 * base).cwiseAbs().maxCoeff() <= 1e-12 * base.cwiseAbs().maxCoeff());
}

TEST_CASE("psi_tilde fixture and definitional difference") {
  const auto fits = psi_fixture();
  const Eigen::MatrixXd pt = build_psi_tilde(fits, Coordinate{0}, 4.0).psi_tilde;
  Eigen::Matrix2d frozen;
  frozen << -2, -1, -1, -1;
  CHECK((pt - frozen).cwiseAbs().maxCoeff() <= 1e-12);
  // Indefinite: det = 1 > 0 but trace < 0, so both eigenvalues are negative.
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(frozen).eigenvalues();
  CHECK(ev(0) < 0.0);
  const Eigen::Vector2d ev_built = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(pt).eigenvalues();
  CHECK(ev_built(0) < 0.0);

  CounterRng rng(2, {});
  const auto many = testing::random_fits(rng, 6, 2);
  const Focus f(LongRunEffect{0, 1});
  auto fixed = many;
  for (auto& x : fixed) x.theta(1) = 0.3 * x.theta(1) / (1.0 + std::abs(x.theta(1)));
  const LamseFixedN ph = build_psi_hat(fixed, f, 30.0);
  // The bias part of psi_hat minus psi_tilde carries the variance corrections.
  const Eigen::MatrixXd diff =
      ph.bias * ph.bias.transpose() - build_psi_tilde(fixed, f, 30.0).psi_tilde;
  const Eigen::MatrixXd full_diff = ph.psi - build_psi_tilde(fixed, f, 30.0).psi_tilde;
  const Eigen::VectorXd& d1 = ph.d1;
  for (Eigen::Index i = 0; i < 6; ++i) {
    for (Eigen::Index j = 0; j < 6; ++j) {
      const double expect = i == j ? d1.dot((fixed[i].V + fixed[0].V) * d1) : d1.dot(fixed[0].V * d1);
      CHECK(diff(i, j) == doctest::Approx(expect).epsilon(1e-12));
      const double full = expect + (i == j ? d1.dot(fixed[i].V * d1) : 0.0);
      CHECK(full_diff(i, j) == doctest::Approx(full).epsilon(1e-12));
    }
  }
}

TEST_CASE("large-N fixture") {
  const auto fits = large_fixture();
  const LamseLargeN q = build_largeN_objective(fits, Coordinate{0}, 1.0, 1);
  CHECK((q.q - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(q.tail_bias == doctest::Approx(-1.0));
  CHECK(q.N == 3);
  CHECK(q.nbar == 1);
  CHECK(evaluate_lamse(q, Eigen::VectorXd::Constant(1, 0.5)) == doctest::Approx(0.5).epsilon(1e-15));
  const double direct = large_direct(fits, Eigen::VectorXd::Ones(1), 1.0, {0, 1, 2}, 1,
                                     Eigen::VectorXd::Constant(1, 0.5));
  CHECK(direct == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("large-N: regime errors and ordering checks") {
  const auto fits = large_fixture();
  CHECK_THROWS_AS(build_largeN_objective(fits, Coordinate{0}, 1.0, 3), RegimeError);
  CHECK_THROWS(build_largeN_objective(fits, Coordinate{0}, 1.0, 1, {1, 0, 2}));
  CHECK_THROWS(build_largeN_objective(fits, Coordinate{0}, 1.0, 1, {0, 0, 2}));
  CHECK_THROWS(build_largeN_objective(fits, Coordinate{0}, 1.0, 1, {0, 1}));
  const LamseLargeN zero = build_largeN_objective(fits, Coordinate{0}, 1.0, 0);
  REQUIRE(zero.q.rows() == 1);
  CHECK(zero.q(0, 0) == doctest::Approx(1.0));
  CHECK(evaluate_lamse(zero, Eigen::VectorXd(0)) == doctest::Approx(1.0));
}

TEST_CASE("evaluate_lamse examples and feasibility") {
  const auto fits = psi_fixture();
  const LamseFixedN obj = build_psi_hat(fits, Coordinate{0}, 4.0);
  CHECK(evaluate_lamse(obj, Eigen::Vector2d(1, 0)) == doctest::Approx(1.0));
  CHECK(evaluate_lamse(obj, Eigen::Vector2d(2.0 / 3, 1.0 / 3)) == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK_THROWS_AS(evaluate_lamse(obj, Eigen::Vector2d(0.6, 0.6)), InfeasibleWeightsError);
  CHECK_THROWS_AS(evaluate_lamse(obj, Eigen::Vector2d(1.1, -0.1)), InfeasibleWeightsError);
  CHECK_THROWS_AS(evaluate_lamse(obj, Eigen::Vector3d(1, 0, 0)), DimensionError);
  CHECK_NOTHROW(evaluate_lamse(obj, Eigen::Vector2d(1.0 + 5e-11, -5e-11)));

  const LamseLargeN q = build_largeN_objective(large_fixture(), Coordinate{0}, 1.0, 1);
  CHECK_THROWS_AS(evaluate_lamse(q, Eigen::VectorXd::Constant(1, 1.2)), InfeasibleWeightsError);
  CHECK_THROWS_AS(evaluate_lamse(q, Eigen::VectorXd::Constant(1, -0.2)), InfeasibleWeightsError);
}

TEST_CASE("focus singularity at the target is reported") {
  const std::vector<UnitFit> fits{make_fit(Eigen::Vector2d(1, 1.0), Eigen::Matrix2d::Identity(), "t"),
                                  make_fit(Eigen::Vector2d(1, 0.5), Eigen::Matrix2d::Identity(), "d")};
  try {
    build_psi_hat(fits, LongRunEffect{0, 1}, 10.0);
    FAIL("expected FocusSingularityError");
  } catch (const FocusSingularityError& e) {
    CHECK(std::string(e.what()).find("'t'") != std::string::npos);
  }
  const std::vector<UnitFit> bad{make_fit(Eigen::Vector2d(1, 0), Eigen::Matrix2d::Identity()),
                                 scalar_fit(0, 1)};
  CHECK_THROWS_AS(build_psi_hat(bad, Coordinate{0}, 1.0), DimensionError);
}

TEST_CASE("property: structural identity and positive definiteness") {
  CounterRng rng(31, {});
  for (int inst = 0; inst < 500; ++inst) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 8);
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.uniform() * 4);
    const auto fits = testing::random_fits(rng, n, p, rng.exponential());
    const Focus f(AffineConditionalMean{testing::random_vector(rng, p), 0.0});
    const double T = 10.0 + 1000.0 * rng.uniform();
    const LamseFixedN o = build_psi_hat(fits, f, T);
    const Eigen::MatrixXd structural =
        o.bias * o.bias.transpose() + Eigen::MatrixXd(o.var.asDiagonal());
    const double scale = o.psi.cwiseAbs().maxCoeff();
    CHECK((o.psi - structural).cwiseAbs().maxCoeff() <= 1e-12 * scale);
    CHECK((o.psi - psi_entrywise(fits, o.d1, T)).cwiseAbs().maxCoeff() <= 1e-10 * scale);
    CHECK(o.bias(0) == 0.0);
    CHECK(o.var.minCoeff() > 0.0);
    CHECK(Eigen::LLT<Eigen::MatrixXd>(o.psi).info() == Eigen::Success);
  }
}

TEST_CASE("property: Q-hat reproduces the large-N criterion and its blocks") {
  CounterRng rng(37, {});
  for (int inst = 0; inst < 300; ++inst) {
    const std::size_t N = 2 + static_cast<std::size_t>(rng.uniform() * 10);
    const std::size_t nbar = static_cast<std::size_t>(rng.uniform() * static_cast<double>(N));
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.uniform() * 3);
    const auto fits = testing::random_fits(rng, N, p, 0.5);
    const Focus f(AffineConditionalMean{testing::random_vector(rng, p), 1.0});
    const double T = 1.0 + 100.0 * rng.uniform();

    // Random ordering with the target among the first nbar units.
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t k = N - 1; k > 0; --k) {
      std::swap(order[k], order[static_cast<std::size_t>(rng.uniform() * static_cast<double>(k + 1))]);
    }
    if (nbar > 0) {
      const auto pos = std::find(order.begin(), order.end(), 0) - order.begin();
      const auto dest = static_cast<std::ptrdiff_t>(rng.uniform() * static_cast<double>(nbar));
      std::swap(order[static_cast<std::size_t>(pos)], order[static_cast<std::size_t>(dest)]);
    }
    const LamseLargeN q = build_largeN_objective(fits, f, T, nbar, order);
    const auto ni = static_cast<Eigen::Index>(nbar);
    const LamseFixedN full = build_psi_hat(fits, f, T);
    for (Eigen::Index a = 0; a < ni; ++a)
      for (Eigen::Index c = 0; c < ni; ++c)
        CHECK(q.q(a, c) == doctest::Approx(full.psi(order[a], order[c])).epsilon(1e-12));
    CHECK(q.q(ni, ni) == doctest::Approx(q.tail_bias * q.tail_bias).epsilon(1e-12));
    CHECK((q.q - q.q.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q.q).eigenvalues()(0) >=
          -1e-10 * q.q.cwiseAbs().maxCoeff());

    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd x(ni + 1);
      for (Eigen::Index j = 0; j <= ni; ++j) x(j) = rng.exponential();
      x /= x.sum();
      const Eigen::VectorXd w = x.head(ni);
      const double viaQ = evaluate_lamse(q, w);
      const double direct = large_direct(fits, full.d1, T, order, nbar, w);
      CHECK(std::abs(viaQ - direct) <= 1e-12 * (1.0 + std::abs(direct)) * q.q.cwiseAbs().maxCoeff());
      CHECK(viaQ >= 0.0);
    }
  }
}

TEST_CASE("property: nonnegativity over random feasible weights") {
  CounterRng rng(41, {});
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 6);
    const auto fits = testing::random_fits(rng, n, 2, 1.0);
    const LamseFixedN o = build_psi_hat(fits, Coordinate{0}, 100.0);
    const LamseLargeN q = build_largeN_objective(fits, Coordinate{0}, 100.0, n - 1);
    for (int k = 0; k < 1000; ++k) {
      Eigen::VectorXd x(static_cast<Eigen::Index>(n));
      for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = rng.exponential();
      x /= x.sum();
      CHECK(evaluate_lamse(o, x) >= 0.0);
      CHECK(evaluate_lamse(q, x.head(x.size() - 1)) >= 0.0);
    }
  }
}

TEST_CASE("regime consistency: nbar = N-1 with zero tail equals fixed-N") {
  CounterRng rng(43, {});
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 6);
    const auto fits = testing::random_fits(rng, n, 2, 1.0);
    const LamseFixedN o = build_psi_hat(fits, Coordinate{1}, 40.0);
    const LamseLargeN q = build_largeN_objective(fits, Coordinate{1}, 40.0, n - 1);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j + 1 < w.size(); ++j) w(j) = rng.exponential();
    w /= w.sum();
    const double fixed = evaluate_lamse(o, w);
    CHECK(std::abs(evaluate_lamse(q, w.head(w.size() - 1)) - fixed) <= 1e-12 * (1.0 + fixed));
  }
}

TEST_CASE("permutation equivariance of psi_hat") {
  CounterRng rng(47, {});
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 3 + static_cast<std::size_t>(rng.uniform() * 5);
    const auto fits = testing::random_fits(rng, n, 2);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t k = n - 1; k > 1; --k)
      std::swap(perm[k], perm[1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(k))]);
    std::vector<UnitFit> permuted;
    for (auto k : perm) permuted.push_back(fits[k]);
    const Eigen::MatrixXd a = build_psi_hat(fits, Coordinate{0}, 25.0).psi;
    const Eigen::MatrixXd b = build_psi_hat(permuted, Coordinate{0}, 25.0).psi;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        CHECK(b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
              a(static_cast<Eigen::Index>(perm[i]), static_cast<Eigen::Index>(perm[j])));
  }
}
