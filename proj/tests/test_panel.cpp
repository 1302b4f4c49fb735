#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "unitavg/error.hpp"
#include "unitavg/panel.hpp"

using namespace unitavg;

namespace {

const char* kSmall =
    "unit,time,y,x1\n"
    "a,1,1.0,0.5\n"
    "a,2,2.0,1.0\n"
    "a,3,3.5,1.5\n"
    "b,1,0.5,0.2\n"
    "b,2,1.5,0.9\n"
    "b,3,2.0,1.1\n";

PanelData load(const std::string& text) {
  std::istringstream in(text);
  return load_panel(in);
}

}  // namespace

TEST_CASE("load_panel: 2 units x 3 periods, d = 1") {
  const PanelData p = load(kSmall);
  CHECK(p.num_units() == 2);
  CHECK(p.num_periods() == 3);
  CHECK(p.num_covariates() == 1);
  CHECK(p.balanced());
  CHECK(p.unit_ids() == std::vector<std::string>{"a", "b"});
  CHECK(p.unit("b").y(2) == 2.0);
  CHECK(p.unit("a").x(1, 0) == 1.0);

  std::ostringstream out;
  write_panel(out, p);
  const PanelData q = load(out.str());
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(q.unit(i).times == p.unit(i).times);
    CHECK(q.unit(i).y == p.unit(i).y);
    CHECK(q.unit(i).x == p.unit(i).x);
  }
}

TEST_CASE("load_panel: duplicate (unit,time) names the key and line") {
  try {
    load("unit,time,y\na,1,1\na,2,2\na,1,3\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(e.line() == 4);
    CHECK(msg.find("(a, 1)") != std::string::npos);
  }
}

TEST_CASE("load_panel: malformed rows") {
  CHECK_THROWS_AS(load("unit,time,y,x1\na,1,1\n"), ParseError);
  CHECK_THROWS_AS(load("unit,time,y\na,1,abc\n"), ParseError);
  CHECK_THROWS_AS(load("unit,time,y\na,1.5,2\n"), ParseError);
  CHECK_THROWS_AS(load("id,t,y\na,1,2\n"), ParseError);
  CHECK_THROWS_AS(load(""), ParseError);
  try {
    load("unit,time,y,x1\na,1,1,2\na,2,1\n");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("load_panel: unsorted rows give the same panel as sorted input") {
  const PanelData sorted = load(kSmall);
  const PanelData shuffled = load(
      "unit,time,y,x1\n"
      "a,3,3.5,1.5\n"
      "b,2,1.5,0.9\n"
      "a,1,1.0,0.5\n"
      "b,3,2.0,1.1\n"
      "a,2,2.0,1.0\n"
      "b,1,0.5,0.2\n");
  REQUIRE(shuffled.unit_ids() == sorted.unit_ids());
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(shuffled.unit(i).times == sorted.unit(i).times);
    CHECK(shuffled.unit(i).y == sorted.unit(i).y);
    CHECK(shuffled.unit(i).x == sorted.unit(i).x);
  }
}

TEST_CASE("fit_unit: exact fit y = 2x") {
  const PanelData p = load("unit,time,y,x1\na,1,2,1\na,2,4,2\na,3,-2,-1\na,4,6,3\n");
  const UnitFit f = fit_unit(p, "a", ModelSpec{});
  CHECK(f.theta(0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(f.ssr == doctest::Approx(0.0));
  CHECK(f.T_eff == 4);
  CHECK(f.V(0, 0) > 0.0);
}

TEST_CASE("fit_unit: intercept-only model on y = (0, 2)") {
  const PanelData p = load("unit,time,y\na,1,0\na,2,2\n");
  ModelSpec spec;
  spec.include_intercept = true;
  const UnitFit f = fit_unit(p, "a", spec);
  CHECK(f.theta(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(f.ssr == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(f.sigma2 == doctest::Approx(1.0).epsilon(1e-14));
  // H = 1, residuals (-1, 1), Sigma = 1.
  CHECK(f.V(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("fit_unit: too short and singular designs") {
  ModelSpec spec;
  spec.include_intercept = true;
  CHECK_THROWS_AS(fit_unit(load("unit,time,y\na,1,0\n"), "a", spec), InsufficientDataError);
  CHECK_THROWS_AS(fit_unit(load("unit,time,y,x1\na,1,1,0\na,2,2,0\na,3,3,0\n"), "a", ModelSpec{}),
                  SingularDesignError);
}

TEST_CASE("lag requires consecutive periods") {
  ModelSpec spec;
  spec.lag_order = 1;
  CHECK_THROWS_AS(fit_unit(load("unit,time,y\na,1,1\na,2,2\na,4,3\na,5,1\n"), "a", spec),
                  InsufficientDataError);
}

TEST_CASE("fit_unit: AR(1) with lambda = 0.5 at T = 1e5") {
  unitavg::CounterRng rng(11, {});
  const int T = 100000;
  std::vector<std::int64_t> times(T + 1);
  std::vector<double> y(T + 1);
  y[0] = rng.normal() / std::sqrt(0.75);
  times[0] = 0;
  for (int t = 1; t <= T; ++t) {
    times[t] = t;
    y[t] = 0.5 * y[t - 1] + rng.normal();
  }
  const PanelData p({testing::series("a", times, y, {})});
  ModelSpec spec;
  spec.lag_order = 1;
  const UnitFit f = fit_unit(p, "a", spec);
  CHECK(f.T_eff == T);
  CHECK(std::abs(f.theta(0) - 0.5) < 0.01);
  // V of sqrt(T) lambda_hat is 1 - lambda^2 under homoskedastic errors.
  CHECK(std::abs(f.V(0, 0) - 0.75) < 0.075);
}

TEST_CASE("estimate_variance: homoskedastic errors match sigma^2 E[xx']^-1") {
  unitavg::CounterRng rng(3, {});
  const int T = 50000;
  Eigen::MatrixXd X(T, 2);
  Eigen::VectorXd e(T);
  for (int t = 0; t < T; ++t) {
    X(t, 0) = 1.0;
    X(t, 1) = rng.normal(0.5, 2.0);
    e(t) = rng.normal(0.0, 1.5);
  }
  Eigen::Matrix2d Exx;
  Exx << 1.0, 0.5, 0.5, 4.25;
  const Eigen::Matrix2d target = 2.25 * Exx.inverse();
  const Eigen::MatrixXd V = estimate_variance(X, e, VcovSpec{});
  for (int i = 0; i < 2; ++i) CHECK(std::abs(V(i, i) / target(i, i) - 1.0) < 0.10);
}

TEST_CASE("Newey-West with L = 0 equals HC0 exactly") {
  unitavg::CounterRng rng(4, {});
  const Eigen::MatrixXd X = testing::random_matrix(rng, 40, 3);
  const Eigen::VectorXd e = testing::random_vector(rng, 40);
  const Eigen::MatrixXd hc0 = estimate_variance(X, e, VcovSpec{VcovKind::HC0, 0});
  const Eigen::MatrixXd nw0 = estimate_variance(X, e, VcovSpec{VcovKind::NeweyWest, 0});
  CHECK((hc0 - nw0).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::MatrixXd nw3 = estimate_variance(X, e, VcovSpec{VcovKind::NeweyWest, 3});
  CHECK((nw3 - nw3.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(Eigen::LLT<Eigen::MatrixXd>(nw3).info() == Eigen::Success);
}

TEST_CASE("VcovSpec and ModelSpec parsing and validation") {
  CHECK(VcovSpec::parse("hc0").kind == VcovKind::HC0);
  const VcovSpec nw = VcovSpec::parse("nw:4");
  CHECK(nw.kind == VcovKind::NeweyWest);
  CHECK(nw.lag == 4);
  CHECK_THROWS(VcovSpec::parse("nw:-1"));
  CHECK_THROWS(VcovSpec::parse("hc3"));
  ModelSpec bad;
  bad.lag_order = 2;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("fit_all: identical units, order and error attribution") {
  const PanelData same = load(
      "unit,time,y,x1\n"
      "a,1,1,1\na,2,2.5,2\na,3,2.9,3\n"
      "b,1,1,1\nb,2,2.5,2\nb,3,2.9,3\n"
      "c,1,1,1\nc,2,2.5,2\nc,3,2.9,3\n");
  const auto fits = fit_all(same, ModelSpec{});
  REQUIRE(fits.size() == 3);
  for (const auto& f : fits) {
    CHECK(f.theta == fits[0].theta);
    CHECK(f.V == fits[0].V);
    CHECK(f.ssr == fits[0].ssr);
  }
  CHECK(fits[2].unit_id == "c");

  const PanelData shortp = load("unit,time,y,x1\na,1,1,1\na,2,2,2\na,3,4,3\nb,1,1,1\n");
  try {
    fit_all(shortp, ModelSpec{});
    FAIL("expected error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'b'") != std::string::npos);
    CHECK(msg.find("'a'") == std::string::npos);
  }
}

TEST_CASE("fit_all: permuting units permutes the output") {
  unitavg::CounterRng rng(8, {});
  std::vector<UnitSeries> units;
  for (int i = 0; i < 6; ++i) {
    std::vector<std::int64_t> t;
    std::vector<double> y;
    std::vector<std::vector<double>> x;
    for (int s = 0; s < 20; ++s) {
      t.push_back(s);
      x.push_back({rng.normal(), rng.normal()});
      y.push_back(x.back()[0] - 0.5 * x.back()[1] + rng.normal());
    }
    units.push_back(testing::series("u" + std::to_string(i), t, y, x));
  }
  const PanelData p(units);
  ModelSpec spec;
  spec.include_intercept = true;
  const auto base = fit_all(p, spec);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  const auto permuted = fit_all(p.reordered(perm), spec);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    CHECK(permuted[k].unit_id == base[perm[k]].unit_id);
    CHECK(permuted[k].theta == base[perm[k]].theta);
    CHECK(permuted[k].V == base[perm[k]].V);
  }
}

TEST_CASE("loglik_on_unit: zero residuals and sigma2 scaling") {
  const PanelData p = load("unit,time,y,x1\na,1,2,1\na,2,4,2\n");
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 2.0);
  const double l1 = loglik_on_unit(p, "a", theta, 1.0, ModelSpec{});
  CHECK(l1 == doctest::Approx(-std::log(2.0 * M_PI)).epsilon(1e-14));
  const double l2 = loglik_on_unit(p, "a", theta, 2.0, ModelSpec{});
  CHECK(l1 - l2 == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(loglik_on_unit(p, "a", Eigen::VectorXd::Zero(2), 1.0, ModelSpec{}),
                  DimensionError);
  CHECK_THROWS(loglik_on_unit(p, "a", theta, 0.0, ModelSpec{}));
}

TEST_CASE("loglik_on_unit is maximised at theta_hat over a grid") {
  unitavg::CounterRng rng(13, {});
  std::vector<std::int64_t> t;
  std::vector<double> y;
  std::vector<std::vector<double>> x;
  for (int s = 0; s < 30; ++s) {
    t.push_back(s);
    x.push_back({rng.normal()});
    y.push_back(0.7 + 1.3 * x.back()[0] + 0.4 * rng.normal());
  }
  const PanelData p({testing::series("a", t, y, x)});
  ModelSpec spec;
  spec.include_intercept = true;
  const UnitFit f = fit_unit(p, "a", spec);
  const double best = loglik_on_unit(p, "a", f.theta, f.sigma2, spec);
  for (int i = -5; i <= 5; ++i) {
    for (int j = -5; j <= 5; ++j) {
      if (i == 0 && j == 0) continue;
      Eigen::VectorXd th = f.theta;
      th(0) += 0.02 * i;
      th(1) += 0.02 * j;
      CHECK(loglik_on_unit(p, "a", th, f.sigma2, spec) < best);
    }
  }
}

TEST_CASE("property: normal equations, PD variance, row-order and scale invariance") {
  unitavg::CounterRng rng(21, {});
  for (int inst = 0; inst < 100; ++inst) {
    const int T = 15 + static_cast<int>(rng.uniform() * 30);
    std::vector<std::int64_t> t;
    std::vector<double> y;
    std::vector<std::vector<double>> x;
    for (int s = 0; s < T; ++s) {
      t.push_back(s);
      x.push_back({rng.normal(), rng.normal(2.0, 3.0)});
      y.push_back(x.back()[0] * rng.normal() + 0.2 * x.back()[1] + rng.exponential());
    }
    ModelSpec spec;
    spec.include_intercept = true;
    spec.lag_order = inst % 2;
    const UnitSeries s = testing::series("a", t, y, x);
    const PanelData p({s});
    const UnitFit f = fit_unit(p, "a", spec);
    const Design d = build_design(p.unit(0), spec);
    const Eigen::VectorXd resid = d.y - d.X * f.theta;
    const Eigen::VectorXd ne = d.X.transpose() * resid;
    CHECK(ne.norm() <= 1e-8 * (d.X.norm() * d.y.norm()));
    CHECK((f.V - f.V.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(Eigen::LLT<Eigen::MatrixXd>(f.V).info() == Eigen::Success);
    CHECK(f.sigma2 == doctest::Approx(f.ssr / static_cast<double>(f.T_eff)));

    // Reverse the rows; the internal sort must restore the same fit.
    UnitSeries r = s;
    r.times.assign(s.times.rbegin(), s.times.rend());
    r.y = s.y.reverse().eval();
    r.x = s.x.colwise().reverse().eval();
    const UnitFit fr = fit_unit(PanelData({r}), "a", spec);
    CHECK((fr.theta - f.theta).cwiseAbs().maxCoeff() == 0.0);

    // Rescale covariate x1 by c.
    const double c = 0.25 + 4.0 * rng.uniform();
    UnitSeries sc = s;
    sc.x.col(1) *= c;
    const PanelData pc({sc});
    const UnitFit fc = fit_unit(pc, "a", spec);
    CHECK(fc.theta(2) * c == doctest::Approx(f.theta(2)).epsilon(1e-10));
    const Design dc = build_design(pc.unit(0), spec);
    CHECK((dc.X * fc.theta - d.X * f.theta).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + d.y.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("least-squares estimator interface") {
  const PanelData p = load("unit,time,y\na,1,0\na,2,2\na,3,1\n");
  ModelSpec spec;
  spec.include_intercept = true;
  const LeastSquaresEstimator est(spec);
  const UnitFit f = est.fit(p, "a");
  CHECK(f.theta(0) == doctest::Approx(1.0));
  CHECK(est.ssr(p, "a", f.theta) == doctest::Approx(2.0));
  CHECK(est.num_params(p) == 1);
  CHECK(est.loglik(p, "a", f.theta, 1.0) == doctest::Approx(loglik_on_unit(p, "a", f.theta, 1.0, spec)));
}
