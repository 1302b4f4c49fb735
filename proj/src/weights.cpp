#include "unitavg/weights.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "unitavg/error.hpp"

namespace unitavg {

Eigen::VectorXd finalize_weights(Eigen::VectorXd w) {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w(i)) || w(i) < -1e-12) {
      throw InfeasibleWeightsError("weight " + std::to_string(i) + " is " + std::to_string(w(i)));
    }
    if (w(i) < 0.0) w(i) = 0.0;
  }
  if (std::abs(w.sum() - 1.0) > kFeasibilityTol) {
    throw InfeasibleWeightsError("weights sum to " + std::to_string(w.sum()));
  }
  return w;
}

WeightVector min_mse_fixed(const LamseFixedN& psi, const QpOptions& opts) {
  const QpSolution sol = solve_simplex_qp({psi.psi}, opts);
  return {finalize_weights(sol.x), "minmse-fixed", sol.objective, std::nullopt};
}

WeightVector min_mse_large(const LamseLargeN& q, const QpOptions& opts) {
  const QpSolution sol = solve_simplex_qp({q.q}, opts);
  const auto m = static_cast<Eigen::Index>(q.nbar);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q.N));
  for (std::size_t k = 0; k < q.nbar; ++k) {
    w(static_cast<Eigen::Index>(q.ordering[k])) = sol.x(static_cast<Eigen::Index>(k));
  }
  const double tail = sol.x(m) / static_cast<double>(q.N - q.nbar);
  for (std::size_t k = q.nbar; k < q.N; ++k) w(static_cast<Eigen::Index>(q.ordering[k])) = tail;
  return {finalize_weights(w), "minmse-large", sol.objective, q.nbar};
}

WeightVector individual_weights(std::size_t N) {
  if (N == 0) throw DimensionError("need at least one unit");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
  w(0) = 1.0;
  return {w, "individual", std::nullopt, std::nullopt};
}

WeightVector mean_group_weights(std::size_t N) {
  if (N == 0) throw DimensionError("need at least one unit");
  return {Eigen::VectorXd::Constant(static_cast<Eigen::Index>(N), 1.0 / static_cast<double>(N)),
          "mean-group", std::nullopt, std::nullopt};
}

WeightVector stein_weights(std::size_t N, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("Stein lambda must lie in [0, 1]");
  WeightVector out = mean_group_weights(N);
  out.w *= (1.0 - lambda);
  out.w(0) += lambda;
  out.scheme = "stein";
  return out;
}

WeightVector ic_weights(std::span<const UnitFit> fits, const PanelData& panel,
                        const std::string& target_unit, const ModelSpec& spec,
                        InformationCriterion ic) {
  if (fits.empty()) throw DimensionError("need at least one unit");
  const Design design = build_design(panel.unit(target_unit), spec);
  const auto n = static_cast<Eigen::Index>(fits.size());
  const double p = static_cast<double>(design.X.cols());
  const double penalty =
      ic == InformationCriterion::AIC ? 2.0 * p : std::log(static_cast<double>(design.X.rows())) * p;
  Eigen::VectorXd crit(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& f = fits[static_cast<std::size_t>(i)];
    crit(i) = -2.0 * gaussian_loglik(design, f.theta, f.sigma2) + penalty;
  }
  const double best = crit.minCoeff();
  Eigen::VectorXd w = (-(crit.array() - best) / 2.0).exp().matrix();
  w /= w.sum();
  return {finalize_weights(w), ic == InformationCriterion::AIC ? "aic" : "bic", std::nullopt,
          std::nullopt};
}

WeightVector aic_weights(std::span<const UnitFit> fits, const PanelData& panel,
                         const std::string& target_unit, const ModelSpec& spec) {
  return ic_weights(fits, panel, target_unit, spec, InformationCriterion::AIC);
}

WeightVector mma_select(std::span<const UnitFit> fits, const PanelData& panel,
                        const std::string& target_unit, const ModelSpec& spec) {
  if (fits.empty()) throw DimensionError("need at least one unit");
  const Design design = build_design(panel.unit(target_unit), spec);
  const double p = static_cast<double>(design.X.cols());
  double target_sigma2 = -1.0;
  for (const auto& f : fits)
    if (f.unit_id == target_unit) target_sigma2 = f.sigma2;
  if (target_sigma2 < 0.0) target_sigma2 = fits.front().sigma2;
  std::size_t pick = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (fits[i].theta.size() != design.X.cols()) throw DimensionError("theta dimension mismatch");
    const double c = (design.y - design.X * fits[i].theta).squaredNorm() + 2.0 * target_sigma2 * p;
    if (c < best) {
      best = c;
      pick = i;
    }
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fits.size()));
  w(static_cast<Eigen::Index>(pick)) = 1.0;
  return {w, "mma", best, std::nullopt};
}

double unit_average(std::span<const UnitFit> fits, const Focus& focus, const WeightVector& w) {
  if (static_cast<std::size_t>(w.w.size()) != fits.size()) {
    throw DimensionError("weights have " + std::to_string(w.w.size()) + " entries for " +
                         std::to_string(fits.size()) + " units");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const double wi = w.w(static_cast<Eigen::Index>(i));
    if (wi == 0.0) continue;
    try {
      total += wi * focus.value(fits[i].theta);
    } catch (const FocusSingularityError& e) {
      throw FocusSingularityError("unit '" + fits[i].unit_id + "': " + e.what());
    }
  }
  return total;
}

SchemeSpec SchemeSpec::parse(const std::string& text) {
  SchemeSpec s;
  s.name = text;
  using K = Kind;
  if (text == "minmse" || text == "minmse-fixed") {
    s.kind = K::MinMseFixed;
    s.name = "minmse-fixed";
  } else if (text == "individual") {
    s.kind = K::Individual;
  } else if (text == "mean-group") {
    s.kind = K::MeanGroup;
  } else if (text == "aic") {
    s.kind = K::Aic;
  } else if (text == "bic") {
    s.kind = K::Bic;
  } else if (text == "mma") {
    s.kind = K::Mma;
  } else if (text.rfind("minmse-large:", 0) == 0) {
    s.kind = K::MinMseLarge;
    const char* b = text.data() + 13;
    const char* e = text.data() + text.size();
    const auto [p, ec] = std::from_chars(b, e, s.nbar);
    if (b == e || ec != std::errc() || p != e) throw Error("invalid scheme '" + text + "'");
  } else if (text.rfind("stein:", 0) == 0) {
    s.kind = K::Stein;
    const char* b = text.data() + 6;
    const char* e = text.data() + text.size();
    const auto [p, ec] = std::from_chars(b, e, s.stein_lambda);
    if (b == e || ec != std::errc() || p != e || s.stein_lambda < 0.0 || s.stein_lambda > 1.0) {
      throw Error("invalid scheme '" + text + "' (stein lambda must lie in [0, 1])");
    }
  } else {
    throw Error("unknown scheme '" + text +
                "' (expected minmse, minmse-fixed, minmse-large:K, individual, mean-group, "
                "stein:L, aic, bic or mma)");
  }
  return s;
}

WeightVector compute_weights(const SchemeSpec& scheme, const SchemeInputs& in,
                             const QpOptions& opts) {
  const std::size_t N = in.fits.size();
  auto need = [&](const void* ptr, const char* what) {
    if (!ptr) throw Error(std::string("scheme '") + scheme.name + "' needs " + what);
  };
  using K = SchemeSpec::Kind;
  switch (scheme.kind) {
    case K::Individual:
      return individual_weights(N);
    case K::MeanGroup:
      return mean_group_weights(N);
    case K::Stein:
      return stein_weights(N, scheme.stein_lambda);
    case K::Aic:
    case K::Bic:
    case K::Mma: {
      need(in.panel, "the panel");
      need(in.spec, "the model spec");
      const std::string& target = in.fits.front().unit_id;
      if (scheme.kind == K::Mma) return mma_select(in.fits, *in.panel, target, *in.spec);
      return ic_weights(in.fits, *in.panel, target, *in.spec,
                        scheme.kind == K::Aic ? InformationCriterion::AIC
                                              : InformationCriterion::BIC);
    }
    case K::MinMseFixed: {
      need(in.focus, "a focus");
      return min_mse_fixed(build_psi_hat(in.fits, *in.focus, in.T), opts);
    }
    case K::MinMseLarge: {
      need(in.focus, "a focus");
      if (scheme.nbar >= N) {
        WeightVector w = min_mse_fixed(build_psi_hat(in.fits, *in.focus, in.T), opts);
        w.scheme = "minmse-large";
        w.nbar = scheme.nbar;
        return w;
      }
      return min_mse_large(
          build_largeN_objective(in.fits, *in.focus, in.T, scheme.nbar, in.ordering), opts);
    }
  }
  throw Error("unhandled scheme");
}

}  // namespace unitavg
