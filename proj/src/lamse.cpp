#include "unitavg/lamse.hpp"

#include <algorithm>
#include <cmath>

#include "unitavg/error.hpp"

namespace unitavg {

namespace {

void check_fits(std::span<const UnitFit> fits, double T) {
  if (fits.empty()) throw DimensionError("at least one unit fit is required");
  if (!(T >= 1.0)) throw Error("T must be at least 1");
  const Eigen::Index p = fits.front().theta.size();
  for (const auto& f : fits) {
    if (f.theta.size() != p || f.V.rows() != p || f.V.cols() != p) {
      throw DimensionError("unit '" + f.unit_id + "' has a different parameter dimension");
    }
  }
}

Eigen::VectorXd target_gradient(std::span<const UnitFit> fits, const Focus& focus) {
  try {
    return focus.gradient(fits.front().theta);
  } catch (const FocusSingularityError& e) {
    throw FocusSingularityError("target unit '" + fits.front().unit_id + "': " + e.what());
  }
}

void check_weights(const Eigen::VectorXd& w, Eigen::Index n, bool exact_sum) {
  if (w.size() != n) {
    throw DimensionError("weight vector has " + std::to_string(w.size()) + " entries, expected " +
                         std::to_string(n));
  }
  if (n > 0 && w.minCoeff() < -kFeasibilityTol) throw InfeasibleWeightsError("negative weight");
  const double s = w.sum();
  if (exact_sum ? std::abs(s - 1.0) > kFeasibilityTol : s > 1.0 + kFeasibilityTol) {
    throw InfeasibleWeightsError("weights sum to " + std::to_string(s));
  }
}

}  // namespace

LamseFixedN build_psi_hat(std::span<const UnitFit> fits, const Focus& focus, double T) {
  check_fits(fits, T);
  const auto n = static_cast<Eigen::Index>(fits.size());
  LamseFixedN out;
  out.T = T;
  out.d1 = target_gradient(fits, focus);
  const Eigen::VectorXd& d = out.d1;
  const Eigen::VectorXd& theta1 = fits.front().theta;
  const double rootT = std::sqrt(T);
  out.bias.resize(n);
  out.var.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& f = fits[static_cast<std::size_t>(i)];
    out.bias(i) = rootT * d.dot(f.theta - theta1);
    out.var(i) = d.dot(f.V * d);
  }
  out.psi.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out.psi(i, j) = out.bias(i) * out.bias(j) + (i == j ? out.var(i) : 0.0);
    }
  }
  return out;
}

LamseUnbiased build_psi_tilde(std::span<const UnitFit> fits, const Focus& focus, double T) {
  const LamseFixedN hat = build_psi_hat(fits, focus, T);
  const double v1 = hat.var(0);
  LamseUnbiased out{hat.psi};
  for (Eigen::Index i = 0; i < hat.size(); ++i) {
    for (Eigen::Index j = 0; j < hat.size(); ++j) {
      out.psi_tilde(i, j) = hat.bias(i) * hat.bias(j) - (i == j ? hat.var(i) + v1 : v1);
    }
  }
  return out;
}

LamseLargeN build_largeN_objective(std::span<const UnitFit> fits, const Focus& focus, double T,
                                   std::size_t nbar, std::vector<std::size_t> ordering) {
  check_fits(fits, T);
  const std::size_t N = fits.size();
  if (nbar >= N) {
    throw RegimeError("nbar = " + std::to_string(nbar) + " but only " + std::to_string(N) +
                      " units: use the fixed-N regime instead");
  }
  if (ordering.empty()) {
    ordering.resize(N);
    for (std::size_t i = 0; i < N; ++i) ordering[i] = i;
  }
  if (ordering.size() != N) throw DimensionError("ordering must list every unit exactly once");
  {
    std::vector<bool> seen(N, false);
    for (std::size_t k : ordering) {
      if (k >= N || seen[k]) throw Error("ordering is not a permutation of the units");
      seen[k] = true;
    }
  }
  if (nbar >= 1 &&
      std::find(ordering.begin(), ordering.begin() + static_cast<std::ptrdiff_t>(nbar), 0) ==
          ordering.begin() + static_cast<std::ptrdiff_t>(nbar)) {
    throw RegimeError("the target unit must be among the first nbar units of the ordering");
  }

  const Eigen::VectorXd d = target_gradient(fits, focus);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(fits.front().theta.size());
  for (const auto& f : fits) mean += f.theta;
  mean /= static_cast<double>(N);

  LamseLargeN out;
  out.N = N;
  out.nbar = nbar;
  out.tail_bias = std::sqrt(T) * d.dot(fits.front().theta - mean);

  if (nbar > 0) {
    std::vector<UnitFit> chosen;
    chosen.reserve(nbar + 1);
    chosen.push_back(fits.front());  // psi is relative to the target estimate
    for (std::size_t k = 0; k < nbar; ++k) chosen.push_back(fits[ordering[k]]);
    LamseFixedN full = build_psi_hat(chosen, focus, T);
    const auto m = static_cast<Eigen::Index>(nbar);
    out.unrestricted.T = T;
    out.unrestricted.d1 = full.d1;
    out.unrestricted.bias = full.bias.tail(m);
    out.unrestricted.var = full.var.tail(m);
    out.unrestricted.psi = full.psi.bottomRightCorner(m, m);
  } else {
    out.unrestricted.T = T;
    out.unrestricted.d1 = d;
  }

  const auto m = static_cast<Eigen::Index>(nbar);
  out.q.resize(m + 1, m + 1);
  out.q.topLeftCorner(m, m) = out.unrestricted.psi;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double border = -out.unrestricted.bias(i) * out.tail_bias;
    out.q(i, m) = border;
    out.q(m, i) = border;
  }
  out.q(m, m) = out.tail_bias * out.tail_bias;
  out.ordering = std::move(ordering);
  return out;
}

double evaluate_lamse(const LamseFixedN& obj, const Eigen::VectorXd& w) {
  check_weights(w, obj.size(), true);
  return w.dot(obj.psi * w);
}

double evaluate_lamse(const LamseLargeN& obj, const Eigen::VectorXd& w) {
  const auto m = static_cast<Eigen::Index>(obj.nbar);
  check_weights(w, m, false);
  Eigen::VectorXd x(m + 1);
  x.head(m) = w;
  x(m) = 1.0 - w.sum();
  return x.dot(obj.q * x);
}

}  // namespace unitavg
