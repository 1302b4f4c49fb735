#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "unitavg/focus.hpp"
#include "unitavg/panel.hpp"

namespace unitavg {

/// Fixed-N LA-MSE criterion w' psi w over the averaged units (target first).
///
/// psi = bias * bias' + diag(var), where bias_i = d1' sqrt(T) (theta_i - theta_1)
/// and var_i = d1' V_i d1, with d1 the focus gradient at the target estimate.
struct LamseFixedN {
  Eigen::MatrixXd psi;
  Eigen::VectorXd bias;
  Eigen::VectorXd var;
  Eigen::VectorXd d1;
  double T = 0.0;

  Eigen::Index size() const noexcept { return psi.rows(); }
};

/// Bias-corrected variant of psi. Diagnostic only: it may be indefinite.
struct LamseUnbiased {
  Eigen::MatrixXd psi_tilde;
};

/// Large-N criterion as a quadratic form x' q x on the (nbar+1)-simplex,
/// where x = (w, 1 - sum(w)) and the last coordinate is the tail mass.
struct LamseLargeN {
  Eigen::MatrixXd q;
  LamseFixedN unrestricted;        ///< psi over the first nbar units of `ordering`
  double tail_bias = 0.0;          ///< sqrt(T) d1'(theta_1 - mean_i theta_i)
  std::size_t N = 0;
  std::size_t nbar = 0;
  std::vector<std::size_t> ordering;  ///< fit indices, unrestricted units first
};

/// Builds psi from fits ordered target-first. `T` is the time-series length
/// used to scale the bias terms.
LamseFixedN build_psi_hat(std::span<const UnitFit> fits, const Focus& focus, double T);

LamseUnbiased build_psi_tilde(std::span<const UnitFit> fits, const Focus& focus, double T);

/// Large-N objective over all N fits (target at index 0). `ordering` is a
/// permutation of 0..N-1 whose first `nbar` entries are the unrestricted
/// units; an empty ordering means input order. nbar = 0 is allowed and gives
/// the 1x1 criterion [tail_bias^2].
LamseLargeN build_largeN_objective(std::span<const UnitFit> fits, const Focus& focus, double T,
                                   std::size_t nbar, std::vector<std::size_t> ordering = {});

/// Criterion value at weights on the unit simplex (fixed) or on the
/// sub-simplex {w >= 0, sum(w) <= 1} (large). Tolerance 1e-10 on feasibility.
double evaluate_lamse(const LamseFixedN& obj, const Eigen::VectorXd& w);
double evaluate_lamse(const LamseLargeN& obj, const Eigen::VectorXd& w);

inline constexpr double kFeasibilityTol = 1e-10;

}  // namespace unitavg
