#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "unitavg/rng.hpp"
#include "unitavg/simplex_qp.hpp"

namespace unitavg {

/// Limit experiment: local deviations eta_i (target first), asymptotic
/// variances V_i of the unit estimators and the focus gradient d0.
struct LimitSpec {
  std::vector<Eigen::VectorXd> etas;
  std::vector<Eigen::MatrixXd> variances;
  Eigen::VectorXd d0;

  std::size_t size() const noexcept { return etas.size(); }
  /// Requires matching dimensions, SPD variances and d0 != 0.
  void validate() const;
};

/// One joint draw Z_i ~ N(eta_i - eta_1, V_i), independent across i, together
/// with Lambda_i = d0' Z_i.
struct LimitDraw {
  std::vector<Eigen::VectorXd> Z;
  Eigen::VectorXd Lambda;
};

enum class LimitRegime { Fixed, Large };

/// Population psi: [i,j] = d0'((eta_i - eta_1)(eta_j - eta_1)' + 1{i=j} V_i) d0.
Eigen::MatrixXd population_psi(const LimitSpec& spec);

double population_lamse_fixed(const LimitSpec& spec, const Eigen::VectorXd& w);

/// Large-N population LA-MSE over sub-simplex weights; the missing mass goes
/// to the negligible tail whose bias is -d0' eta_1.
double population_lamse_large(const LimitSpec& spec, const Eigen::VectorXd& w);

LimitDraw draw_limit(const LimitSpec& spec, CounterRng& rng);

/// Same as draw_limit with the standard-normal innovations supplied: Z_i =
/// eta_i - eta_1 + chol(V_i) xi_i. Lets a caller couple the draw with other
/// simulations that share the innovations.
LimitDraw draw_limit_from_innovations(const LimitSpec& spec, std::span<const Eigen::VectorXd> xi);

/// Random limit matrix of the fixed-N criterion for one draw.
Eigen::MatrixXd build_psi_bar(const LimitDraw& draw, const LimitSpec& spec);

/// Random limit matrix of the large-N criterion, (N+1) x (N+1) with the tail
/// coordinate last.
Eigen::MatrixXd build_q_bar(const LimitDraw& draw, const LimitSpec& spec);

struct LimitOptions {
  LimitRegime regime = LimitRegime::Fixed;
  /// Use these weights instead of solving the limit QP on each draw.
  std::optional<Eigen::VectorXd> forced_weights;
  QpOptions qp{};
};

/// Draws of the limit weights and of the limit of sqrt(T)(mu_hat - mu_1).
/// Row r of `weights` holds the N unit weights of draw r (the tail mass, in
/// the large regime, is 1 - row sum). Draw r uses stream (seed, r) only.
struct LimitSample {
  Eigen::MatrixXd weights;
  Eigen::VectorXd estimates;
};

/// Single-draw kernel shared by the serial and parallel drivers.
void simulate_limit_draw(const LimitSpec& spec, const LimitOptions& opts, std::uint64_t seed,
                         std::size_t draw_index, Eigen::Ref<Eigen::VectorXd> weights_out,
                         double& estimate_out);

/// OpenMP driver; output is independent of `threads`.
LimitSample simulate_limit(const LimitSpec& spec, const LimitOptions& opts, std::size_t reps,
                           std::uint64_t seed, int threads = 0);

Eigen::MatrixXd simulate_limit_weights(const LimitSpec& spec, const LimitOptions& opts,
                                       std::size_t reps, std::uint64_t seed, int threads = 0);
Eigen::VectorXd simulate_limit_estimator(const LimitSpec& spec, const LimitOptions& opts,
                                         std::size_t reps, std::uint64_t seed, int threads = 0);

namespace serial {
/// Plain loop over draws; reference for the parallel driver.
LimitSample simulate_limit(const LimitSpec& spec, const LimitOptions& opts, std::size_t reps,
                           std::uint64_t seed);
}  // namespace serial

}  // namespace unitavg
