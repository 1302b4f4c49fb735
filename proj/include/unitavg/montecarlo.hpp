#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unitavg/focus.hpp"
#include "unitavg/panel.hpp"
#include "unitavg/rng.hpp"
#include "unitavg/weights.hpp"

namespace unitavg {

enum class SimFocus { Lambda, ConditionalMean };

/// Design of the heterogeneous dynamic panel study:
///   y_it = beta_i x_it + lambda_i y_i,t-1 + eps_it,  eps_it ~ N(0, sigma2_i),
/// sigma2_i ~ Exp(1), x_it ~ N(0,1), beta_i = 1 + eta_beta/sqrt(T),
/// lambda_i = eta_lambda/sqrt(T), eta_beta ~ N(0,1), eta_lambda ~ U[-4,4],
/// and unit 1's lambda pinned to each grid value.
struct SimConfig {
  std::size_t N = 25;
  std::size_t T = 60;
  std::size_t replications = 2500;
  std::vector<double> lambda1_grid{0.0, 0.15, 0.30, 0.45};
  std::vector<std::string> schemes{"individual", "mean-group", "minmse-fixed",
                                   "minmse-large:10", "minmse-large:20", "aic", "mma"};
  SimFocus focus = SimFocus::Lambda;
  std::uint64_t seed = 0;
  int threads = 0;  ///< 0 = OpenMP default
  /// Hold sigma2 and eta fixed across replications of a grid point.
  bool freeze_heterogeneity = false;
  /// Multiplies every eta draw (0 switches heterogeneity off).
  double heterogeneity_scale = 1.0;
  /// Replaces the Exp(1) error variances when set.
  std::optional<double> sigma2_override;

  void validate() const;
};

/// One simulated panel with the true (beta, lambda) of every unit.
struct DgpSample {
  PanelData panel;  ///< units "1".."N", periods 0..T, one covariate
  std::vector<Eigen::Vector2d> truths;
};

/// Draws a panel. Heterogeneity (sigma2, eta) comes from `heterogeneity` when
/// given, otherwise from `rng`; the data always come from `rng`.
DgpSample generate_dgp(const SimConfig& config, double grid_value, CounterRng& rng,
                       CounterRng* heterogeneity = nullptr);

/// Model fitted in the study: no intercept, x and the lagged outcome.
ModelSpec study_model();

struct ReplicationOutcome {
  bool dropped = false;
  std::string reason;
  double truth = 0.0;
  std::vector<double> estimates;      ///< per scheme, in resolved order
  std::vector<double> squared_errors;
  std::vector<WeightVector> weights;
};

/// Scheme list actually run: the configured schemes with "individual"
/// prepended when missing (it is the MSE denominator).
std::vector<std::string> resolved_schemes(const SimConfig& config);

/// Fits, weights and squared errors of one replication. Uses the stream
/// (seed, grid_index, rep_index); failures mark the replication as dropped.
ReplicationOutcome run_replication(const SimConfig& config, std::size_t grid_index,
                                   std::size_t rep_index);

struct SchemeStats {
  std::string scheme;
  double mse = 0.0;
  double mc_se = 0.0;  ///< standard error of the MSE estimate
};

struct GridResult {
  double lambda1 = 0.0;
  std::size_t n_effective = 0;
  std::size_t dropped = 0;
  std::vector<SchemeStats> schemes;
  /// Squared errors of the kept replications: rows = replications,
  /// cols = schemes (same order as `schemes`).
  Eigen::MatrixXd squared_errors;
  std::vector<std::string> drop_reasons;
  /// Share of units-1 selections by the mma scheme, when present.
  std::optional<double> mma_unit1_share;
};

struct SimResult {
  std::vector<std::string> schemes;
  std::vector<GridResult> grid;
  std::vector<std::string> warnings;  ///< e.g. more than 1% dropped replications
};

/// Replication-parallel study; bit-identical for any thread count.
SimResult run_study(const SimConfig& config);

namespace serial {
SimResult run_study(const SimConfig& config);
}  // namespace serial

struct RelativeMseRow {
  double grid_lambda1 = 0.0;
  std::string scheme;
  double mse = 0.0;
  double rel_mse = 0.0;
  double rel_se = 0.0;  ///< delta-method standard error of rel_mse
  double mc_se = 0.0;
  std::size_t n_effective = 0;
  bool flagged = false;  ///< zero individual MSE: ratio undefined
};

/// MSE of each scheme relative to the individual estimator.
std::vector<RelativeMseRow> relative_mse(const SimResult& result);

/// Tidy CSV: grid_lambda1,scheme,mse,rel_mse,mc_se,n_effective
void write_results_csv(std::ostream& out, const SimResult& result);

}  // namespace unitavg
