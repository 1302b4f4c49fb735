#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unitavg/focus.hpp"
#include "unitavg/lamse.hpp"
#include "unitavg/panel.hpp"
#include "unitavg/simplex_qp.hpp"

namespace unitavg {

/// Averaging weights over the units of a fit list (target first), with the
/// scheme that produced them.
struct WeightVector {
  Eigen::VectorXd w;
  std::string scheme;
  std::optional<double> criterion_value;
  std::optional<std::size_t> nbar;
};

/// Clamps entries >= -1e-12 to zero and checks |sum - 1| <= 1e-10.
/// Throws InfeasibleWeightsError otherwise.
Eigen::VectorXd finalize_weights(Eigen::VectorXd w);

WeightVector min_mse_fixed(const LamseFixedN& psi, const QpOptions& opts = {});

/// Large-N weights in fit order: unrestricted units get the QP solution,
/// the N - nbar restricted units share the tail mass equally.
WeightVector min_mse_large(const LamseLargeN& q, const QpOptions& opts = {});

WeightVector individual_weights(std::size_t N);
WeightVector mean_group_weights(std::size_t N);
/// lambda * individual + (1 - lambda) * mean group.
WeightVector stein_weights(std::size_t N, double lambda);

enum class InformationCriterion { AIC, BIC };

/// Smooth information-criterion weights: every donor's coefficients (with the
/// donor's own sigma^2) are scored on the target unit's sample, and
/// w_i is proportional to exp(-(IC_i - min IC) / 2).
WeightVector ic_weights(std::span<const UnitFit> fits, const PanelData& panel,
                        const std::string& target_unit, const ModelSpec& spec,
                        InformationCriterion ic);
WeightVector aic_weights(std::span<const UnitFit> fits, const PanelData& panel,
                         const std::string& target_unit, const ModelSpec& spec);

/// Mallows-type selection: picks the unit minimising the target-sample SSR at
/// that unit's coefficients plus 2 sigma^2_target p. Lowest index wins ties.
WeightVector mma_select(std::span<const UnitFit> fits, const PanelData& panel,
                        const std::string& target_unit, const ModelSpec& spec);

/// sum_i w_i mu(theta_i).
double unit_average(std::span<const UnitFit> fits, const Focus& focus, const WeightVector& w);

/// Named weighting scheme, as used on the command line and in study configs:
/// minmse-fixed (alias minmse), minmse-large:K, individual, mean-group,
/// stein:<lambda>, aic, bic, mma.
struct SchemeSpec {
  enum class Kind { MinMseFixed, MinMseLarge, Individual, MeanGroup, Stein, Aic, Bic, Mma };
  Kind kind = Kind::MinMseFixed;
  std::size_t nbar = 0;
  double stein_lambda = 0.0;
  std::string name;

  static SchemeSpec parse(const std::string& text);
};

/// Everything a scheme may need.
struct SchemeInputs {
  std::span<const UnitFit> fits;  ///< target first
  const PanelData* panel = nullptr;
  const ModelSpec* spec = nullptr;
  const Focus* focus = nullptr;
  double T = 0.0;
  std::vector<std::size_t> ordering;  ///< large-N ordering; empty = fit order
};

/// Computes the weights of `scheme`. minmse-large with nbar >= N falls back
/// to the fixed-N criterion (every unit is unrestricted).
WeightVector compute_weights(const SchemeSpec& scheme, const SchemeInputs& in,
                             const QpOptions& opts = {});

}  // namespace unitavg
