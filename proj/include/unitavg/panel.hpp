#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace unitavg {

/// Observations of one cross-sectional unit, sorted by strictly increasing time.
struct UnitSeries {
  std::string id;
  std::vector<std::int64_t> times;
  Eigen::VectorXd y;
  Eigen::MatrixXd x;  ///< rows = periods, cols = covariates
};

/// Rectangular (or ragged) panel of outcomes and covariates.
class PanelData {
 public:
  PanelData() = default;

  /// Validates and stores the series; rows of each unit are sorted by time.
  /// Throws ParseError-free unitavg::Error on duplicate times or mismatched d.
  PanelData(std::vector<UnitSeries> units, std::vector<std::string> covariate_names = {});

  std::size_t num_units() const noexcept { return units_.size(); }
  Eigen::Index num_covariates() const noexcept { return d_; }
  bool balanced() const noexcept { return balanced_; }

  /// Number of periods when balanced, otherwise the longest series.
  std::size_t num_periods() const noexcept;

  const std::vector<std::string>& unit_ids() const noexcept { return ids_; }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }
  const UnitSeries& unit(std::size_t index) const { return units_.at(index); }
  const UnitSeries& unit(const std::string& id) const;
  std::size_t index_of(const std::string& id) const;
  bool contains(const std::string& id) const noexcept;

  /// Copy with the units rearranged; `order` lists unit indices.
  PanelData reordered(const std::vector<std::size_t>& order) const;

 private:
  std::vector<UnitSeries> units_;
  std::vector<std::string> ids_;
  std::vector<std::string> names_;
  Eigen::Index d_ = 0;
  bool balanced_ = true;
};

/// Reads the panel CSV format: header `unit,time,y,x1,...,xd`, one row per
/// (unit, time). Units keep the order of their first appearance.
PanelData load_panel(std::istream& in);
PanelData load_panel_file(const std::string& path);

/// Writes a panel back in the same CSV format.
void write_panel(std::ostream& out, const PanelData& panel);

enum class VcovKind { HC0, NeweyWest };

struct VcovSpec {
  VcovKind kind = VcovKind::HC0;
  int lag = 0;  ///< Newey-West truncation lag L (ignored for HC0)

  static VcovSpec parse(const std::string& text);  // "hc0" | "nw:L"
};

struct ModelSpec {
  bool include_intercept = false;
  int lag_order = 0;  ///< 0 or 1: lagged outcome as last regressor
  VcovSpec vcov{};

  /// Number of coefficients for `d` covariates.
  Eigen::Index num_params(Eigen::Index d) const noexcept {
    return d + lag_order + (include_intercept ? 1 : 0);
  }
  void validate() const;
};

/// Least-squares fit of one unit. Coefficient order is
/// [intercept], x1..xd, [lagged y].
struct UnitFit {
  std::string unit_id;
  Eigen::VectorXd theta;  ///< coefficient estimate
  Eigen::MatrixXd V;      ///< asymptotic variance of sqrt(T) * theta
  Eigen::Index T_eff = 0;
  double ssr = 0.0;
  double sigma2 = 0.0;    ///< ssr / T_eff
  bool ridged = false;    ///< design needed the ridge floor
  bool variance_floored = false;
};

/// Regression design for one unit: rows t = lag_order .. T-1.
struct Design {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

/// Builds the design of `series` under `spec`. With a lag, consecutive times
/// are required so every referenced y_{t-1} is present.
Design build_design(const UnitSeries& series, const ModelSpec& spec);

/// Sandwich estimate H^{-1} Sigma H^{-1} with H = X'X / T and Sigma the HC0
/// (or Bartlett-weighted Newey-West) score covariance, floored to be PD.
Eigen::MatrixXd estimate_variance(const Eigen::MatrixXd& X, const Eigen::VectorXd& resid,
                                  const VcovSpec& vcov, bool* floored = nullptr);

/// Fits a single design (the least-squares instance of the unit M-estimator).
UnitFit fit_design(const Design& design, const ModelSpec& spec, std::string unit_id = {});

UnitFit fit_unit(const PanelData& panel, const std::string& unit, const ModelSpec& spec);

/// Fits every unit (in parallel); order follows panel.unit_ids(). Failures
/// are collected and reported together, each with its unit id.
std::vector<UnitFit> fit_all(const PanelData& panel, const ModelSpec& spec);

/// Gaussian log-likelihood of `unit`'s sample at (theta, sigma2).
double loglik_on_unit(const PanelData& panel, const std::string& unit,
                      const Eigen::VectorXd& theta, double sigma2, const ModelSpec& spec);
double gaussian_loglik(const Design& design, const Eigen::VectorXd& theta, double sigma2);

/// Interface for unit-level M-estimators: fit, sandwich variance, and
/// log-likelihood of a unit's sample at given parameters.
class UnitEstimator {
 public:
  virtual ~UnitEstimator() = default;
  virtual UnitFit fit(const PanelData& panel, const std::string& unit) const = 0;
  virtual double loglik(const PanelData& panel, const std::string& unit,
                        const Eigen::VectorXd& theta, double scale) const = 0;
  /// Sum of squared residuals of `unit`'s sample at theta.
  virtual double ssr(const PanelData& panel, const std::string& unit,
                     const Eigen::VectorXd& theta) const = 0;
  virtual Eigen::Index num_params(const PanelData& panel) const = 0;
};

class LeastSquaresEstimator final : public UnitEstimator {
 public:
  explicit LeastSquaresEstimator(ModelSpec spec) : spec_(spec) { spec_.validate(); }
  UnitFit fit(const PanelData& panel, const std::string& unit) const override;
  double loglik(const PanelData& panel, const std::string& unit,
                const Eigen::VectorXd& theta, double sigma2) const override;
  double ssr(const PanelData& panel, const std::string& unit,
             const Eigen::VectorXd& theta) const override;
  Eigen::Index num_params(const PanelData& panel) const override;
  const ModelSpec& spec() const noexcept { return spec_; }

 private:
  ModelSpec spec_;
};

}  // namespace unitavg
