#pragma once

#include <string>
#include <variant>

#include <Eigen/Dense>

namespace unitavg {

/// mu(theta) = theta[index]
struct Coordinate {
  Eigen::Index index = 0;
};

/// mu(theta) = a' theta + b. With a = (x_T, y_T) over (beta, lambda) this is
/// the one-step conditional mean forecast.
struct AffineConditionalMean {
  Eigen::VectorXd a;
  double b = 0.0;
};

/// mu(theta) = theta[beta] / (1 - theta[lambda])
struct LongRunEffect {
  Eigen::Index beta = 0;
  Eigen::Index lambda = 1;
};

/// Guard on |1 - lambda| for the long-run effect.
inline constexpr double kLongRunGuard = 1e-6;

/// Smooth scalar focus parameter with an analytic gradient.
class Focus {
 public:
  using Variant = std::variant<Coordinate, AffineConditionalMean, LongRunEffect>;

  Focus(Variant v) : v_(std::move(v)) {}  // NOLINT(google-explicit-constructor)
  Focus(Coordinate c) : v_(c) {}             // NOLINT(google-explicit-constructor)
  Focus(AffineConditionalMean c) : v_(std::move(c)) {}  // NOLINT(google-explicit-constructor)
  Focus(LongRunEffect c) : v_(c) {}          // NOLINT(google-explicit-constructor)

  /// Parses `coordinate:<k>`, `condmean:<a1,...,ap>:<b>`, `longrun:<i_beta>:<i_lambda>`.
  static Focus parse(const std::string& text);

  double value(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const;

  /// Throws unless the focus is defined (and smooth) at theta.
  void check(const Eigen::VectorXd& theta) const;

  const Variant& variant() const noexcept { return v_; }
  std::string to_string() const;

 private:
  Variant v_;
};

}  // namespace unitavg
