#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace unitavg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input stream; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class SingularDesignError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Focus map evaluated where its gradient blows up.
class FocusSingularityError : public Error {
 public:
  using Error::Error;
};

class InfeasibleWeightsError : public Error {
 public:
  using Error::Error;
};

/// Invalid regime request (e.g. nbar >= N for the large-N criterion).
class RegimeError : public Error {
 public:
  using Error::Error;
};

/// The QP solver hit its iteration cap. Keeps the best iterate it found.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, Eigen::VectorXd best, double residual)
      : Error(what), best_(std::move(best)), residual_(residual) {}
  const Eigen::VectorXd& best_iterate() const noexcept { return best_; }
  double residual() const noexcept { return residual_; }

 private:
  Eigen::VectorXd best_;
  double residual_;
};

}  // namespace unitavg
