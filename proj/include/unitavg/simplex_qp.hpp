#pragma once

#include <Eigen/Dense>

namespace unitavg {

/// min x' Q x over the unit simplex {x >= 0, sum(x) = 1}.
struct QpProblem {
  Eigen::MatrixXd Q;
};

struct QpOptions {
  double tol = 1e-10;
  int max_iter = 100000;
  /// Dimension up to which the exact active-set enumeration is used.
  Eigen::Index enumeration_max_dim = 3;
};

struct QpSolution {
  Eigen::VectorXd x;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool exact = false;  ///< produced by the active-set enumeration
};

/// Euclidean projection onto the unit simplex (sort-based).
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

/// Scale-free stationarity measure: || x - P(x - grad / s) ||_inf with
/// grad = 2 Q x and s the largest absolute entry of 2 Q. Zero iff x is optimal.
double kkt_residual(const Eigen::MatrixXd& Q, const Eigen::VectorXd& x);

/// Solves the simplex QP. Exact enumeration for small problems, projected
/// gradient with Armijo backtracking (and face polishing) otherwise or as a
/// fallback. Throws SolverError with the best iterate on non-convergence.
QpSolution solve_simplex_qp(const QpProblem& prob, const QpOptions& opts = {});

/// The two independent paths, exposed for cross-checking.
QpSolution solve_simplex_qp_enumerate(const Eigen::MatrixXd& Q);
QpSolution solve_simplex_qp_iterative(const Eigen::MatrixXd& Q, const QpOptions& opts = {});

}  // namespace unitavg
