#include "unitavg/simplex_qp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "unitavg/error.hpp"

namespace unitavg {

namespace {

void validate(const Eigen::MatrixXd& Q) {
  if (Q.rows() != Q.cols() || Q.rows() == 0) {
    throw DimensionError("QP matrix must be square and nonempty");
  }
  if (!Q.allFinite()) throw Error("QP matrix has non-finite entries");
  const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error("QP matrix is not symmetric");
  }
}

double objective(const Eigen::MatrixXd& Q, const Eigen::VectorXd& x) { return x.dot(Q * x); }

Eigen::VectorXd clean(Eigen::VectorXd x) {
  x = x.cwiseMax(0.0);
  const double s = x.sum();
  if (s > 0.0) x /= s;
  return x;
}

// Stationary point of x'Qx on the face {x_S >= 0 free, sum x_S = 1, x_rest = 0},
// if the face's KKT system is consistent and the point is primal feasible.
// With a start point the minimum-norm correction to it is returned, which
// matters when the face's stationary set is not a single point.
std::optional<Eigen::VectorXd> solve_face(const Eigen::MatrixXd& Q,
                                          const std::vector<Eigen::Index>& support,
                                          const Eigen::VectorXd* start = nullptr) {
  const auto k = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(k + 1, k + 1);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) K(a, b) = 2.0 * Q(support[a], support[b]);
    K(a, k) = 1.0;
    K(k, a) = 1.0;
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
  rhs(k) = 1.0;
  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(k + 1);
  if (start) {
    for (Eigen::Index a = 0; a < k; ++a) z0(a) = (*start)(support[a]);
    z0(k) = -(K.topLeftCorner(k, k) * z0.head(k)).mean();
  }
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
  const Eigen::VectorXd sol = z0 + cod.solve(rhs - K * z0);
  const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
  if (!sol.allFinite() || (K * sol - rhs).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    return std::nullopt;
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(Q.rows());
  for (Eigen::Index a = 0; a < k; ++a) {
    if (sol(a) < -1e-12) return std::nullopt;
    x(support[a]) = sol(a);
  }
  return clean(std::move(x));
}

}  // namespace

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) tau = t;
  }
  return (v.array() - tau).cwiseMax(0.0).matrix();
}

double kkt_residual(const Eigen::MatrixXd& Q, const Eigen::VectorXd& x) {
  const double s = 2.0 * Q.cwiseAbs().maxCoeff();
  if (s == 0.0) return 0.0;
  const Eigen::VectorXd g = 2.0 * (Q * x);
  return (x - project_to_simplex(x - g / s)).cwiseAbs().maxCoeff();
}

QpSolution solve_simplex_qp_enumerate(const Eigen::MatrixXd& Q) {
  validate(Q);
  const Eigen::Index m = Q.rows();
  if (m > 20) throw DimensionError("active-set enumeration is limited to 20 variables");
  std::optional<QpSolution> best;
  const std::uint64_t subsets = (std::uint64_t{1} << m);
  for (std::uint64_t mask = 1; mask < subsets; ++mask) {
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < m; ++i)
      if (mask & (std::uint64_t{1} << i)) support.push_back(i);
    auto x = solve_face(Q, support);
    if (!x) continue;
    const double f = objective(Q, *x);
    // strict improvement beyond rounding: earlier (lower-index) faces win ties
    if (!best || f < best->objective - 1e-14 * std::max(1.0, std::abs(best->objective))) {
      best = QpSolution{*x, f, 0.0, 0, true};
    }
  }
  if (!best) throw SolverError("active-set enumeration found no stationary face",
                               Eigen::VectorXd::Constant(m, 1.0 / m), INFINITY);
  best->kkt_residual = kkt_residual(Q, best->x);
  return *best;
}

QpSolution solve_simplex_qp_iterative(const Eigen::MatrixXd& Q, const QpOptions& opts) {
  validate(Q);
  if (!(opts.tol > 0.0)) throw Error("QP tolerance must be positive");
  const Eigen::Index m = Q.rows();
  const double lipschitz = 2.0 * Q.cwiseAbs().rowwise().sum().maxCoeff();
  const double t_default = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;

  Eigen::VectorXd x = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  Eigen::VectorXd g = 2.0 * (Q * x);
  double f = objective(Q, x);
  double t = t_default;
  Eigen::VectorXd best = x;
  double best_res = kkt_residual(Q, x);
  if (best_res <= opts.tol) return {x, f, best_res, 0, false};

  for (int it = 1; it <= opts.max_iter; ++it) {
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    double step = t;
    for (int bt = 0; bt < 60; ++bt) {
      x_new = project_to_simplex(x - step * g);
      f_new = objective(Q, x_new);
      if (f_new <= f + 1e-4 * g.dot(x_new - x) + 1e-15 * std::abs(f)) break;
      step *= 0.5;
    }
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd g_new = 2.0 * (Q * x_new);
    const double sy = s.dot(g_new - g);
    t = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-3 * t_default, 1e6 * t_default)
                 : t_default;
    x = std::move(x_new);
    g = g_new;
    f = f_new;

    double res = kkt_residual(Q, x);
    if (res < best_res) {
      best_res = res;
      best = x;
    }
    if (res <= opts.tol) return {clean(x), objective(Q, clean(x)), res, it, false};

    // Polish on the current support: exact once the active set is identified.
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < m; ++i)
      if (x(i) > 1e-12) support.push_back(i);
    if (auto xp = solve_face(Q, support, &x)) {
      const double fp = objective(Q, *xp);
      const double rp = kkt_residual(Q, *xp);
      if (rp <= opts.tol && fp <= f + 1e-12 * std::max(1.0, std::abs(f))) {
        return {*xp, fp, rp, it, false};
      }
    }
  }
  throw SolverError("simplex QP did not converge in " + std::to_string(opts.max_iter) +
                        " iterations (KKT residual " + std::to_string(best_res) + ")",
                    best, best_res);
}

QpSolution solve_simplex_qp(const QpProblem& prob, const QpOptions& opts) {
  validate(prob.Q);
  if (prob.Q.rows() == 1) {
    return {Eigen::VectorXd::Ones(1), prob.Q(0, 0), 0.0, 0, true};
  }
  if (prob.Q.rows() <= opts.enumeration_max_dim) {
    try {
      QpSolution sol = solve_simplex_qp_enumerate(prob.Q);
      if (sol.kkt_residual <= opts.tol) return sol;
    } catch (const SolverError&) {
    }
  }
  return solve_simplex_qp_iterative(prob.Q, opts);
}

}  // namespace unitavg
