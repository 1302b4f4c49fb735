#include "unitavg/oracle.hpp"

#include <cmath>
#include <string>

#include <omp.h>

#include "unitavg/error.hpp"
#include "unitavg/lamse.hpp"

namespace unitavg {

namespace {

void check_weight_vector(const Eigen::VectorXd& w, std::size_t n, bool exact_sum) {
  if (static_cast<std::size_t>(w.size()) != n) throw DimensionError("weight dimension mismatch");
  if (n > 0 && w.minCoeff() < -kFeasibilityTol) throw InfeasibleWeightsError("negative weight");
  const double s = w.sum();
  if (exact_sum ? std::abs(s - 1.0) > kFeasibilityTol : s > 1.0 + kFeasibilityTol) {
    throw InfeasibleWeightsError("weights sum to " + std::to_string(s));
  }
}

}  // namespace

void LimitSpec::validate() const {
  if (etas.empty()) throw DimensionError("limit spec needs at least one unit");
  if (variances.size() != etas.size()) throw DimensionError("one variance per eta is required");
  const Eigen::Index p = d0.size();
  if (p == 0) throw DimensionError("d0 is empty");
  if (d0.cwiseAbs().maxCoeff() == 0.0) throw Error("d0 must be nonzero");
  for (std::size_t i = 0; i < etas.size(); ++i) {
    if (etas[i].size() != p || variances[i].rows() != p || variances[i].cols() != p) {
      throw DimensionError("unit " + std::to_string(i + 1) + " has mismatched dimensions");
    }
    if ((variances[i] - variances[i].transpose()).cwiseAbs().maxCoeff() >
        1e-12 * std::max(1.0, variances[i].cwiseAbs().maxCoeff())) {
      throw Error("variance " + std::to_string(i + 1) + " is not symmetric");
    }
    if (Eigen::LLT<Eigen::MatrixXd>(variances[i]).info() != Eigen::Success) {
      throw Error("variance " + std::to_string(i + 1) + " is not positive definite");
    }
  }
}

Eigen::MatrixXd population_psi(const LimitSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.size());
  Eigen::VectorXd bias(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    bias(i) = spec.d0.dot(spec.etas[static_cast<std::size_t>(i)] - spec.etas.front());
  }
  Eigen::MatrixXd psi = bias * bias.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    psi(i, i) += spec.d0.dot(spec.variances[static_cast<std::size_t>(i)] * spec.d0);
  }
  return psi;
}

double population_lamse_fixed(const LimitSpec& spec, const Eigen::VectorXd& w) {
  check_weight_vector(w, spec.size(), true);
  return w.dot(population_psi(spec) * w);
}

double population_lamse_large(const LimitSpec& spec, const Eigen::VectorXd& w) {
  check_weight_vector(w, spec.size(), false);
  const double tail = 1.0 - w.sum();
  const double eta1 = spec.d0.dot(spec.etas.front());
  double cross = 0.0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    cross += w(static_cast<Eigen::Index>(i)) * spec.d0.dot(spec.etas[i] - spec.etas.front());
  }
  return w.dot(population_psi(spec) * w) + (tail * eta1 - 2.0 * cross) * tail * eta1;
}

LimitDraw draw_limit_from_innovations(const LimitSpec& spec,
                                      std::span<const Eigen::VectorXd> xi) {
  if (xi.size() != spec.size()) throw DimensionError("one innovation vector per unit");
  LimitDraw out;
  out.Z.reserve(spec.size());
  out.Lambda.resize(static_cast<Eigen::Index>(spec.size()));
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(spec.variances[i]).matrixL();
    out.Z.push_back(spec.etas[i] - spec.etas.front() + L * xi[i]);
    out.Lambda(static_cast<Eigen::Index>(i)) = spec.d0.dot(out.Z.back());
  }
  return out;
}

LimitDraw draw_limit(const LimitSpec& spec, CounterRng& rng) {
  std::vector<Eigen::VectorXd> xi(spec.size());
  for (auto& v : xi) {
    v.resize(spec.d0.size());
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = rng.normal();
  }
  return draw_limit_from_innovations(spec, xi);
}

Eigen::MatrixXd build_psi_bar(const LimitDraw& draw, const LimitSpec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.size());
  Eigen::MatrixXd psi(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double bi = spec.d0.dot(draw.Z[static_cast<std::size_t>(i)] - draw.Z.front());
    for (Eigen::Index j = 0; j < n; ++j) {
      const double bj = spec.d0.dot(draw.Z[static_cast<std::size_t>(j)] - draw.Z.front());
      psi(i, j) = bi * bj;
    }
    psi(i, i) += spec.d0.dot(spec.variances[static_cast<std::size_t>(i)] * spec.d0);
  }
  return psi;
}

Eigen::MatrixXd build_q_bar(const LimitDraw& draw, const LimitSpec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.size());
  const double tail = spec.d0.dot(spec.etas.front() + draw.Z.front());
  Eigen::MatrixXd q(n + 1, n + 1);
  q.topLeftCorner(n, n) = build_psi_bar(draw, spec);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double border = -spec.d0.dot(draw.Z[static_cast<std::size_t>(i)] - draw.Z.front()) * tail;
    q(i, n) = border;
    q(n, i) = border;
  }
  q(n, n) = tail * tail;
  return q;
}

void simulate_limit_draw(const LimitSpec& spec, const LimitOptions& opts, std::uint64_t seed,
                         std::size_t draw_index, Eigen::Ref<Eigen::VectorXd> weights_out,
                         double& estimate_out) {
  CounterRng rng(seed, {draw_index});
  const LimitDraw draw = draw_limit(spec, rng);
  const auto n = static_cast<Eigen::Index>(spec.size());
  Eigen::VectorXd w;
  if (opts.forced_weights) {
    w = *opts.forced_weights;
  } else if (opts.regime == LimitRegime::Fixed) {
    w = solve_simplex_qp({build_psi_bar(draw, spec)}, opts.qp).x;
  } else {
    w = solve_simplex_qp({build_q_bar(draw, spec)}, opts.qp).x.head(n);
  }
  weights_out = w;
  estimate_out = w.dot(draw.Lambda);
  if (opts.regime == LimitRegime::Large) {
    estimate_out -= (1.0 - w.sum()) * spec.d0.dot(spec.etas.front());
  }
}

namespace {

void check_options(const LimitSpec& spec, const LimitOptions& opts) {
  spec.validate();
  if (opts.forced_weights) {
    check_weight_vector(*opts.forced_weights, spec.size(), opts.regime == LimitRegime::Fixed);
  }
}

}  // namespace

LimitSample simulate_limit(const LimitSpec& spec, const LimitOptions& opts, std::size_t reps,
                           std::uint64_t seed, int threads) {
  check_options(spec, opts);
  if (reps == 0) throw Error("reps must be at least 1");
  const auto n = static_cast<Eigen::Index>(spec.size());
  // row-major so each draw writes a contiguous row
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> weights(
      static_cast<Eigen::Index>(reps), n);
  Eigen::VectorXd estimates(static_cast<Eigen::Index>(reps));
  std::string first_error;
  std::size_t error_draw = reps;
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 16) num_threads(nthreads)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(reps); ++r) {
    try {
      Eigen::VectorXd w(n);
      double est = 0.0;
      simulate_limit_draw(spec, opts, seed, static_cast<std::size_t>(r), w, est);
      weights.row(r) = w.transpose();
      estimates(r) = est;
    } catch (const std::exception& e) {
#pragma omp critical(unitavg_limit_error)
      if (static_cast<std::size_t>(r) < error_draw) {
        error_draw = static_cast<std::size_t>(r);
        first_error = e.what();
      }
    }
  }
  if (error_draw < reps) {
    throw Error("limit draw " + std::to_string(error_draw) + " failed: " + first_error);
  }
  return {weights, estimates};
}

Eigen::MatrixXd simulate_limit_weights(const LimitSpec& spec, const LimitOptions& opts,
                                       std::size_t reps, std::uint64_t seed, int threads) {
  return simulate_limit(spec, opts, reps, seed, threads).weights;
}

Eigen::VectorXd simulate_limit_estimator(const LimitSpec& spec, const LimitOptions& opts,
                                         std::size_t reps, std::uint64_t seed, int threads) {
  return simulate_limit(spec, opts, reps, seed, threads).estimates;
}

namespace serial {

LimitSample simulate_limit(const LimitSpec& spec, const LimitOptions& opts, std::size_t reps,
                           std::uint64_t seed) {
  check_options(spec, opts);
  if (reps == 0) throw Error("reps must be at least 1");
  const auto n = static_cast<Eigen::Index>(spec.size());
  LimitSample out{Eigen::MatrixXd(static_cast<Eigen::Index>(reps), n),
                  Eigen::VectorXd(static_cast<Eigen::Index>(reps))};
  for (std::size_t r = 0; r < reps; ++r) {
    Eigen::VectorXd w(n);
    double est = 0.0;
    try {
      simulate_limit_draw(spec, opts, seed, r, w, est);
    } catch (const std::exception& e) {
      throw Error("limit draw " + std::to_string(r) + " failed: " + e.what());
    }
    out.weights.row(static_cast<Eigen::Index>(r)) = w.transpose();
    out.estimates(static_cast<Eigen::Index>(r)) = est;
  }
  return out;
}

}  // namespace serial

}  // namespace unitavg
