#include "unitavg/montecarlo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>

#include <omp.h>

#include "unitavg/error.hpp"
#include "unitavg/lamse.hpp"

namespace unitavg {

namespace {

constexpr std::uint64_t kFrozenStream = std::numeric_limits<std::uint64_t>::max();

double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

double column_mean(const Eigen::MatrixXd& m, Eigen::Index col) {
  const Eigen::VectorXd c = m.col(col);
  return pairwise_sum(c.data(), static_cast<std::size_t>(c.size())) / static_cast<double>(c.size());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

Focus study_focus(const SimConfig& config, double y_last) {
  if (config.focus == SimFocus::Lambda) return Coordinate{1};
  Eigen::VectorXd a(2);
  a << 1.0, y_last;  // x_{T+1} = 1
  return AffineConditionalMean{a, 0.0};
}

ReplicationOutcome replication_kernel(const SimConfig& config,
                                      const std::vector<SchemeSpec>& schemes,
                                      std::size_t grid_index, std::size_t rep_index) {
  ReplicationOutcome out;
  CounterRng rng(config.seed, {grid_index, rep_index});
  CounterRng frozen(config.seed, {grid_index, kFrozenStream});
  const double g = config.lambda1_grid.at(grid_index);
  DgpSample sample = generate_dgp(config, g, rng, config.freeze_heterogeneity ? &frozen : nullptr);

  const ModelSpec spec = study_model();
  const UnitSeries& target = sample.panel.unit(0);
  const Focus focus = study_focus(config, target.y(target.y.size() - 1));
  out.truth = focus.value(sample.truths.front());
  try {
    const std::vector<UnitFit> fits = fit_all(sample.panel, spec);
    SchemeInputs in;
    in.fits = fits;
    in.panel = &sample.panel;
    in.spec = &spec;
    in.focus = &focus;
    in.T = static_cast<double>(fits.front().T_eff);
    for (const auto& s : schemes) {
      WeightVector w = compute_weights(s, in);
      w.scheme = s.name;
      const double est = unit_average(fits, focus, w);
      if (!std::isfinite(est)) throw Error("non-finite estimate for scheme " + s.name);
      out.estimates.push_back(est);
      out.squared_errors.push_back((est - out.truth) * (est - out.truth));
      out.weights.push_back(std::move(w));
    }
  } catch (const std::exception& e) {
    out.dropped = true;
    out.reason = e.what();
    out.estimates.clear();
    out.squared_errors.clear();
    out.weights.clear();
  }
  return out;
}

std::vector<SchemeSpec> parse_schemes(const SimConfig& config) {
  std::vector<SchemeSpec> out;
  for (const auto& s : resolved_schemes(config)) out.push_back(SchemeSpec::parse(s));
  return out;
}

GridResult aggregate(const SimConfig& config, std::size_t grid_index,
                     const std::vector<SchemeSpec>& schemes,
                     const std::vector<ReplicationOutcome>& reps) {
  GridResult gr;
  gr.lambda1 = config.lambda1_grid[grid_index];
  std::vector<const ReplicationOutcome*> kept;
  for (const auto& r : reps) {
    if (r.dropped) {
      ++gr.dropped;
      gr.drop_reasons.push_back(r.reason);
    } else {
      kept.push_back(&r);
    }
  }
  gr.n_effective = kept.size();
  const auto n = static_cast<Eigen::Index>(kept.size());
  const auto k = static_cast<Eigen::Index>(schemes.size());
  gr.squared_errors.resize(n, k);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index s = 0; s < k; ++s)
      gr.squared_errors(r, s) = kept[static_cast<std::size_t>(r)]->squared_errors[static_cast<std::size_t>(s)];

  for (Eigen::Index s = 0; s < k; ++s) {
    SchemeStats st;
    st.scheme = schemes[static_cast<std::size_t>(s)].name;
    if (n > 0) {
      st.mse = column_mean(gr.squared_errors, s);
      const Eigen::VectorXd dev =
          (gr.squared_errors.col(s).array() - st.mse).square().matrix();
      const double var = n > 1 ? pairwise_sum(dev.data(), static_cast<std::size_t>(n)) /
                                     static_cast<double>(n - 1)
                               : 0.0;
      st.mc_se = std::sqrt(var / static_cast<double>(n));
    } else {
      st.mse = std::numeric_limits<double>::quiet_NaN();
      st.mc_se = std::numeric_limits<double>::quiet_NaN();
    }
    gr.schemes.push_back(st);
    if (schemes[static_cast<std::size_t>(s)].kind == SchemeSpec::Kind::Mma && n > 0) {
      std::size_t unit1 = 0;
      for (const auto* r : kept)
        if (r->weights[static_cast<std::size_t>(s)].w(0) == 1.0) ++unit1;
      gr.mma_unit1_share = static_cast<double>(unit1) / static_cast<double>(n);
    }
  }
  return gr;
}

void add_warnings(SimResult& result, std::size_t reps) {
  for (const auto& g : result.grid) {
    if (static_cast<double>(g.dropped) > 0.01 * static_cast<double>(reps)) {
      result.warnings.push_back("grid lambda1 = " + format_double(g.lambda1) + ": " +
                                std::to_string(g.dropped) + " of " + std::to_string(reps) +
                                " replications dropped (first: " + g.drop_reasons.front() + ")");
    }
  }
}

}  // namespace

void SimConfig::validate() const {
  if (N < 1) throw Error("N must be at least 1");
  if (T < 10) throw Error("T must be at least 10");
  if (replications < 1) throw Error("replications must be at least 1");
  if (lambda1_grid.empty()) throw Error("lambda1 grid is empty");
  for (double g : lambda1_grid) {
    if (!(std::abs(g) < 1.0)) throw Error("lambda1 grid values must lie in (-1, 1)");
  }
  if (!(heterogeneity_scale >= 0.0)) throw Error("heterogeneity scale must be nonnegative");
  if (4.0 * heterogeneity_scale / std::sqrt(static_cast<double>(T)) >= 1.0) {
    throw Error("lambda support [-4, 4]/sqrt(T) (scaled) leaves the stationary region");
  }
  if (sigma2_override && !(*sigma2_override > 0.0)) throw Error("sigma2 override must be positive");
  if (schemes.empty()) throw Error("no schemes configured");
  for (const auto& s : schemes) SchemeSpec::parse(s);
}

ModelSpec study_model() {
  ModelSpec spec;
  spec.include_intercept = false;
  spec.lag_order = 1;
  return spec;
}

DgpSample generate_dgp(const SimConfig& config, double grid_value, CounterRng& rng,
                       CounterRng* heterogeneity) {
  if (!(std::abs(grid_value) < 1.0)) throw Error("grid value outside the stationary region");
  CounterRng& het = heterogeneity ? *heterogeneity : rng;
  const double rootT = std::sqrt(static_cast<double>(config.T));
  const auto periods = static_cast<Eigen::Index>(config.T + 1);  // t = 0..T

  std::vector<double> sigma2(config.N);
  DgpSample out;
  out.truths.resize(config.N);
  for (std::size_t i = 0; i < config.N; ++i) {
    const double s2 = het.exponential();
    const double eta_beta = het.normal();
    const double eta_lambda = het.uniform(-4.0, 4.0);
    sigma2[i] = config.sigma2_override.value_or(s2);
    const double beta = 1.0 + config.heterogeneity_scale * eta_beta / rootT;
    const double lambda = i == 0 ? grid_value : config.heterogeneity_scale * eta_lambda / rootT;
    if (!(std::abs(lambda) < 1.0)) throw Error("non-stationary lambda drawn");
    out.truths[i] = Eigen::Vector2d(beta, lambda);
  }

  std::vector<UnitSeries> units;
  units.reserve(config.N);
  for (std::size_t i = 0; i < config.N; ++i) {
    const double beta = out.truths[i](0);
    const double lambda = out.truths[i](1);
    const double sd = std::sqrt(sigma2[i]);
    UnitSeries u{std::to_string(i + 1), {}, Eigen::VectorXd(periods), Eigen::MatrixXd(periods, 1)};
    for (Eigen::Index t = 0; t < periods; ++t) {
      u.times.push_back(t);
      u.x(t, 0) = rng.normal();
    }
    u.y(0) = rng.normal() * std::sqrt((1.0 + sigma2[i]) / (1.0 - lambda * lambda));
    for (Eigen::Index t = 1; t < periods; ++t) {
      u.y(t) = beta * u.x(t, 0) + lambda * u.y(t - 1) + sd * rng.normal();
    }
    units.push_back(std::move(u));
  }
  out.panel = PanelData(std::move(units), {"x"});
  return out;
}

std::vector<std::string> resolved_schemes(const SimConfig& config) {
  std::vector<std::string> out;
  bool has_individual = false;
  for (const auto& s : config.schemes) {
    const std::string name = SchemeSpec::parse(s).name;
    if (name == "individual") has_individual = true;
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  }
  if (!has_individual) out.insert(out.begin(), "individual");
  return out;
}

ReplicationOutcome run_replication(const SimConfig& config, std::size_t grid_index,
                                   std::size_t rep_index) {
  config.validate();
  return replication_kernel(config, parse_schemes(config), grid_index, rep_index);
}

SimResult run_study(const SimConfig& config) {
  config.validate();
  const auto schemes = parse_schemes(config);
  SimResult result;
  for (const auto& s : schemes) result.schemes.push_back(s.name);
  const std::size_t reps = config.replications;
  const std::size_t grid = config.lambda1_grid.size();
  const int nthreads = config.threads > 0 ? config.threads : omp_get_max_threads();

  std::vector<ReplicationOutcome> outcomes(grid * reps);
#pragma omp parallel for schedule(dynamic, 4) num_threads(nthreads)
  for (std::ptrdiff_t job = 0; job < static_cast<std::ptrdiff_t>(grid * reps); ++job) {
    const auto j = static_cast<std::size_t>(job);
    outcomes[j] = replication_kernel(config, schemes, j / reps, j % reps);
  }
  for (std::size_t gi = 0; gi < grid; ++gi) {
    const std::vector<ReplicationOutcome> slice(
        outcomes.begin() + static_cast<std::ptrdiff_t>(gi * reps),
        outcomes.begin() + static_cast<std::ptrdiff_t>((gi + 1) * reps));
    result.grid.push_back(aggregate(config, gi, schemes, slice));
  }
  add_warnings(result, reps);
  return result;
}

namespace serial {

SimResult run_study(const SimConfig& config) {
  config.validate();
  const auto schemes = parse_schemes(config);
  SimResult result;
  for (const auto& s : schemes) result.schemes.push_back(s.name);
  for (std::size_t gi = 0; gi < config.lambda1_grid.size(); ++gi) {
    std::vector<ReplicationOutcome> reps;
    reps.reserve(config.replications);
    for (std::size_t r = 0; r < config.replications; ++r) {
      reps.push_back(replication_kernel(config, schemes, gi, r));
    }
    result.grid.push_back(aggregate(config, gi, schemes, reps));
  }
  add_warnings(result, config.replications);
  return result;
}

}  // namespace serial

std::vector<RelativeMseRow> relative_mse(const SimResult& result) {
  const auto it = std::find(result.schemes.begin(), result.schemes.end(), "individual");
  if (it == result.schemes.end()) throw Error("relative MSE needs the individual scheme");
  const auto ind = static_cast<Eigen::Index>(it - result.schemes.begin());
  std::vector<RelativeMseRow> rows;
  for (const auto& g : result.grid) {
    const double denom = g.schemes[static_cast<std::size_t>(ind)].mse;
    const auto n = static_cast<double>(g.n_effective);
    for (std::size_t s = 0; s < g.schemes.size(); ++s) {
      RelativeMseRow row;
      row.grid_lambda1 = g.lambda1;
      row.scheme = g.schemes[s].scheme;
      row.mse = g.schemes[s].mse;
      row.mc_se = g.schemes[s].mc_se;
      row.n_effective = g.n_effective;
      if (!(denom > 0.0) || g.n_effective < 2) {
        row.flagged = true;
        row.rel_mse = std::numeric_limits<double>::quiet_NaN();
        row.rel_se = std::numeric_limits<double>::quiet_NaN();
      } else {
        const auto col = static_cast<Eigen::Index>(s);
        const double a = row.mse;
        const Eigen::ArrayXd ea = g.squared_errors.col(col).array() - a;
        const Eigen::ArrayXd eb = g.squared_errors.col(ind).array() - denom;
        const double var_a = (ea * ea).sum() / (n - 1.0);
        const double var_b = (eb * eb).sum() / (n - 1.0);
        const double cov = (ea * eb).sum() / (n - 1.0);
        row.rel_mse = a / denom;
        const double v = (var_a / (denom * denom) - 2.0 * a * cov / std::pow(denom, 3) +
                          a * a * var_b / std::pow(denom, 4)) /
                         n;
        row.rel_se = std::sqrt(std::max(v, 0.0));
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_results_csv(std::ostream& out, const SimResult& result) {
  out << "grid_lambda1,scheme,mse,rel_mse,mc_se,n_effective\n";
  for (const auto& row : relative_mse(result)) {
    out << format_double(row.grid_lambda1) << ',' << row.scheme << ',' << format_double(row.mse)
        << ',' << format_double(row.rel_mse) << ',' << format_double(row.mc_se) << ','
        << row.n_effective << '\n';
  }
}

}  // namespace unitavg
