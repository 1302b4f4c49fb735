#include "unitavg/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "unitavg/error.hpp"

namespace unitavg {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line, std::string_view column) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError(line, "column '" + std::string(column) + "': not a finite number: '" +
                               std::string(s) + "'");
  }
  return v;
}

std::int64_t parse_time(std::string_view s, std::size_t line) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(line, "column 'time': not an integer: '" + std::string(s) + "'");
  }
  return v;
}

// Ridge rule shared by the design Gram matrix and the variance floor.
constexpr double kRidgeTrigger = 1e-10;
constexpr double kRidgeSize = 1e-8;

}  // namespace

PanelData::PanelData(std::vector<UnitSeries> units, std::vector<std::string> covariate_names)
    : units_(std::move(units)), names_(std::move(covariate_names)) {
  d_ = units_.empty() ? static_cast<Eigen::Index>(names_.size()) : units_.front().x.cols();
  if (names_.empty()) {
    for (Eigen::Index k = 0; k < d_; ++k) names_.push_back("x" + std::to_string(k + 1));
  }
  if (static_cast<Eigen::Index>(names_.size()) != d_) {
    throw DimensionError("covariate names do not match covariate dimension");
  }
  std::unordered_map<std::string, int> seen;
  for (auto& u : units_) {
    if (!seen.emplace(u.id, 0).second) throw Error("duplicate unit id '" + u.id + "'");
    const auto n = static_cast<Eigen::Index>(u.times.size());
    if (u.y.size() != n || u.x.rows() != n) {
      throw DimensionError("unit '" + u.id + "': times, y and x have different lengths");
    }
    if (u.x.cols() != d_) {
      throw DimensionError("unit '" + u.id + "' has " + std::to_string(u.x.cols()) +
                           " covariates, expected " + std::to_string(d_));
    }
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::stable_sort(perm.begin(), perm.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return u.times[a] < u.times[b]; });
    UnitSeries sorted{u.id, {}, Eigen::VectorXd(n), Eigen::MatrixXd(n, d_)};
    for (Eigen::Index r = 0; r < n; ++r) {
      sorted.times.push_back(u.times[perm[r]]);
      sorted.y(r) = u.y(perm[r]);
      sorted.x.row(r) = u.x.row(perm[r]);
      if (r > 0 && sorted.times[r] == sorted.times[r - 1]) {
        throw Error("duplicate (unit, time) = (" + u.id + ", " +
                    std::to_string(sorted.times[r]) + ")");
      }
    }
    u = std::move(sorted);
    ids_.push_back(u.id);
  }
  balanced_ = std::all_of(units_.begin(), units_.end(),
                          [&](const UnitSeries& u) { return u.times == units_.front().times; });
}

std::size_t PanelData::num_periods() const noexcept {
  std::size_t t = 0;
  for (const auto& u : units_) t = std::max(t, u.times.size());
  return t;
}

std::size_t PanelData::index_of(const std::string& id) const {
  const auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw Error("unknown unit '" + id + "'");
  return static_cast<std::size_t>(it - ids_.begin());
}

bool PanelData::contains(const std::string& id) const noexcept {
  return std::find(ids_.begin(), ids_.end(), id) != ids_.end();
}

const UnitSeries& PanelData::unit(const std::string& id) const { return units_[index_of(id)]; }

PanelData PanelData::reordered(const std::vector<std::size_t>& order) const {
  if (order.size() != units_.size()) throw DimensionError("reordering must list every unit");
  std::vector<bool> used(units_.size(), false);
  std::vector<UnitSeries> out;
  out.reserve(order.size());
  for (std::size_t idx : order) {
    if (idx >= units_.size() || used[idx]) throw Error("reordering is not a permutation");
    used[idx] = true;
    out.push_back(units_[idx]);
  }
  return PanelData(std::move(out), names_);
}

PanelData load_panel(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    for (auto f : split_fields(line)) header.emplace_back(f);
    break;
  }
  if (header.empty()) throw ParseError(lineno == 0 ? 1 : lineno, "missing header");
  if (!header.empty() && header[0].size() >= 3 &&
      header[0].compare(0, 3, "\xEF\xBB\xBF") == 0) {
    header[0].erase(0, 3);
  }
  if (header.size() < 3 || header[0] != "unit" || header[1] != "time" || header[2] != "y") {
    throw ParseError(lineno, "header must start with 'unit,time,y'");
  }
  const std::size_t d = header.size() - 3;
  std::vector<std::string> names(header.begin() + 3, header.end());

  struct Rows {
    std::vector<std::int64_t> times;
    std::vector<double> y;
    std::vector<double> x;
    std::map<std::int64_t, std::size_t> first_line;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Rows> rows;

  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError(lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                   std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw ParseError(lineno, "empty unit id");
    std::string id(fields[0]);
    const std::int64_t t = parse_time(fields[1], lineno);
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    Rows& r = it->second;
    if (auto [pos, fresh] = r.first_line.emplace(t, lineno); !fresh) {
      throw ParseError(lineno, "duplicate (unit, time) = (" + id + ", " + std::to_string(t) +
                                   "), first seen on line " + std::to_string(pos->second));
    }
    r.times.push_back(t);
    r.y.push_back(parse_double(fields[2], lineno, "y"));
    for (std::size_t k = 0; k < d; ++k) r.x.push_back(parse_double(fields[3 + k], lineno, names[k]));
  }

  std::vector<UnitSeries> units;
  units.reserve(order.size());
  for (const auto& id : order) {
    Rows& r = rows[id];
    const auto n = static_cast<Eigen::Index>(r.times.size());
    UnitSeries u{id, std::move(r.times), Eigen::Map<Eigen::VectorXd>(r.y.data(), n),
                 Eigen::MatrixXd(n, static_cast<Eigen::Index>(d))};
    for (Eigen::Index i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k)
        u.x(i, static_cast<Eigen::Index>(k)) = r.x[static_cast<std::size_t>(i) * d + k];
    units.push_back(std::move(u));
  }
  return PanelData(std::move(units), std::move(names));
}

PanelData load_panel_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open panel file '" + path + "'");
  return load_panel(in);
}

void write_panel(std::ostream& out, const PanelData& panel) {
  out << "unit,time,y";
  for (const auto& n : panel.covariate_names()) out << ',' << n;
  out << '\n';
  char buf[64];
  auto num = [&](double v) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
  };
  for (std::size_t i = 0; i < panel.num_units(); ++i) {
    const auto& u = panel.unit(i);
    for (std::size_t r = 0; r < u.times.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      out << u.id << ',' << u.times[r] << ',' << num(u.y(row));
      for (Eigen::Index k = 0; k < u.x.cols(); ++k) out << ',' << num(u.x(row, k));
      out << '\n';
    }
  }
}

VcovSpec VcovSpec::parse(const std::string& text) {
  if (text == "hc0") return {};
  if (text.rfind("nw:", 0) == 0) {
    int lag = -1;
    const std::string_view s(text.data() + 3, text.size() - 3);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), lag);
    if (ec == std::errc() && ptr == s.data() + s.size() && lag >= 0) {
      return {VcovKind::NeweyWest, lag};
    }
  }
  throw Error("invalid vcov '" + text + "' (expected hc0 or nw:L with L >= 0)");
}

void ModelSpec::validate() const {
  if (lag_order != 0 && lag_order != 1) throw Error("lag order must be 0 or 1");
  if (vcov.lag < 0) throw Error("Newey-West lag must be nonnegative");
}

Design build_design(const UnitSeries& series, const ModelSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(series.times.size());
  const Eigen::Index d = series.x.cols();
  const Eigen::Index lag = spec.lag_order;
  const Eigen::Index p = spec.num_params(d);
  const Eigen::Index rows = std::max<Eigen::Index>(n - lag, 0);
  if (lag == 1) {
    for (Eigen::Index t = 1; t < n; ++t) {
      if (series.times[t] != series.times[t - 1] + 1) {
        throw InsufficientDataError("unit '" + series.id + "': period " +
                                    std::to_string(series.times[t] - 1) +
                                    " missing; the lagged outcome would be undefined");
      }
    }
  }
  Design out{Eigen::MatrixXd(rows, p), series.y.tail(rows)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index t = r + lag;
    Eigen::Index c = 0;
    if (spec.include_intercept) out.X(r, c++) = 1.0;
    out.X.row(r).segment(c, d) = series.x.row(t);
    c += d;
    if (lag == 1) out.X(r, c) = series.y(t - 1);
  }
  return out;
}

Eigen::MatrixXd estimate_variance(const Eigen::MatrixXd& X, const Eigen::VectorXd& resid,
                                  const VcovSpec& vcov, bool* floored) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const double tn = static_cast<double>(n);
  Eigen::MatrixXd H = (X.transpose() * X) / tn;
  const double scale = H.trace() / static_cast<double>(p);
  if (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff() < kRidgeTrigger * scale) {
    H.diagonal().array() += kRidgeSize * scale;
  }
  const Eigen::MatrixXd scores = X.array().colwise() * resid.array();
  Eigen::MatrixXd sigma = (scores.transpose() * scores) / tn;
  if (vcov.kind == VcovKind::NeweyWest) {
    for (int l = 1; l <= vcov.lag && l < n; ++l) {
      const double weight = 1.0 - static_cast<double>(l) / (vcov.lag + 1.0);
      const Eigen::MatrixXd gamma =
          (scores.bottomRows(n - l).transpose() * scores.topRows(n - l)) / tn;
      sigma += weight * (gamma + gamma.transpose());
    }
  }
  const Eigen::MatrixXd Hinv = H.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd V = Hinv * sigma * Hinv;
  V = (0.5 * (V + V.transpose())).eval();

  // Floor: V must stay PD even for exact fits (zero residuals).
  const double base = std::max(V.trace() / static_cast<double>(p),
                               1e-12 * Hinv.trace() / static_cast<double>(p));
  const double min_eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(V, Eigen::EigenvaluesOnly).eigenvalues()(0);
  const bool hit = min_eig < kRidgeTrigger * base;
  if (hit) V.diagonal().array() += kRidgeSize * base;
  if (floored) *floored = hit;
  return V;
}

UnitFit fit_design(const Design& design, const ModelSpec& spec, std::string unit_id) {
  const Eigen::Index n = design.X.rows();
  const Eigen::Index p = design.X.cols();
  if (n < p + 1) {
    throw InsufficientDataError("unit '" + unit_id + "': " + std::to_string(n) +
                                " usable observations for " + std::to_string(p) +
                                " coefficients (need at least " + std::to_string(p + 1) + ")");
  }
  const double tn = static_cast<double>(n);
  Eigen::MatrixXd H = (design.X.transpose() * design.X) / tn;
  const double scale = H.trace() / static_cast<double>(p);
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw SingularDesignError("unit '" + unit_id + "': design matrix is zero or not finite");
  }
  UnitFit fit;
  fit.unit_id = std::move(unit_id);
  const double min_eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H, Eigen::EigenvaluesOnly).eigenvalues()(0);
  if (min_eig < kRidgeTrigger * scale) {
    H.diagonal().array() += kRidgeSize * scale;
    fit.ridged = true;
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) {
    throw SingularDesignError("unit '" + fit.unit_id + "': design is singular beyond ridge repair");
  }
  fit.theta = llt.solve(design.X.transpose() * design.y / tn);
  const Eigen::VectorXd resid = design.y - design.X * fit.theta;
  fit.T_eff = n;
  fit.ssr = resid.squaredNorm();
  fit.sigma2 = fit.ssr / tn;
  fit.V = estimate_variance(design.X, resid, spec.vcov, &fit.variance_floored);
  return fit;
}

UnitFit fit_unit(const PanelData& panel, const std::string& unit, const ModelSpec& spec) {
  return fit_design(build_design(panel.unit(unit), spec), spec, unit);
}

std::vector<UnitFit> fit_all(const PanelData& panel, const ModelSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::ptrdiff_t>(panel.num_units());
  std::vector<UnitFit> fits(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      fits[k] = fit_design(build_design(panel.unit(k), spec), spec, panel.unit_ids()[k]);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  std::string msg;
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (errors[k].empty()) continue;
    if (!msg.empty()) msg += "; ";
    msg += "unit '" + panel.unit_ids()[k] + "': " + errors[k];
  }
  if (!msg.empty()) throw Error("fit failed for " + msg);
  return fits;
}

double gaussian_loglik(const Design& design, const Eigen::VectorXd& theta, double sigma2) {
  if (theta.size() != design.X.cols()) {
    throw DimensionError("theta has " + std::to_string(theta.size()) + " entries, model has " +
                         std::to_string(design.X.cols()));
  }
  if (!(sigma2 > 0.0)) throw Error("sigma2 must be positive");
  const double n = static_cast<double>(design.X.rows());
  const double ssr = (design.y - design.X * theta).squaredNorm();
  return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * ssr / sigma2;
}

double loglik_on_unit(const PanelData& panel, const std::string& unit,
                      const Eigen::VectorXd& theta, double sigma2, const ModelSpec& spec) {
  return gaussian_loglik(build_design(panel.unit(unit), spec), theta, sigma2);
}

UnitFit LeastSquaresEstimator::fit(const PanelData& panel, const std::string& unit) const {
  return fit_unit(panel, unit, spec_);
}

double LeastSquaresEstimator::loglik(const PanelData& panel, const std::string& unit,
                                     const Eigen::VectorXd& theta, double sigma2) const {
  return loglik_on_unit(panel, unit, theta, sigma2, spec_);
}

double LeastSquaresEstimator::ssr(const PanelData& panel, const std::string& unit,
                                  const Eigen::VectorXd& theta) const {
  const Design d = build_design(panel.unit(unit), spec_);
  if (theta.size() != d.X.cols()) throw DimensionError("theta dimension mismatch");
  return (d.y - d.X * theta).squaredNorm();
}

Eigen::Index LeastSquaresEstimator::num_params(const PanelData& panel) const {
  return spec_.num_params(panel.num_covariates());
}

}  // namespace unitavg
