#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unitavg/panel.hpp"
#include "unitavg/rng.hpp"

namespace testing {

inline unitavg::UnitFit make_fit(Eigen::VectorXd theta, Eigen::MatrixXd V, std::string id = {}) {
  unitavg::UnitFit f;
  f.unit_id = std::move(id);
  f.theta = std::move(theta);
  f.V = std::move(V);
  f.T_eff = 1;
  return f;
}

inline unitavg::UnitFit scalar_fit(double theta, double v, std::string id = {}) {
  return make_fit(Eigen::VectorXd::Constant(1, theta), Eigen::MatrixXd::Constant(1, 1, v),
                  std::move(id));
}

inline Eigen::MatrixXd random_matrix(unitavg::CounterRng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

inline Eigen::VectorXd random_vector(unitavg::CounterRng& rng, Eigen::Index n, double sd = 1.0) {
  return random_matrix(rng, n, 1).col(0) * sd;
}

/// Random SPD matrix A A' / p + eps I.
inline Eigen::MatrixXd random_spd(unitavg::CounterRng& rng, Eigen::Index p, double eps = 0.05) {
  const Eigen::MatrixXd a = random_matrix(rng, p, p);
  return a * a.transpose() / static_cast<double>(p) + eps * Eigen::MatrixXd::Identity(p, p);
}

/// Random PSD matrix of rank r (r <= m).
inline Eigen::MatrixXd random_psd(unitavg::CounterRng& rng, Eigen::Index m, Eigen::Index r) {
  const Eigen::MatrixXd a = random_matrix(rng, m, r);
  Eigen::MatrixXd q = a * a.transpose();
  return 0.5 * (q + q.transpose());
}

/// Random fits with p parameters, spread `spread` around a common centre.
inline std::vector<unitavg::UnitFit> random_fits(unitavg::CounterRng& rng, std::size_t n,
                                                 Eigen::Index p, double spread = 0.3) {
  std::vector<unitavg::UnitFit> fits;
  const Eigen::VectorXd centre = random_vector(rng, p);
  for (std::size_t i = 0; i < n; ++i) {
    fits.push_back(make_fit(centre + random_vector(rng, p, spread), random_spd(rng, p),
                            "u" + std::to_string(i)));
  }
  return fits;
}

inline unitavg::UnitSeries series(std::string id, std::vector<std::int64_t> times,
                                  std::vector<double> y, std::vector<std::vector<double>> x) {
  unitavg::UnitSeries s;
  s.id = std::move(id);
  s.times = std::move(times);
  s.y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::Index d = x.empty() ? 0 : static_cast<Eigen::Index>(x.front().size());
  s.x.resize(static_cast<Eigen::Index>(x.size()), d);
  for (std::size_t t = 0; t < x.size(); ++t)
    for (Eigen::Index j = 0; j < d; ++j) s.x(static_cast<Eigen::Index>(t), j) = x[t][j];
  if (x.empty()) s.x.resize(s.y.size(), 0);
  return s;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("unitavg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
