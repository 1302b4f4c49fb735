#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "unitavg/montecarlo.hpp"
#include "unitavg/oracle.hpp"
#include "unitavg/weights.hpp"

namespace unitavg {

/// {"etas": [[...], ...], "variances": [[[...], ...], ...], "d0": [...]}
LimitSpec limit_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LimitSpec& spec);

/// Keys: N, T, replications, lambda1_grid, schemes, focus ("lambda" |
/// "condmean"), seed, threads, freeze_heterogeneity, heterogeneity_scale,
/// sigma2_override. Missing keys keep their defaults.
SimConfig sim_config_from_json(const nlohmann::json& j);

/// {scheme, unit_ids, weights, criterion_value, nbar?}
nlohmann::json to_json(const WeightVector& w, const std::vector<std::string>& unit_ids);

nlohmann::json read_json_file(const std::string& path);

/// Row-major, full storage, shortest round-trip decimal formatting.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);

/// Header `draw,w_1,...,w_n[,tail],estimate`.
void write_limit_sample_csv(std::ostream& out, const LimitSample& sample, bool with_tail);

/// Writes `content` to a temporary file next to `path`, then renames it.
void atomic_write(const std::string& path, const std::string& content);

std::string format_number(double v);

}  // namespace unitavg
