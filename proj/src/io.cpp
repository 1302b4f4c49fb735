#include "unitavg/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <unistd.h>

#include "unitavg/error.hpp"

namespace unitavg {

namespace {

Eigen::VectorXd vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw Error(what + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(what + " must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (j.is_number()) return Eigen::MatrixXd::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw Error(what + " must be a nonempty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::VectorXd row = vector_from_json(j[static_cast<std::size_t>(r)], what);
    if (r == 0) m.resize(rows, row.size());
    if (row.size() != m.cols()) throw Error(what + " has ragged rows");
    m.row(r) = row.transpose();
  }
  return m;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

LimitSpec limit_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("limit spec must be a JSON object");
  for (const char* key : {"etas", "variances", "d0"}) {
    if (!j.contains(key)) throw Error(std::string("limit spec is missing '") + key + "'");
  }
  LimitSpec spec;
  spec.d0 = vector_from_json(j["d0"], "d0");
  for (const auto& e : j["etas"]) spec.etas.push_back(vector_from_json(e, "etas[i]"));
  for (const auto& v : j["variances"]) spec.variances.push_back(matrix_from_json(v, "variances[i]"));
  spec.validate();
  return spec;
}

nlohmann::json to_json(const LimitSpec& spec) {
  nlohmann::json j;
  j["d0"] = std::vector<double>(spec.d0.data(), spec.d0.data() + spec.d0.size());
  j["etas"] = nlohmann::json::array();
  for (const auto& e : spec.etas) j["etas"].push_back(std::vector<double>(e.data(), e.data() + e.size()));
  j["variances"] = nlohmann::json::array();
  for (const auto& v : spec.variances) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(v.cols()));
      for (Eigen::Index c = 0; c < v.cols(); ++c) row[static_cast<std::size_t>(c)] = v(r, c);
      rows.push_back(row);
    }
    j["variances"].push_back(rows);
  }
  return j;
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("simulation config must be a JSON object");
  static const std::vector<std::string> known{
      "N",      "T",       "replications",         "lambda1_grid",        "schemes",        "focus",
      "seed",   "threads", "freeze_heterogeneity", "heterogeneity_scale", "sigma2_override"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error("simulation config: unknown key '" + key + "'");
    }
  }
  SimConfig c;
  try {
    if (j.contains("N")) c.N = j["N"].get<std::size_t>();
    if (j.contains("T")) c.T = j["T"].get<std::size_t>();
    if (j.contains("replications")) c.replications = j["replications"].get<std::size_t>();
    if (j.contains("lambda1_grid")) c.lambda1_grid = j["lambda1_grid"].get<std::vector<double>>();
    if (j.contains("schemes")) c.schemes = j["schemes"].get<std::vector<std::string>>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
    if (j.contains("freeze_heterogeneity"))
      c.freeze_heterogeneity = j["freeze_heterogeneity"].get<bool>();
    if (j.contains("heterogeneity_scale"))
      c.heterogeneity_scale = j["heterogeneity_scale"].get<double>();
    if (j.contains("sigma2_override") && !j["sigma2_override"].is_null())
      c.sigma2_override = j["sigma2_override"].get<double>();
    if (j.contains("focus")) {
      const auto f = j["focus"].get<std::string>();
      if (f == "lambda") {
        c.focus = SimFocus::Lambda;
      } else if (f == "condmean") {
        c.focus = SimFocus::ConditionalMean;
      } else {
        throw Error("simulation config: focus must be 'lambda' or 'condmean'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("simulation config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const WeightVector& w, const std::vector<std::string>& unit_ids) {
  nlohmann::json j;
  j["scheme"] = w.scheme;
  j["unit_ids"] = unit_ids;
  j["weights"] = std::vector<double>(w.w.data(), w.w.data() + w.w.size());
  j["criterion_value"] = w.criterion_value ? nlohmann::json(*w.criterion_value) : nlohmann::json();
  if (w.nbar) j["nbar"] = *w.nbar;
  return j;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_number(m(r, c));
    out << '\n';
  }
}

void write_limit_sample_csv(std::ostream& out, const LimitSample& sample, bool with_tail) {
  const Eigen::Index n = sample.weights.cols();
  out << "draw";
  for (Eigen::Index i = 0; i < n; ++i) out << ",w_" << (i + 1);
  if (with_tail) out << ",tail";
  out << ",estimate\n";
  for (Eigen::Index r = 0; r < sample.weights.rows(); ++r) {
    out << r;
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_number(sample.weights(r, i));
    if (with_tail) out << ',' << format_number(1.0 - sample.weights.row(r).sum());
    out << ',' << format_number(sample.estimates(r)) << '\n';
  }
}

void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error("cannot move output into place at '" + path + "'");
  }
}

}  // namespace unitavg
