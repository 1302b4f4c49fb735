#include "unitavg/cli.hpp"

#include <filesystem>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "unitavg/error.hpp"
#include "unitavg/io.hpp"
#include "unitavg/lamse.hpp"
#include "unitavg/montecarlo.hpp"
#include "unitavg/oracle.hpp"
#include "unitavg/panel.hpp"
#include "unitavg/weights.hpp"

namespace unitavg {

namespace {

struct UsageError : Error {
  using Error::Error;
};

struct ModelArgs {
  std::string panel;
  std::string unit;
  std::string focus;
  std::string vcov = "hc0";
  bool intercept = false;
  int lag = 0;
  std::string regime = "fixed";
  std::size_t nbar = 0;
  std::vector<std::string> order;
};

void add_model_options(CLI::App* cmd, ModelArgs& a) {
  cmd->add_option("--panel", a.panel, "panel CSV (unit,time,y,x1,...,xd)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--unit", a.unit, "target unit id")->required();
  cmd->add_option("--focus", a.focus,
                  "coordinate:<k> | condmean:<a1,...,ap>:<b> | longrun:<i_beta>:<i_lambda>")
      ->required();
  cmd->add_option("--vcov", a.vcov, "hc0 or nw:L")->capture_default_str();
  cmd->add_flag("--intercept", a.intercept, "include an intercept");
  cmd->add_option("--lag", a.lag, "lagged outcome as regressor (0 or 1)")
      ->check(CLI::IsMember({0, 1}))
      ->capture_default_str();
  cmd->add_option("--regime", a.regime, "fixed or large")
      ->check(CLI::IsMember({"fixed", "large"}))
      ->capture_default_str();
  cmd->add_option("--nbar", a.nbar, "number of unrestricted units (large regime)");
  cmd->add_option("--order", a.order, "unit ids ranked for the large regime")->delimiter(',');
}

// Input files that fail to parse or violate their schema are usage errors:
// they are detected before any computation starts.
template <class F>
auto load_input(const std::string& what, F&& load) {
  try {
    return load();
  } catch (const Error& e) {
    throw UsageError(what + ": " + e.what());
  }
}

void check_output_path(const std::string& path) {
  if (path.empty()) return;
  namespace fs = std::filesystem;
  const fs::path parent = fs::absolute(fs::path(path)).parent_path();
  if (!fs::is_directory(parent)) {
    throw UsageError("output directory '" + parent.string() + "' does not exist");
  }
}

// Fits with the target first, remaining units in input order. The large-regime
// ordering indexes into the fits and defaults to input order.
struct PreparedPanel {
  PanelData panel;
  ModelSpec spec;
  Focus focus;
  std::vector<UnitFit> fits;
  std::vector<std::size_t> ordering;
  double T = 0.0;
};

PreparedPanel prepare(const ModelArgs& a) {
  ModelSpec spec;
  spec.include_intercept = a.intercept;
  spec.lag_order = a.lag;
  Focus focus = [&] {
    try {
      return Focus::parse(a.focus);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }();
  try {
    spec.vcov = VcovSpec::parse(a.vcov);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  PanelData raw = load_input(a.panel, [&] { return load_panel_file(a.panel); });
  if (!raw.contains(a.unit)) throw UsageError("unit '" + a.unit + "' is not in the panel");
  std::vector<std::size_t> order{raw.index_of(a.unit)};
  for (std::size_t i = 0; i < raw.num_units(); ++i)
    if (i != order.front()) order.push_back(i);
  PanelData panel = raw.reordered(order);

  std::vector<std::size_t> ordering;
  if (a.regime == "large") {
    std::vector<bool> used(panel.num_units(), false);
    for (const auto& id : a.order) {
      if (!panel.contains(id)) throw UsageError("--order: unknown unit '" + id + "'");
      const std::size_t k = panel.index_of(id);
      if (used[k]) throw UsageError("--order: unit '" + id + "' listed twice");
      used[k] = true;
      ordering.push_back(k);
    }
    for (const auto& id : raw.unit_ids()) {
      const std::size_t k = panel.index_of(id);
      if (!used[k]) ordering.push_back(k);
    }
  }
  std::vector<UnitFit> fits = fit_all(panel, spec);
  const double T = static_cast<double>(fits.front().T_eff);
  return {std::move(panel), spec, std::move(focus), std::move(fits), std::move(ordering), T};
}

int cmd_estimate(const ModelArgs& a, const std::string& scheme_name, const std::string& out_path,
                 std::ostream& out) {
  check_output_path(out_path);
  SchemeSpec scheme = [&] {
    try {
      return SchemeSpec::parse(scheme_name);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }();
  if (a.regime == "large" && scheme.kind == SchemeSpec::Kind::MinMseFixed) {
    scheme = SchemeSpec::parse("minmse-large:" + std::to_string(a.nbar));
  }
  PreparedPanel p = prepare(a);
  if (scheme.kind == SchemeSpec::Kind::MinMseLarge && scheme.nbar >= p.fits.size()) {
    throw RegimeError("nbar = " + std::to_string(scheme.nbar) + " but only " +
                      std::to_string(p.fits.size()) + " units; use --regime fixed");
  }
  SchemeInputs in{p.fits, &p.panel, &p.spec, &p.focus, p.T, p.ordering};
  const WeightVector w = compute_weights(scheme, in);
  const double estimate = unit_average(p.fits, p.focus, w);
  nlohmann::json j = to_json(w, p.panel.unit_ids());
  if (!out_path.empty()) atomic_write(out_path, j.dump(2) + "\n");
  j["estimate"] = estimate;
  out << j.dump(2) << '\n';
  return 0;
}

int cmd_psi(const ModelArgs& a, const std::string& matrix, const std::string& out_path,
            std::ostream& out) {
  check_output_path(out_path);
  PreparedPanel p = prepare(a);
  Eigen::MatrixXd m;
  if (matrix == "psi_hat") {
    m = build_psi_hat(p.fits, p.focus, p.T).psi;
  } else if (matrix == "psi_tilde") {
    m = build_psi_tilde(p.fits, p.focus, p.T).psi_tilde;
  } else {
    if (a.regime != "large") throw UsageError("q_hat needs --regime large --nbar K");
    m = build_largeN_objective(p.fits, p.focus, p.T, a.nbar, p.ordering).q;
  }
  std::ostringstream csv;
  write_matrix_csv(csv, m);
  if (out_path.empty()) {
    out << csv.str();
  } else {
    atomic_write(out_path, csv.str());
  }
  return 0;
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed, int threads,
                 const std::string& out_path) {
  check_output_path(out_path);
  SimConfig config =
      load_input(config_path, [&] { return sim_config_from_json(read_json_file(config_path)); });
  config.seed = seed;
  if (threads > 0) config.threads = threads;
  const SimResult result = run_study(config);
  std::ostringstream csv;
  write_results_csv(csv, result);
  atomic_write(out_path, csv.str());
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

int cmd_limit(const std::string& config_path, const std::string& regime, std::size_t reps,
              std::uint64_t seed, int threads, const std::string& out_path) {
  check_output_path(out_path);
  const LimitSpec spec = load_input(config_path, [&] {
    LimitSpec s = limit_spec_from_json(read_json_file(config_path));
    s.validate();
    return s;
  });
  LimitOptions opts;
  opts.regime = regime == "large" ? LimitRegime::Large : LimitRegime::Fixed;
  const LimitSample sample = simulate_limit(spec, opts, reps, seed, threads);
  std::ostringstream csv;
  write_limit_sample_csv(csv, sample, opts.regime == LimitRegime::Large);
  atomic_write(out_path, csv.str());
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Minimum-MSE unit averaging for heterogeneous panels", "unitavg"};
  app.require_subcommand(1, 1);

  ModelArgs est_args;
  std::string scheme = "minmse";
  std::string est_out;
  auto* est = app.add_subcommand("estimate", "weights and averaged estimate for one unit");
  add_model_options(est, est_args);
  est->add_option("--scheme", scheme,
                  "minmse | individual | mean-group | stein:L | aic | bic | mma")
      ->capture_default_str();
  est->add_option("--out", est_out, "write the weights JSON here as well");

  ModelArgs psi_args;
  std::string matrix = "psi_hat";
  std::string psi_out;
  auto* psi = app.add_subcommand("psi", "dump a criterion matrix as CSV");
  add_model_options(psi, psi_args);
  psi->add_option("--matrix", matrix, "psi_hat | psi_tilde | q_hat")
      ->check(CLI::IsMember({"psi_hat", "psi_tilde", "q_hat"}))
      ->capture_default_str();
  psi->add_option("--out", psi_out, "output CSV (default: standard output)");

  std::string sim_config;
  std::string sim_out;
  std::uint64_t sim_seed = 0;
  int sim_threads = 0;
  auto* sim = app.add_subcommand("simulate", "run the Monte Carlo study");
  sim->add_option("--config", sim_config, "study config JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", sim_seed, "master seed")->required();
  sim->add_option("--threads", sim_threads, "worker threads (0 = default)");
  sim->add_option("--out", sim_out, "results CSV")->required();

  std::string lim_config;
  std::string lim_out;
  std::string lim_regime = "fixed";
  std::size_t lim_reps = 0;
  std::uint64_t lim_seed = 0;
  int lim_threads = 0;
  auto* lim = app.add_subcommand("limit", "sample the limit weights and estimator");
  lim->add_option("--config", lim_config, "limit spec JSON")->required()->check(CLI::ExistingFile);
  lim->add_option("--reps", lim_reps, "number of draws")->required()->check(CLI::PositiveNumber);
  lim->add_option("--seed", lim_seed, "master seed")->required();
  lim->add_option("--threads", lim_threads, "worker threads (0 = default)");
  lim->add_option("--regime", lim_regime, "fixed or large")
      ->check(CLI::IsMember({"fixed", "large"}))
      ->capture_default_str();
  lim->add_option("--out", lim_out, "samples CSV")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (est->parsed()) return cmd_estimate(est_args, scheme, est_out, out);
    if (psi->parsed()) return cmd_psi(psi_args, matrix, psi_out, out);
    if (sim->parsed()) return cmd_simulate(sim_config, sim_seed, sim_threads, sim_out);
    if (lim->parsed()) return cmd_limit(lim_config, lim_regime, lim_reps, lim_seed, lim_threads, lim_out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace unitavg
