#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kldr/config.hpp"
#include "kldr/errors.hpp"
#include "kldr/linalg.hpp"
#include "kldr/macromodels.hpp"
#include "kldr/procspec.hpp"
#include "kldr/pseudotrue.hpp"
#include "kldr/ssm.hpp"

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using kldr::Error;
using kldr::errc;
using kldr::config::format_double;
using kldr::config::json;
namespace config = kldr::config;
namespace linalg = kldr::linalg;
namespace macromodels = kldr::macromodels;
namespace procspec = kldr::procspec;
namespace pseudotrue = kldr::pseudotrue;
namespace ssm = kldr::ssm;

// Directory of the command currently running, for the residual trace file
// written when a solver fails to converge.
std::string g_active_out_dir = ".";

struct Common {
  std::string config_path;
  std::string preset;
  std::string out_dir = ".";
  std::string format = "csv";
  std::uint64_t seed = 1;
  double tol = -1.0;  // negative means "use the command's default"
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Path to a .json or .toml config file");
  cmd->add_option("--preset", c.preset,
                  "Embedded calibration preset: nk-paper, rbc-paper, or dmp-paper");
  cmd->add_option("--out", c.out_dir, "Output directory, created if missing")
      ->capture_default_str();
  cmd->add_option("--format", c.format, "Tabular artifact format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  cmd->add_option("--seed", c.seed, "Seed for simulation outputs")->capture_default_str();
  cmd->add_option("--tol", c.tol, "Numerical tolerance override where applicable");
}

// ---------------------------------------------------------------------------
// Artifact emission
// ---------------------------------------------------------------------------

void prepare_out_dir(const Common& c) {
  std::error_code ec;
  std::filesystem::create_directories(c.out_dir, ec);
  if (ec)
    kldr::fail(errc::config_error,
               "cannot create output directory '" + c.out_dir + "': " + ec.message());
  g_active_out_dir = c.out_dir;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) kldr::fail(errc::config_error, "cannot write '" + path + "'");
  out << content;
}

void emit_json_file(const Common& c, const std::string& name, const json& value) {
  write_file(c.out_dir + "/" + name + ".json", value.dump(2) + "\n");
}

// Rectangular table whose cells are numbers or strings. CSV keeps the exact
// decimal form of every double; the json variant keeps native types.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  void add_row(std::vector<json> row) { rows.push_back(std::move(row)); }
};

std::string cell_text(const json& cell) {
  if (cell.is_string()) return cell.get<std::string>();
  if (cell.is_number_integer()) return std::to_string(cell.get<long long>());
  return format_double(cell.get<double>());
}

void emit_table(const Common& c, const std::string& name, const Table& table) {
  if (c.format == "json") {
    json out{{"columns", table.columns}, {"rows", table.rows}};
    emit_json_file(c, name, out);
    return;
  }
  std::string text;
  for (size_t i = 0; i < table.columns.size(); ++i) {
    if (i) text += ',';
    text += table.columns[i];
  }
  text += '\n';
  for (const auto& row : table.rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) text += ',';
      text += cell_text(row[i]);
    }
    text += '\n';
  }
  write_file(c.out_dir + "/" + name + ".csv", text);
}

// ---------------------------------------------------------------------------
// Input resolution
// ---------------------------------------------------------------------------

json load_required_config(const Common& c, const char* command) {
  if (!c.preset.empty())
    kldr::fail(errc::config_error,
               std::string(command) + " takes no preset; pass --config instead");
  if (c.config_path.empty())
    kldr::fail(errc::config_error, std::string(command) + " requires --config");
  return config::load_config_file(c.config_path);
}

// The stationary state process behind a preset: the completed shock block for
// the monetary economy, the equilibrium state law for the other two.
procspec::AutocovSeq preset_process(const std::string& name) {
  macromodels::LinearStateLaw law = [&]() {
    if (name == "nk-paper")
      return macromodels::solve_nk(macromodels::NkCalibration::baseline(),
                                   macromodels::Mode::rational)
          .law();
    if (name == "rbc-paper")
      return macromodels::solve_rbc(macromodels::RbcCalibration::baseline(),
                                    macromodels::Mode::cree_d1)
          .law();
    if (name == "dmp-paper")
      return macromodels::solve_dmp(macromodels::DmpCalibration::baseline(),
                                    macromodels::Mode::cree_d1)
          .law();
    kldr::fail(errc::config_error, "unknown preset '" + name +
                                       "'; expected nk-paper, rbc-paper, or dmp-paper");
  }();
  const int d = law.state_dim();
  auto proc = procspec::LatentVarProcess::make(law.transition, MatrixXd::Identity(d, d),
                                               law.innovation_cov);
  return procspec::autocov_from_var(proc);
}

procspec::AutocovSeq resolve_process(const Common& c) {
  if (!c.config_path.empty() && !c.preset.empty())
    kldr::fail(errc::config_error, "--config and --preset are mutually exclusive");
  if (!c.config_path.empty())
    return config::process_from_config(config::load_config_file(c.config_path));
  if (!c.preset.empty()) return preset_process(c.preset);
  kldr::fail(errc::config_error, "a process spec is required: pass --config or --preset");
}

template <typename Calibration>
Calibration resolve_calibration(const Common& c, const char* expected_preset,
                                Calibration (*from_config)(const json&),
                                Calibration (*baseline)()) {
  if (!c.config_path.empty() && !c.preset.empty())
    kldr::fail(errc::config_error, "--config and --preset are mutually exclusive");
  if (!c.config_path.empty()) return from_config(config::load_config_file(c.config_path));
  if (!c.preset.empty()) {
    if (c.preset != expected_preset)
      kldr::fail(errc::config_error, "preset '" + c.preset +
                                         "' does not belong to this command; expected " +
                                         expected_preset);
    return baseline();
  }
  kldr::fail(errc::config_error, "a calibration is required: pass --config or --preset");
}

// ---------------------------------------------------------------------------
// JSON views of result records
// ---------------------------------------------------------------------------

json one_state_json(const ssm::OneStatePseudoTrue& s) {
  return json{{"a", s.a},
              {"eta", s.eta},
              {"p", config::to_json(s.p)},
              {"q", config::to_json(s.q)},
              {"u", config::to_json(s.u)},
              {"lambda_max", s.lambda_max},
              {"a_sign_ambiguous", s.a_sign_ambiguous}};
}

json ergodicity_json(const procspec::ErgodicityReport& report) {
  json violation;  // null when the bound holds everywhere
  if (report.first_violation_lag) violation = *report.first_violation_lag;
  return json{{"is_exp_ergodic", report.is_exp_ergodic},
              {"rho_c1", report.rho_c1},
              {"first_violation_lag", violation},
              {"margins", report.margins}};
}

json named_rows_json(const std::vector<std::string>& names, const MatrixXd& values) {
  return json{{"rows", names}, {"values", config::to_json(values)}};
}

json nk_equilibrium_json(const macromodels::NkEquilibrium& eq) {
  json out{{"mode", macromodels::mode_name(eq.mode)},
           {"gamma_x", eq.gamma_x},
           {"gamma_pi", eq.gamma_pi},
           {"loadings", named_rows_json({"x_hat", "pi_hat"}, eq.loadings)},
           {"state", json::array({"i_hat", "r_n", "mu"})},
           {"f_gamma0", config::to_json(MatrixXd(eq.f_gamma0))},
           {"f_gamma1", config::to_json(MatrixXd(eq.f_gamma1))},
           {"shock_gamma0", config::to_json(MatrixXd(eq.shock_gamma0))},
           {"shock_gamma1", config::to_json(MatrixXd(eq.shock_gamma1))},
           {"shock_transition", config::to_json(MatrixXd(eq.shock_transition))},
           {"shock_innovation", config::to_json(MatrixXd(eq.shock_innovation))},
           {"repair_drift", eq.repair_drift},
           {"residual", eq.residual},
           {"iterations", eq.iterations},
           {"used_fallback", eq.used_fallback},
           {"warnings", eq.warnings}};
  if (eq.solution.p.size() > 0) out["solution"] = one_state_json(eq.solution);
  return out;
}

json rbc_equilibrium_json(const macromodels::RbcEquilibrium& eq) {
  const auto& ss = eq.steady;
  json out{{"mode", macromodels::mode_name(eq.mode)},
           {"gamma_k", eq.gamma_k},
           {"gamma_a", eq.gamma_a},
           {"psi_k", eq.psi_k},
           {"psi_a", eq.psi_a},
           {"t_map", named_rows_json({"k_hat", "a_hat", "o_hat", "w_hat", "r_hat", "n_hat",
                                      "i_hat", "c_hat"},
                                     eq.t_map)},
           {"state", json::array({"k_hat", "a_hat"})},
           {"z_weights", config::to_json(VectorXd(eq.z_weights))},
           {"z_loading_c", eq.z_loading_c},
           {"steady", json{{"r", ss.r},
                           {"k_over_o", ss.k_over_o},
                           {"i_over_o", ss.i_over_o},
                           {"c_over_o", ss.c_over_o},
                           {"c_over_k", ss.c_over_k},
                           {"chi", ss.chi},
                           {"zeta", ss.zeta}}},
           {"transition", config::to_json(MatrixXd(eq.transition))},
           {"innovation_cov", config::to_json(MatrixXd(eq.innovation_cov))},
           {"residual", eq.residual},
           {"iterations", eq.iterations},
           {"used_fallback", eq.used_fallback},
           {"warnings", eq.warnings}};
  if (eq.pseudo_true.p.size() > 0) out["pseudo_true"] = one_state_json(eq.pseudo_true);
  return out;
}

json dmp_equilibrium_json(const macromodels::DmpEquilibrium& eq) {
  const auto& ss = eq.steady;
  json out{{"mode", macromodels::mode_name(eq.mode)},
           {"psi", json{{"theta_u", eq.psi(0)},
                        {"theta_a", eq.psi(1)},
                        {"theta_s", eq.psi(2)},
                        {"w_u", eq.psi(3)},
                        {"w_a", eq.psi(4)},
                        {"w_s", eq.psi(5)}}},
           {"t_map", named_rows_json({"a_hat", "s_hat", "theta_hat", "v_hat", "u_hat",
                                      "p_hat", "q_hat", "w_hat"},
                                     eq.t_map)},
           {"state", json::array({"u_hat", "a_hat", "s_hat"})},
           {"z_weights", config::to_json(VectorXd(eq.z_weights))},
           {"z_loading_theta", eq.z_loading_theta},
           {"z_loading_p", eq.z_loading_p},
           {"steady", json{{"w", ss.w},
                           {"j", ss.j},
                           {"u", ss.u},
                           {"theta", ss.theta},
                           {"mu", ss.mu},
                           {"k", ss.k},
                           {"chi", ss.chi},
                           {"zeta", ss.zeta}}},
           {"shock_gamma0", config::to_json(MatrixXd(eq.shock_gamma0))},
           {"shock_innovation", config::to_json(MatrixXd(eq.shock_innovation))},
           {"transition", config::to_json(MatrixXd(eq.transition))},
           {"residual", eq.residual},
           {"iterations", eq.iterations},
           {"used_fallback", eq.used_fallback},
           {"warnings", eq.warnings}};
  if (eq.pseudo_true.p.size() > 0) out["pseudo_true"] = one_state_json(eq.pseudo_true);
  return out;
}

// ---------------------------------------------------------------------------
// Shared emission of impulse responses and simulated paths
// ---------------------------------------------------------------------------

// One file per shock: a one-percent innovation, responses in percent.
void emit_irf(const Common& c, const macromodels::LinearStateLaw& law, int state_index,
              const std::string& shock_label, int horizon) {
  VectorXd shock = VectorXd::Zero(law.state_dim());
  shock(state_index) = 0.01;
  MatrixXd path = macromodels::impulse_response(law, shock, horizon);
  Table table;
  table.columns = {"period", "variable", "value"};
  for (int t = 0; t < path.rows(); ++t)
    for (int v = 0; v < path.cols(); ++v)
      table.add_row({t, law.variables[static_cast<size_t>(v)], 100.0 * path(t, v)});
  emit_table(c, "irf_" + shock_label, table);
}

void emit_simulation(const Common& c, const macromodels::LinearStateLaw& law, int periods) {
  MatrixXd path = macromodels::simulate(law, periods, c.seed);
  Table table;
  table.columns.push_back("period");
  for (const auto& name : law.variables) table.columns.push_back(name);
  for (int t = 0; t < path.rows(); ++t) {
    std::vector<json> row;
    row.reserve(law.variables.size() + 1);
    row.emplace_back(t);
    for (int v = 0; v < path.cols(); ++v) row.emplace_back(100.0 * path(t, v));
    table.add_row(std::move(row));
  }
  emit_table(c, "simulation", table);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_pseudotrue(const Common& c, int d, bool force_general, int horizons, int grid_a,
                    int grid_eta) {
  prepare_out_dir(c);
  auto acv = resolve_process(c);
  const double erg_tol = c.tol > 0.0 ? c.tol : 1e-9;
  auto report = procspec::check_exponential_ergodicity(procspec::autocorr(acv), erg_tol);

  json model{{"d", d}, {"ergodicity", ergodicity_json(report)}};
  Table forecasts;
  forecasts.columns = {"horizon", "lag", "row", "col", "weight"};

  if (d == 1) {
    ssm::OneStatePseudoTrue sol;
    if (report.is_exp_ergodic && !force_general) {
      sol = pseudotrue::solve_one_state_exp_erg(acv);
      model["solver"] = "exp_ergodic_closed_form";
    } else {
      sol = pseudotrue::solve_one_state_general(acv, grid_a, grid_eta);
      model["solver"] = "general_grid_refine";
    }
    model["solution"] = one_state_json(sol);
    auto state_space = pseudotrue::to_state_space(sol, acv.gammas[0]);
    auto weights = ssm::forecast_weights(state_space, horizons);
    for (int s = 1; s <= horizons; ++s)
      for (int tau = 0; tau < horizons; ++tau) {
        MatrixXd w = weights.weight(s, tau);
        for (int i = 0; i < w.rows(); ++i)
          for (int j = 0; j < w.cols(); ++j)
            forecasts.add_row({s, tau, i, j, w(i, j)});
      }
  } else {
    if (force_general)
      kldr::fail(errc::config_error, "--force-general applies to d = 1 only");
    auto mio = pseudotrue::solve_mio_d_state(acv, d);
    json components = json::array();
    for (const auto& comp : mio.components)
      components.push_back(json{{"a", comp.a},
                                {"p", config::to_json(comp.p)},
                                {"q", config::to_json(comp.q)},
                                {"u", config::to_json(comp.u)}});
    model["solver"] = "mio_d_state_closed_form";
    model["components"] = components;
    // Markovian-in-observables solutions place no weight on lagged data, so
    // only the lag-zero matrices appear.
    const int n = acv.n();
    for (int s = 1; s <= horizons; ++s) {
      MatrixXd w = MatrixXd::Zero(n, n);
      for (const auto& comp : mio.components)
        w += std::pow(comp.a, s) * comp.q * comp.p.transpose();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) forecasts.add_row({s, 0, i, j, w(i, j)});
    }
  }
  emit_json_file(c, "model", model);
  emit_table(c, "forecasts", forecasts);
}

void cmd_ergodicity(const Common& c, int max_lag) {
  prepare_out_dir(c);
  auto acv = resolve_process(c);
  if (acv.source.has_value())
    acv = procspec::autocov_from_var(*acv.source, max_lag);
  else if (max_lag > acv.max_lag())
    max_lag = acv.max_lag();
  const double erg_tol = c.tol > 0.0 ? c.tol : 1e-9;
  auto report = procspec::check_exponential_ergodicity(procspec::autocorr(acv), erg_tol);

  Table table;
  table.columns = {"lag", "rho_Cl", "rho_C1_pow_l", "margin"};
  for (int l = 1; l <= max_lag; ++l) {
    const double margin = report.margins[static_cast<size_t>(l - 1)];
    const double bound = std::pow(report.rho_c1, l);
    table.add_row({l, bound - margin, bound, margin});
  }
  emit_table(c, "ergodicity", table);
}

void cmd_decompose(const Common& c) {
  prepare_out_dir(c);
  auto acv = resolve_process(c);
  auto decomposition = procspec::decompose_persistence(acv);
  json components = json::array();
  for (const auto& comp : decomposition.components)
    components.push_back(json{{"rho", comp.rho},
                              {"u", config::to_json(comp.u)},
                              {"p", config::to_json(comp.p)},
                              {"q", config::to_json(comp.q)}});
  emit_json_file(c, "decomposition", json{{"components", components}});
}

void cmd_nk(const Common& c, const std::string& mode, int horizon, int simulate_periods) {
  prepare_out_dir(c);
  auto cal = resolve_calibration<macromodels::NkCalibration>(
      c, "nk-paper", config::nk_from_config, macromodels::NkCalibration::baseline);
  auto eq = macromodels::solve_nk(cal, macromodels::mode_from_string(mode));
  emit_json_file(c, "equilibrium", nk_equilibrium_json(eq));
  auto law = eq.law();
  emit_irf(c, law, 0, "i", horizon);
  emit_irf(c, law, 1, "r_n", horizon);
  emit_irf(c, law, 2, "mu", horizon);
  if (simulate_periods > 0) emit_simulation(c, law, simulate_periods);
}

void cmd_nk_fg(const Common& c, int t_max) {
  prepare_out_dir(c);
  auto cal = resolve_calibration<macromodels::NkCalibration>(
      c, "nk-paper", config::nk_from_config, macromodels::NkCalibration::baseline);
  auto eq = macromodels::solve_nk(cal, macromodels::Mode::cree_d1);
  emit_json_file(c, "equilibrium", nk_equilibrium_json(eq));
  Table sweep;
  sweep.columns = {"T", "output_response", "inflation_response"};
  for (int horizon = 0; horizon <= t_max; ++horizon) {
    auto fg = macromodels::nk_forward_guidance(eq, cal, horizon);
    sweep.add_row({horizon, fg.x_response, fg.pi_response});
  }
  emit_table(c, "fg_sweep", sweep);
}

void cmd_rbc(const Common& c, const std::string& mode, int horizon, int simulate_periods) {
  prepare_out_dir(c);
  auto cal = resolve_calibration<macromodels::RbcCalibration>(
      c, "rbc-paper", config::rbc_from_config, macromodels::RbcCalibration::baseline);
  auto eq = macromodels::solve_rbc(cal, macromodels::mode_from_string(mode));
  emit_json_file(c, "equilibrium", rbc_equilibrium_json(eq));
  auto law = eq.law();
  emit_irf(c, law, 1, "a", horizon);
  if (simulate_periods > 0) emit_simulation(c, law, simulate_periods);
}

void cmd_dmp(const Common& c, const std::string& mode, int horizon, int simulate_periods) {
  prepare_out_dir(c);
  auto cal = resolve_calibration<macromodels::DmpCalibration>(
      c, "dmp-paper", config::dmp_from_config, macromodels::DmpCalibration::baseline);
  auto eq = macromodels::solve_dmp(cal, macromodels::mode_from_string(mode));
  emit_json_file(c, "equilibrium", dmp_equilibrium_json(eq));
  auto law = eq.law();
  emit_irf(c, law, 1, "a", horizon);
  emit_irf(c, law, 2, "s", horizon);
  if (simulate_periods > 0) emit_simulation(c, law, simulate_periods);
}

void cmd_ge_pe(const Common& c) {
  prepare_out_dir(c);
  auto spec = config::ge_pe_from_config(load_required_config(c, "ge-pe"));
  MatrixXd h_tilde;
  try {
    h_tilde = macromodels::ge_pe_transform(spec.h, spec.b, spec.c, spec.g, spec.beta,
                                           spec.alphas, spec.d);
  } catch (const Error& e) {
    // Precondition violations here always reflect a bad input file.
    if (e.code() == errc::invalid_argument || e.code() == errc::rank_deficient_h)
      kldr::fail(errc::config_error, e.what());
    throw;
  }
  emit_json_file(c, "transform",
                 json{{"h_tilde", config::to_json(h_tilde)},
                      {"h", config::to_json(spec.h)},
                      {"retained_d", spec.d}});
}

// ---------------------------------------------------------------------------
// Selftest: golden fixtures plus a fast property subset
// ---------------------------------------------------------------------------

struct Selftest {
  double tol;
  std::vector<std::string> names;
  std::vector<bool> passes;
  std::vector<std::string> details;

  static std::string show(double v) {
    std::ostringstream out;
    out.precision(10);
    out << v;
    return out.str();
  }

  void record(const std::string& name, bool pass, const std::string& detail) {
    names.push_back(name);
    passes.push_back(pass);
    details.push_back(detail);
  }

  void scalar(const std::string& name, double got, double want) {
    bool pass = std::abs(got - want) <= tol * std::max(1.0, std::abs(want));
    record(name, pass, "got " + show(got) + ", expected " + show(want));
  }

  void vector(const std::string& name, const VectorXd& got,
              const std::vector<double>& want) {
    bool pass = got.size() == static_cast<Eigen::Index>(want.size());
    double worst = 0.0;
    if (pass)
      for (Eigen::Index i = 0; i < got.size(); ++i) {
        double err = std::abs(got(i) - want[static_cast<size_t>(i)]) /
                     std::max(1.0, std::abs(want[static_cast<size_t>(i)]));
        worst = std::max(worst, err);
      }
    pass = pass && worst <= tol;
    record(name, pass, "max relative deviation " + show(worst));
  }

  void condition(const std::string& name, bool pass, const std::string& detail) {
    record(name, pass, detail);
  }

  bool all_passed() const {
    for (bool p : passes)
      if (!p) return false;
    return true;
  }
};

procspec::AutocovSeq selftest_ar1() {
  MatrixXd f(1, 1), h(1, 1), s(1, 1);
  f << 0.9;
  h << 1.0;
  s << 0.19;
  return procspec::autocov_from_var(procspec::LatentVarProcess::make(f, h, s));
}

procspec::AutocovSeq selftest_two_factor() {
  MatrixXd f = MatrixXd::Zero(2, 2), s = MatrixXd::Zero(2, 2), h(2, 1);
  f(0, 0) = 0.9;
  f(1, 1) = 0.5;
  s(0, 0) = 0.19;
  s(1, 1) = 0.75;
  h << 1.0, 1.0;
  return procspec::autocov_from_var(procspec::LatentVarProcess::make(f, h, s));
}

double state_correlation(const MatrixXd& transition, const MatrixXd& innovation,
                         const Eigen::RowVectorXd& lhs, const Eigen::RowVectorXd& rhs) {
  MatrixXd g0 = linalg::lyapunov(transition, innovation);
  double cov = lhs * g0 * rhs.transpose();
  double lhs_var = lhs * g0 * lhs.transpose();
  double rhs_var = rhs * g0 * rhs.transpose();
  return cov / std::sqrt(lhs_var * rhs_var);
}

int cmd_selftest(bool as_json, double tol_override, double nk_kappa) {
  Selftest t;
  t.tol = tol_override > 0.0 ? tol_override : 1e-7;

  // Monetary economy goldens.
  {
    auto base = macromodels::NkCalibration::baseline();
    auto cal = macromodels::NkCalibration::make(base.beta, base.sigma, base.delta, nk_kappa,
                                                base.shock_gamma0, base.shock_gamma1);
    auto eq = macromodels::solve_nk(cal, macromodels::Mode::cree_d1);
    t.scalar("nk cree persistence", eq.solution.a, 0.9983818130229972);
    t.condition("nk cree eta conjecture", std::abs(eq.solution.eta) <= 1e-6,
                "eta = " + Selftest::show(eq.solution.eta));
    t.condition("nk cree residual", eq.residual <= 1e-9,
                "residual = " + Selftest::show(eq.residual));
    t.scalar("nk shock repair drift", eq.repair_drift, 0.0006054233963862926);
    VectorXd forward(2);
    forward << eq.gamma_x, eq.gamma_pi;
    t.vector("nk forward coefficients", forward,
             {-2.7201187707265908, 2.7680397201480882});
    VectorXd x_row = eq.loadings.row(0).transpose();
    t.vector("nk output loadings", x_row,
             {0.45756528989381573, -0.072835731020281708, -4.3258158474396025});
    VectorXd x_resp(4), pi_resp(4);
    const int horizons[4] = {0, 1, 2, 20};
    for (int i = 0; i < 4; ++i) {
      auto fg = macromodels::nk_forward_guidance(eq, cal, horizons[i]);
      x_resp(i) = fg.x_response;
      pi_resp(i) = fg.pi_response;
    }
    t.vector("nk fg output sequence", x_resp,
             {-0.4575652898937963, -0.0660490031163804, 0.1532768127334987,
              0.3910783213325202});
    t.vector("nk fg inflation sequence", pi_resp,
             {1.404542318381323, 0.7058685991062338, 0.2608494928604403,
              -1.476997968763422});
  }

  // Production economy goldens.
  {
    auto cal = macromodels::RbcCalibration::baseline();
    auto re = macromodels::solve_rbc(cal, macromodels::Mode::rational);
    VectorXd psi(2);
    psi << re.psi_k, re.psi_a;
    t.vector("rbc rational investment rule", psi,
             {-1.713778225570938, 6.686044220262474});
    auto eq = macromodels::solve_rbc(cal, macromodels::Mode::cree_d1);
    t.scalar("rbc cree persistence", eq.pseudo_true.a, 0.9983000066486256);
    t.condition("rbc cree eta conjecture", std::abs(eq.pseudo_true.eta) <= 1e-6,
                "eta = " + Selftest::show(eq.pseudo_true.eta));
    t.vector("rbc attention weights", eq.z_weights,
             {0.9471462438288971, 0.05285375617110281});
    t.scalar("rbc consumption z loading", eq.z_loading_c, 0.84141195463461);
    Eigen::RowVectorXd c_row = eq.t_map.row(7), k_row = eq.t_map.row(0);
    t.scalar("rbc cree comovement",
             state_correlation(eq.transition, eq.innovation_cov, c_row, k_row),
             0.9994576280404811);
    t.scalar("rbc rational comovement",
             state_correlation(re.transition, re.innovation_cov, re.t_map.row(7),
                               re.t_map.row(0)),
             0.9698702343894249);
  }

  // Labor market goldens.
  {
    auto cal = macromodels::DmpCalibration::baseline();
    auto ss = macromodels::dmp_steady_state(cal);
    VectorXd steady(3);
    steady << ss.w, ss.u, ss.j;
    t.vector("dmp steady state", steady,
             {0.977253237104649, 0.08045977011494253, 0.5094459774994626});
    auto eq = macromodels::solve_dmp(cal, macromodels::Mode::cree_d1);
    t.scalar("dmp cree persistence", eq.pseudo_true.a, 0.9910903195654561);
    t.condition("dmp cree eta conjecture", std::abs(eq.pseudo_true.eta) <= 1e-6,
                "eta = " + Selftest::show(eq.pseudo_true.eta));
    t.vector("dmp tightness loadings", eq.psi.head<3>(),
             {-2.245167109607133, 0.02819113948094215, -0.4900798062587319});
    t.vector("dmp attention weights", eq.z_weights,
             {-0.8124542923127201, 0.01020147327937375, -0.177344234407906});
    VectorXd z_loadings(2);
    z_loadings << eq.z_loading_theta, eq.z_loading_p;
    t.vector("dmp z loadings", z_loadings, {2.763438055347274, 0.7737626554972369});
    auto re = macromodels::solve_dmp(cal, macromodels::Mode::rational);
    t.vector("dmp rational tightness", re.psi.head<3>(),
             {0.0, 0.9496124031007843, -0.08722071750052923});
  }

  // Fast property subset.
  {
    auto ar1 = selftest_ar1();
    auto sol = pseudotrue::solve_one_state_exp_erg(ar1);
    t.condition("ar1 recovery",
                std::abs(sol.a - 0.9) < 1e-9 && sol.eta == 0.0,
                "a = " + Selftest::show(sol.a) + ", eta = " + Selftest::show(sol.eta));
    auto erg = procspec::check_exponential_ergodicity(procspec::autocorr(ar1));
    double worst_margin = 0.0;
    for (double m : erg.margins) worst_margin = std::max(worst_margin, std::abs(m));
    t.condition("ar1 ergodicity margins", erg.is_exp_ergodic && worst_margin < 1e-9,
                "largest |margin| = " + Selftest::show(worst_margin));

    MatrixXd wn_gamma = MatrixXd::Identity(2, 2);
    auto white = procspec::AutocovSeq::make({wn_gamma, MatrixXd::Zero(2, 2)}, 0.5);
    auto wn_sol = pseudotrue::solve_one_state_general(white);
    t.condition("white noise origin", std::abs(wn_sol.a) < 1e-9,
                "a = " + Selftest::show(wn_sol.a));

    auto two = selftest_two_factor();
    auto two_sol = pseudotrue::solve_one_state_general(two);
    t.condition("two-factor interior noise",
                two_sol.eta > 0.001 && two_sol.eta < 0.999,
                "eta = " + Selftest::show(two_sol.eta));
    auto model = pseudotrue::to_state_space(two_sol, two.gammas[0]);
    double gap = (ssm::subjective_moments(model, 1).gammas[0] - two.gammas[0]).norm();
    t.condition("variance matching", gap < 1e-8 * two.gammas[0].norm(),
                "|Gamma0 gap| = " + Selftest::show(gap));
    auto two_erg = procspec::check_exponential_ergodicity(procspec::autocorr(two));
    t.condition("two-factor first violation",
                !two_erg.is_exp_ergodic && two_erg.first_violation_lag &&
                    *two_erg.first_violation_lag == 2,
                two_erg.first_violation_lag
                    ? "first violation at lag " +
                          std::to_string(*two_erg.first_violation_lag)
                    : "no violation found");

    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto randn = [&](int r, int cc) {
      MatrixXd m(r, cc);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < cc; ++j) m(i, j) = normal(rng);
      return m;
    };
    MatrixXd f = randn(3, 3);
    f *= 0.8 / linalg::spectral_radius(f);
    MatrixXd root = randn(3, 3);
    auto proc = procspec::LatentVarProcess::make(
        f, randn(3, 3), root * root.transpose() + 0.05 * MatrixXd::Identity(3, 3));
    auto truth = procspec::autocov_from_var(proc);
    auto base_sol = pseudotrue::solve_one_state_general(truth);
    double drift = 0.0;
    for (int rep = 0; rep < 2; ++rep) {
      MatrixXd trans = randn(3, 3) + 3.0 * MatrixXd::Identity(3, 3);
      auto mapped = pseudotrue::solve_one_state_general(
          procspec::transform_process(truth, trans));
      drift = std::max(drift, std::abs(mapped.a - base_sol.a));
      drift = std::max(drift, std::abs(mapped.eta - base_sol.eta));
      drift = std::max(drift, std::abs(mapped.lambda_max - base_sol.lambda_max));
    }
    t.condition("transform invariance", drift < 1e-7,
                "largest drift " + Selftest::show(drift));
  }

  const bool ok = t.all_passed();
  if (as_json) {
    json checks = json::array();
    for (size_t i = 0; i < t.names.size(); ++i)
      checks.push_back(json{{"name", t.names[i]},
                            {"pass", static_cast<bool>(t.passes[i])},
                            {"detail", t.details[i]}});
    json out{{"status", ok ? "pass" : "fail"}, {"checks", checks}};
    std::cout << out.dump(2) << "\n";
  } else {
    size_t passed = 0;
    for (size_t i = 0; i < t.names.size(); ++i) {
      std::cout << (t.passes[i] ? "PASS  " : "FAIL  ") << t.names[i] << " ("
                << t.details[i] << ")\n";
      if (t.passes[i]) ++passed;
    }
    std::cout << "status: " << (ok ? "pass" : "fail") << " (" << passed << "/"
              << t.names.size() << ")\n";
  }
  return ok ? 0 : 1;
}

void print_error(const std::string& code, const std::string& message) {
  json err{{"error", json{{"code", code}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Pseudo-true low-dimensional approximations of linear stochastic processes,\n"
      "and the boundedly rational macro models built on them."};
  app.require_subcommand(1);
  int exit_code = 0;

  // pseudotrue
  Common pt_common;
  int pt_d = 1, pt_horizons = 8, pt_grid_a = 201, pt_grid_eta = 101;
  bool pt_force_general = false;
  auto* pt = app.add_subcommand(
      "pseudotrue", "Best low-dimensional model of a process; writes model.json and "
                    "forecast weight tables");
  add_common(pt, pt_common);
  pt->add_option("--d", pt_d, "Number of subjective states")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pt->add_flag("--force-general", pt_force_general,
               "Use the grid-and-refine optimizer even when the closed form applies");
  pt->add_option("--horizons", pt_horizons, "Forecast horizons to tabulate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pt->add_option("--grid-a", pt_grid_a, "Persistence grid size for the general solver")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pt->add_option("--grid-eta", pt_grid_eta, "Noise grid size for the general solver")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pt->callback([&] {
    cmd_pseudotrue(pt_common, pt_d, pt_force_general, pt_horizons, pt_grid_a, pt_grid_eta);
  });

  // ergodicity
  Common erg_common;
  int erg_max_lag = 40;
  auto* erg = app.add_subcommand(
      "ergodicity", "Autocorrelation decay test; writes one row per lag");
  add_common(erg, erg_common);
  erg->add_option("--max-lag", erg_max_lag, "Largest lag to tabulate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  erg->callback([&] { cmd_ergodicity(erg_common, erg_max_lag); });

  // decompose
  Common dec_common;
  auto* dec = app.add_subcommand(
      "decompose", "Orthogonal persistence decomposition; writes decomposition.json");
  add_common(dec, dec_common);
  dec->callback([&] { cmd_decompose(dec_common); });

  // nk
  Common nk_common;
  std::string nk_mode = "cree";
  int nk_horizon = 40, nk_simulate = 0;
  auto* nk = app.add_subcommand(
      "nk", "Monetary model equilibrium, impulse responses, optional simulation");
  add_common(nk, nk_common);
  nk->add_option("--mode", nk_mode, "Expectations mode: cree or re")
      ->check(CLI::IsMember({"cree", "cree_d1", "re", "rational"}))
      ->capture_default_str();
  nk->add_option("--horizon", nk_horizon, "Impulse response length")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  nk->add_option("--simulate", nk_simulate, "Also write a simulated path of this length")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  nk->callback([&] { cmd_nk(nk_common, nk_mode, nk_horizon, nk_simulate); });

  // nk-fg
  Common fg_common;
  int fg_t_max = 20;
  auto* fg = app.add_subcommand(
      "nk-fg", "Forward guidance sweep: responses to an announced rate cut at horizon T");
  add_common(fg, fg_common);
  fg->add_option("--t-max", fg_t_max, "Largest announcement horizon")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  fg->callback([&] { cmd_nk_fg(fg_common, fg_t_max); });

  // rbc
  Common rbc_common;
  std::string rbc_mode = "cree";
  int rbc_horizon = 40, rbc_simulate = 0;
  auto* rbc = app.add_subcommand(
      "rbc", "Production economy equilibrium, impulse responses, optional simulation");
  add_common(rbc, rbc_common);
  rbc->add_option("--mode", rbc_mode, "Expectations mode: cree or re")
      ->check(CLI::IsMember({"cree", "cree_d1", "re", "rational"}))
      ->capture_default_str();
  rbc->add_option("--horizon", rbc_horizon, "Impulse response length")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  rbc->add_option("--simulate", rbc_simulate, "Also write a simulated path of this length")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  rbc->callback([&] { cmd_rbc(rbc_common, rbc_mode, rbc_horizon, rbc_simulate); });

  // dmp
  Common dmp_common;
  std::string dmp_mode = "cree";
  int dmp_horizon = 40, dmp_simulate = 0;
  auto* dmp = app.add_subcommand(
      "dmp", "Labor market equilibrium, impulse responses, optional simulation");
  add_common(dmp, dmp_common);
  dmp->add_option("--mode", dmp_mode, "Expectations mode: cree or re")
      ->check(CLI::IsMember({"cree", "cree_d1", "re", "rational"}))
      ->capture_default_str();
  dmp->add_option("--horizon", dmp_horizon, "Impulse response length")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  dmp->add_option("--simulate", dmp_simulate, "Also write a simulated path of this length")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  dmp->callback([&] { cmd_dmp(dmp_common, dmp_mode, dmp_horizon, dmp_simulate); });

  // ge-pe
  Common gp_common;
  auto* gp = app.add_subcommand(
      "ge-pe", "Loading transform mapping a feedback economy to its no-feedback twin");
  add_common(gp, gp_common);
  gp->callback([&] { cmd_ge_pe(gp_common); });

  // selftest
  bool st_json = false;
  double st_tol = -1.0;
  double st_kappa = 0.172;
  auto* st = app.add_subcommand(
      "selftest", "Golden-fixture and property checks; nonzero exit on any mismatch");
  st->add_flag("--json", st_json, "Machine-readable report");
  st->add_option("--tol", st_tol, "Relative tolerance for golden comparisons");
  st->add_option("--nk-kappa", st_kappa,
                 "Pricing slope used for the monetary fixture; changing it from the "
                 "calibrated value demonstrates golden mismatch detection")
      ->capture_default_str();
  st->callback([&] { exit_code = cmd_selftest(st_json, st_tol, st_kappa); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("ConfigError", e.what());
    return 2;
  } catch (const Error& e) {
    if (e.code() == errc::no_convergence)
      write_file(g_active_out_dir + "/residual_trace.txt", std::string(e.what()) + "\n");
    print_error(kldr::errc_name(e.code()), e.what());
    return e.is_config_error() ? 2 : 3;
  } catch (const std::exception& e) {
    print_error("NumericalFailure", e.what());
    return 3;
  }
  return exit_code;
}
