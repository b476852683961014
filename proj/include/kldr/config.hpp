#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <iosfwd>
#include <string>
#include <vector>

#include "kldr/errors.hpp"
#include "kldr/macromodels.hpp"
#include "kldr/procspec.hpp"

// Declarative configuration: strict parsing of JSON and of a small TOML
// subset into a common tree, typed extraction of process specs and model
// calibrations, and full-precision CSV serialization helpers.
namespace kldr::config {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

// Parses a JSON document whose root must be an object. Any syntax error is
// reported as ConfigError with the parser's diagnostic.
json parse_json(const std::string& text);

// Parses a TOML subset sufficient for flat configuration files:
//   key = value lines, # comments, blank lines,
//   values: numbers, "basic strings", true/false, and arrays (which may
//   nest and may span multiple lines until brackets balance).
// Tables, dotted keys, inline tables, dates, and duplicate keys are
// rejected as ConfigError, keeping every accepted file unambiguous.
json parse_toml_subset(const std::string& text);

// Loads a config file, dispatching on its extension (.json or .toml).
json load_config_file(const std::string& path);

// Strict key check: every key in obj must appear in required or optional,
// and every required key must be present. Violations raise ConfigError
// before any computation starts.
void require_keys(const json& obj, const std::string& where,
                  const std::vector<std::string>& required,
                  const std::vector<std::string>& optional = {});

// Typed readers with shape validation. name is used in diagnostics.
double number_from_json(const json& v, const std::string& name);
int int_from_json(const json& v, const std::string& name);
VectorXd vector_from_json(const json& v, const std::string& name);
MatrixXd matrix_from_json(const json& v, const std::string& name);

// Process spec: either a latent linear law {F, H, Sigma, optional lags}
// (matrices row-major as arrays of arrays) or a direct autocovariance
// listing {gammas, tail_rate}. The two forms are mutually exclusive.
procspec::AutocovSeq process_from_config(const json& obj);

// Calibration records. Scalar keys follow the struct fields; shock moment
// matrices are row-major arrays of arrays.
macromodels::NkCalibration nk_from_config(const json& obj);
macromodels::RbcCalibration rbc_from_config(const json& obj);
macromodels::DmpCalibration dmp_from_config(const json& obj);

// Inputs of the equilibrium-to-partial-equilibrium transform.
struct GePeSpec {
  MatrixXd h;
  VectorXd b;
  VectorXd c;
  VectorXd g;
  double beta = 0.0;
  VectorXd alphas;
  int d = 0;
};
GePeSpec ge_pe_from_config(const json& obj);

// Shortest decimal form that parses back to exactly the same double
// (17 significant digits when needed).
std::string format_double(double v);

// Comma-delimited CSV with a header row; every numeric cell uses
// format_double so emitted matrices round-trip exactly.
void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const MatrixXd& values);
MatrixXd read_csv(std::istream& in, std::vector<std::string>* header = nullptr);

// JSON value for a matrix (array of row arrays) and a vector (array).
json to_json(const MatrixXd& m);
json to_json(const VectorXd& v);

}  // namespace kldr::config
