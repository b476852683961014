#include "kldr/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace kldr::config {

namespace {

[[noreturn]] void bad(const std::string& message) { fail(errc::config_error, message); }

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Removes a trailing comment and reports the bracket depth change of the
// line, both computed outside string literals. Basic strings cannot span
// lines, so an open quote at end of line is an error.
std::string strip_comment(const std::string& line, int line_no, int* depth_change) {
  bool in_string = false;
  bool escaped = false;
  *depth_change = 0;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_string) {
      if (escaped)
        escaped = false;
      else if (c == '\\')
        escaped = true;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"')
      in_string = true;
    else if (c == '[')
      ++*depth_change;
    else if (c == ']')
      --*depth_change;
    else if (c == '#')
      return line.substr(0, i);
  }
  if (in_string) bad("line " + std::to_string(line_no) + ": unterminated string");
  return line;
}

struct TomlCursor {
  const std::string& text;
  size_t pos = 0;
  int line_no;

  [[noreturn]] void error(const std::string& message) const {
    bad("line " + std::to_string(line_no) + ": " + message);
  }
  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  void skip_ws() {
    while (!done() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n')) ++pos;
  }
};

json parse_toml_value(TomlCursor& cur);

json parse_toml_string(TomlCursor& cur) {
  ++cur.pos;  // opening quote
  std::string out;
  while (!cur.done() && cur.peek() != '"') {
    char c = cur.text[cur.pos++];
    if (c != '\\') {
      out.push_back(c);
      continue;
    }
    if (cur.done()) cur.error("dangling escape in string");
    char esc = cur.text[cur.pos++];
    switch (esc) {
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      default: cur.error(std::string("unsupported escape \\") + esc);
    }
  }
  if (cur.done()) cur.error("unterminated string");
  ++cur.pos;  // closing quote
  return json(out);
}

json parse_toml_array(TomlCursor& cur) {
  ++cur.pos;  // opening bracket
  json arr = json::array();
  cur.skip_ws();
  while (!cur.done() && cur.peek() != ']') {
    arr.push_back(parse_toml_value(cur));
    cur.skip_ws();
    if (!cur.done() && cur.peek() == ',') {
      ++cur.pos;
      cur.skip_ws();
    } else if (!cur.done() && cur.peek() != ']') {
      cur.error("expected ',' or ']' in array");
    }
  }
  if (cur.done()) cur.error("unterminated array");
  ++cur.pos;  // closing bracket
  return arr;
}

json parse_toml_number(TomlCursor& cur) {
  size_t start = cur.pos;
  while (!cur.done()) {
    char c = cur.peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.' ||
        c == 'e' || c == 'E')
      ++cur.pos;
    else
      break;
  }
  std::string token = cur.text.substr(start, cur.pos - start);
  if (token.empty()) cur.error("expected a value");
  bool integral = true;
  for (size_t i = 0; i < token.size(); ++i) {
    char c = token[i];
    if (i == 0 && (c == '+' || c == '-')) continue;
    if (!std::isdigit(static_cast<unsigned char>(c))) integral = false;
  }
  errno = 0;
  char* end = nullptr;
  if (integral && token != "+" && token != "-") {
    long long v = std::strtoll(token.c_str(), &end, 10);
    if (end != token.c_str() + token.size() || errno == ERANGE)
      cur.error("invalid integer '" + token + "'");
    return json(v);
  }
  double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size() || errno == ERANGE)
    cur.error("invalid number '" + token + "'");
  return json(v);
}

json parse_toml_value(TomlCursor& cur) {
  cur.skip_ws();
  if (cur.done()) cur.error("expected a value");
  char c = cur.peek();
  if (c == '[') return parse_toml_array(cur);
  if (c == '"') return parse_toml_string(cur);
  if (c == '{') cur.error("inline tables are not supported by this TOML subset");
  if (cur.text.compare(cur.pos, 4, "true") == 0) {
    cur.pos += 4;
    return json(true);
  }
  if (cur.text.compare(cur.pos, 5, "false") == 0) {
    cur.pos += 5;
    return json(false);
  }
  if (std::isalpha(static_cast<unsigned char>(c)))
    cur.error("unsupported value starting with '" + std::string(1, c) + "'");
  return parse_toml_number(cur);
}

bool valid_bare_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

std::string shape_string(const json& v) {
  if (v.is_array()) return "array of " + std::to_string(v.size());
  return std::string(v.type_name());
}

double cell_to_double(const json& v, const std::string& name) {
  if (!v.is_number()) bad(name + ": expected a number, got " + shape_string(v));
  return v.get<double>();
}

}  // namespace

json parse_json(const std::string& text) {
  json parsed;
  try {
    parsed = json::parse(text);
  } catch (const json::exception& e) {
    bad(std::string("JSON parse failure: ") + e.what());
  }
  if (!parsed.is_object()) bad("config root must be a JSON object");
  return parsed;
}

json parse_toml_subset(const std::string& text) {
  json root = json::object();
  std::istringstream in(text);
  std::string physical;
  std::string logical;
  int depth = 0;
  int line_no = 0;
  int logical_start = 0;

  auto flush_logical = [&]() {
    std::string stmt = trim(logical);
    logical.clear();
    if (stmt.empty()) return;
    if (stmt[0] == '[')
      bad("line " + std::to_string(logical_start) +
          ": table headers are not supported by this TOML subset");
    size_t eq = stmt.find('=');
    if (eq == std::string::npos)
      bad("line " + std::to_string(logical_start) + ": expected key = value");
    std::string key = trim(stmt.substr(0, eq));
    if (!valid_bare_key(key))
      bad("line " + std::to_string(logical_start) + ": invalid key '" + key + "'");
    if (root.contains(key))
      bad("line " + std::to_string(logical_start) + ": duplicate key '" + key + "'");
    std::string value_text = stmt.substr(eq + 1);
    TomlCursor cur{value_text, 0, logical_start};
    json value = parse_toml_value(cur);
    cur.skip_ws();
    if (!cur.done()) cur.error("trailing characters after value");
    root[key] = std::move(value);
  };

  while (std::getline(in, physical)) {
    ++line_no;
    int change = 0;
    std::string cleaned = strip_comment(physical, line_no, &change);
    if (depth == 0) {
      if (trim(cleaned).empty()) continue;
      logical_start = line_no;
    }
    depth += change;
    if (depth < 0) bad("line " + std::to_string(line_no) + ": unbalanced ']'");
    logical += cleaned;
    logical.push_back('\n');
    if (depth == 0) flush_logical();
  }
  if (depth != 0) bad("unterminated array at end of file");
  return root;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad("cannot open config file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  auto ends_with = [&](const std::string& suffix) {
    return path.size() >= suffix.size() &&
           path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".json")) return parse_json(text);
  if (ends_with(".toml")) return parse_toml_subset(text);
  bad("config file '" + path + "' must end in .json or .toml");
}

void require_keys(const json& obj, const std::string& where,
                  const std::vector<std::string>& required,
                  const std::vector<std::string>& optional) {
  if (!obj.is_object()) bad(where + ": expected an object, got " + shape_string(obj));
  for (const auto& key : required)
    if (!obj.contains(key)) bad(where + ": missing required key '" + key + "'");
  for (const auto& item : obj.items()) {
    const std::string& key = item.key();
    bool known = false;
    for (const auto& k : required) known = known || k == key;
    for (const auto& k : optional) known = known || k == key;
    if (!known) bad(where + ": unknown key '" + key + "'");
  }
}

double number_from_json(const json& v, const std::string& name) {
  if (!v.is_number()) bad(name + ": expected a number, got " + shape_string(v));
  return v.get<double>();
}

int int_from_json(const json& v, const std::string& name) {
  if (!v.is_number_integer())
    bad(name + ": expected an integer, got " + shape_string(v));
  long long raw = v.get<long long>();
  if (raw < std::numeric_limits<int>::min() || raw > std::numeric_limits<int>::max())
    bad(name + ": integer out of range");
  return static_cast<int>(raw);
}

VectorXd vector_from_json(const json& v, const std::string& name) {
  if (!v.is_array()) bad(name + ": expected an array, got " + shape_string(v));
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i)
    out(static_cast<Eigen::Index>(i)) =
        cell_to_double(v[i], name + "[" + std::to_string(i) + "]");
  return out;
}

MatrixXd matrix_from_json(const json& v, const std::string& name) {
  if (!v.is_array() || v.empty())
    bad(name + ": expected a non-empty array of rows, got " + shape_string(v));
  const size_t rows = v.size();
  if (!v[0].is_array() || v[0].empty())
    bad(name + ": rows must be non-empty arrays");
  const size_t cols = v[0].size();
  MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < rows; ++i) {
    const json& row = v[i];
    if (!row.is_array() || row.size() != cols)
      bad(name + ": row " + std::to_string(i) + " has " +
          (row.is_array() ? std::to_string(row.size()) : shape_string(row)) +
          " entries, expected " + std::to_string(cols));
    for (size_t j = 0; j < cols; ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cell_to_double(
          row[j], name + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
  }
  return out;
}

procspec::AutocovSeq process_from_config(const json& obj) {
  if (!obj.is_object()) bad("process spec: expected an object");
  const bool var_form = obj.contains("F") || obj.contains("H") || obj.contains("Sigma");
  const bool direct_form = obj.contains("gammas") || obj.contains("tail_rate");
  if (var_form && direct_form)
    bad("process spec: F/H/Sigma and gammas/tail_rate are mutually exclusive");
  try {
    if (var_form) {
      require_keys(obj, "process spec", {"F", "H", "Sigma"}, {"lags"});
      auto proc = procspec::LatentVarProcess::make(matrix_from_json(obj.at("F"), "F"),
                                                   matrix_from_json(obj.at("H"), "H"),
                                                   matrix_from_json(obj.at("Sigma"), "Sigma"));
      if (obj.contains("lags")) {
        int lags = int_from_json(obj.at("lags"), "lags");
        if (lags < 1) bad("lags: must be at least 1");
        return procspec::autocov_from_var(proc, lags);
      }
      return procspec::autocov_from_var(proc);
    }
    if (direct_form) {
      require_keys(obj, "process spec", {"gammas", "tail_rate"});
      const json& list = obj.at("gammas");
      if (!list.is_array() || list.empty())
        bad("gammas: expected a non-empty array of matrices");
      std::vector<MatrixXd> gammas;
      gammas.reserve(list.size());
      for (size_t l = 0; l < list.size(); ++l)
        gammas.push_back(matrix_from_json(list[l], "gammas[" + std::to_string(l) + "]"));
      return procspec::AutocovSeq::make(std::move(gammas),
                                        number_from_json(obj.at("tail_rate"), "tail_rate"));
    }
  } catch (const Error& e) {
    if (e.is_config_error()) throw;
    bad(std::string("invalid process spec: ") + e.what());
  }
  bad("process spec: provide either F/H/Sigma or gammas/tail_rate");
}

macromodels::NkCalibration nk_from_config(const json& obj) {
  require_keys(obj, "nk calibration",
               {"beta", "sigma", "delta", "kappa", "shock_gamma0", "shock_gamma1"});
  try {
    return macromodels::NkCalibration::make(
        number_from_json(obj.at("beta"), "beta"), number_from_json(obj.at("sigma"), "sigma"),
        number_from_json(obj.at("delta"), "delta"), number_from_json(obj.at("kappa"), "kappa"),
        matrix_from_json(obj.at("shock_gamma0"), "shock_gamma0"),
        matrix_from_json(obj.at("shock_gamma1"), "shock_gamma1"));
  } catch (const Error& e) {
    if (e.is_config_error()) throw;
    bad(std::string("invalid nk calibration: ") + e.what());
  }
}

macromodels::RbcCalibration rbc_from_config(const json& obj) {
  require_keys(obj, "rbc calibration",
               {"beta", "sigma", "varphi", "delta", "alpha", "rho"}, {"sigma_eps"});
  try {
    const double sigma_eps =
        obj.contains("sigma_eps") ? number_from_json(obj.at("sigma_eps"), "sigma_eps") : 1.0;
    return macromodels::RbcCalibration::make(
        number_from_json(obj.at("beta"), "beta"), number_from_json(obj.at("sigma"), "sigma"),
        number_from_json(obj.at("varphi"), "varphi"),
        number_from_json(obj.at("delta"), "delta"), number_from_json(obj.at("alpha"), "alpha"),
        number_from_json(obj.at("rho"), "rho"), sigma_eps);
  } catch (const Error& e) {
    if (e.is_config_error()) throw;
    bad(std::string("invalid rbc calibration: ") + e.what());
  }
}

macromodels::DmpCalibration dmp_from_config(const json& obj) {
  require_keys(obj, "dmp calibration",
               {"beta", "s", "p", "alpha", "delta", "rho_a", "rho_s", "b", "corr_as",
                "sd_ratio"});
  try {
    return macromodels::DmpCalibration::make(
        number_from_json(obj.at("beta"), "beta"), number_from_json(obj.at("s"), "s"),
        number_from_json(obj.at("p"), "p"), number_from_json(obj.at("alpha"), "alpha"),
        number_from_json(obj.at("delta"), "delta"), number_from_json(obj.at("rho_a"), "rho_a"),
        number_from_json(obj.at("rho_s"), "rho_s"), number_from_json(obj.at("b"), "b"),
        number_from_json(obj.at("corr_as"), "corr_as"),
        number_from_json(obj.at("sd_ratio"), "sd_ratio"));
  } catch (const Error& e) {
    if (e.is_config_error()) throw;
    bad(std::string("invalid dmp calibration: ") + e.what());
  }
}

GePeSpec ge_pe_from_config(const json& obj) {
  require_keys(obj, "ge-pe spec", {"H", "b", "c", "g", "beta", "alphas", "d"});
  GePeSpec spec;
  spec.h = matrix_from_json(obj.at("H"), "H");
  spec.b = vector_from_json(obj.at("b"), "b");
  spec.c = vector_from_json(obj.at("c"), "c");
  spec.g = vector_from_json(obj.at("g"), "g");
  spec.beta = number_from_json(obj.at("beta"), "beta");
  spec.alphas = vector_from_json(obj.at("alphas"), "alphas");
  spec.d = int_from_json(obj.at("d"), "d");
  return spec;
}

std::string format_double(double v) {
  char buffer[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buffer, sizeof buffer, "%.*g", precision, v);
    double back = std::strtod(buffer, nullptr);
    if (back == v) return buffer;
  }
  return buffer;
}

void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const MatrixXd& values) {
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out << ',';
      out << format_double(values(r, c));
    }
    out << '\n';
  }
}

MatrixXd read_csv(std::istream& in, std::vector<std::string>* header) {
  std::string line;
  if (!std::getline(in, line)) bad("csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> head;
  {
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) head.push_back(cell);
  }
  if (header) *header = head;
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      errno = 0;
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end != cell.c_str() + cell.size() || errno == ERANGE)
        bad("csv line " + std::to_string(line_no) + ": invalid number '" + cell + "'");
      row.push_back(v);
    }
    if (row.size() != head.size())
      bad("csv line " + std::to_string(line_no) + ": expected " +
          std::to_string(head.size()) + " cells, got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  MatrixXd out(static_cast<Eigen::Index>(rows.size()),
               static_cast<Eigen::Index>(head.size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return out;
}

json to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace kldr::config
