#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "kldr/config.hpp"

using kldr::Error;
using kldr::errc;
using namespace kldr::config;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

bool config_error(const std::function<void()>& fn, const std::string& needle = "") {
  try {
    fn();
  } catch (const Error& e) {
    return e.is_config_error() &&
           (needle.empty() || std::string(e.what()).find(needle) != std::string::npos);
  }
  return false;
}

}  // namespace

TEST_CASE("toml subset parses scalars, strings, booleans, and comments") {
  auto root = parse_toml_subset(
      "# leading comment\n"
      "alpha = 0.95  # trailing comment\n"
      "\n"
      "count = 12\n"
      "negative = -3\n"
      "label = \"two words # not a comment\"\n"
      "escaped = \"a\\\"b\\\\c\\n\"\n"
      "flag = true\n"
      "off = false\n"
      "sci = 1.5e-3\n");
  CHECK(root.at("alpha").get<double>() == doctest::Approx(0.95));
  CHECK(root.at("count").is_number_integer());
  CHECK(root.at("count").get<int>() == 12);
  CHECK(root.at("negative").get<int>() == -3);
  CHECK(root.at("label").get<std::string>() == "two words # not a comment");
  CHECK(root.at("escaped").get<std::string>() == "a\"b\\c\n");
  CHECK(root.at("flag").get<bool>() == true);
  CHECK(root.at("off").get<bool>() == false);
  CHECK(root.at("sci").get<double>() == doctest::Approx(1.5e-3));
}

TEST_CASE("toml subset parses arrays, nested arrays, and multi-line arrays") {
  auto root = parse_toml_subset(
      "v = [1.0, 2.0, 3.0]\n"
      "m = [[0.9, 0.1], [0.0, 0.5]]\n"
      "wrapped = [\n"
      "  [1.0, 0.0],  # identity row\n"
      "  [0.0, 1.0],\n"
      "]\n"
      "after = 7\n");
  CHECK(vector_from_json(root.at("v"), "v").isApprox(Eigen::Vector3d(1.0, 2.0, 3.0)));
  MatrixXd m = matrix_from_json(root.at("m"), "m");
  CHECK(m(0, 0) == 0.9);
  CHECK(m(1, 1) == 0.5);
  CHECK(matrix_from_json(root.at("wrapped"), "wrapped").isIdentity(0.0));
  CHECK(root.at("after").get<int>() == 7);
}

TEST_CASE("toml subset rejects out-of-scope syntax") {
  CHECK(config_error([] { parse_toml_subset("[section]\nx = 1\n"); }, "table headers"));
  CHECK(config_error([] { parse_toml_subset("x = {a = 1}\n"); }, "inline tables"));
  CHECK(config_error([] { parse_toml_subset("x = 1\nx = 2\n"); }, "duplicate key"));
  CHECK(config_error([] { parse_toml_subset("a.b = 1\n"); }, "invalid key"));
  CHECK(config_error([] { parse_toml_subset("x = 2026-08-15\n"); }, "invalid number"));
  CHECK(config_error([] { parse_toml_subset("x = [1, 2\n"); }, "unterminated array"));
  CHECK(config_error([] { parse_toml_subset("x = \"open\n"); }, "unterminated string"));
  CHECK(config_error([] { parse_toml_subset("x = nan\n"); }, "unsupported value"));
  CHECK(config_error([] { parse_toml_subset("x 1\n"); }, "expected key = value"));
  CHECK(config_error([] { parse_toml_subset("x = 1 2\n"); }, "trailing characters"));
  CHECK(config_error([] { parse_toml_subset("x = 1e\n"); }, "invalid number"));
}

TEST_CASE("json parsing is strict") {
  CHECK(parse_json("{\"a\": 1.5}").at("a").get<double>() == 1.5);
  CHECK(config_error([] { parse_json("{\"a\": }"); }, "JSON parse failure"));
  CHECK(config_error([] { parse_json("[1, 2]"); }, "root must be a JSON object"));
}

TEST_CASE("require_keys enforces the strict schema") {
  auto obj = parse_json("{\"a\": 1, \"b\": 2}");
  CHECK_NOTHROW(require_keys(obj, "t", {"a"}, {"b"}));
  CHECK_NOTHROW(require_keys(obj, "t", {"a", "b"}));
  CHECK(config_error([&] { require_keys(obj, "t", {"a"}); }, "unknown key 'b'"));
  CHECK(config_error([&] { require_keys(obj, "t", {"a", "b", "c"}); },
                     "missing required key 'c'"));
}

TEST_CASE("typed readers validate shapes") {
  auto root = parse_json(
      "{\"n\": 2.5, \"k\": 3, \"v\": [1, 2], \"m\": [[1, 2], [3, 4]],"
      " \"ragged\": [[1, 2], [3]], \"mixed\": [1, \"x\"], \"s\": \"text\"}");
  CHECK(number_from_json(root.at("n"), "n") == 2.5);
  CHECK(number_from_json(root.at("k"), "k") == 3.0);
  CHECK(int_from_json(root.at("k"), "k") == 3);
  CHECK(config_error([&] { int_from_json(root.at("n"), "n"); }, "expected an integer"));
  CHECK(config_error([&] { number_from_json(root.at("s"), "s"); }, "expected a number"));
  CHECK(vector_from_json(root.at("v"), "v").size() == 2);
  CHECK(config_error([&] { vector_from_json(root.at("mixed"), "mixed"); },
                     "expected a number"));
  CHECK(matrix_from_json(root.at("m"), "m").rows() == 2);
  CHECK(config_error([&] { matrix_from_json(root.at("ragged"), "ragged"); }, "row 1"));
  CHECK(config_error([&] { matrix_from_json(root.at("v"), "v"); }, "rows must be"));
}

TEST_CASE("process_from_config accepts both forms and stays strict") {
  SUBCASE("latent law form") {
    auto acv = process_from_config(parse_json(
        "{\"F\": [[0.9]], \"H\": [[1.0]], \"Sigma\": [[0.19]], \"lags\": 25}"));
    REQUIRE(acv.max_lag() == 25);
    CHECK(acv.gammas[0](0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(acv.gammas[1](0, 0) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(acv.source.has_value());
  }
  SUBCASE("autocovariance form") {
    auto acv = process_from_config(parse_json(
        "{\"gammas\": [[[1.0]], [[0.7]], [[0.49]]], \"tail_rate\": 0.7}"));
    CHECK(acv.max_lag() == 2);
    CHECK(acv.tail_rate == 0.7);
    CHECK(!acv.source.has_value());
  }
  SUBCASE("toml spelling of the same process") {
    auto acv = process_from_config(parse_toml_subset(
        "F = [[0.9]]\nH = [[1.0]]\nSigma = [[0.19]]\n"));
    CHECK(acv.gammas[0](0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("rejections") {
    CHECK(config_error(
        [] {
          process_from_config(parse_json(
              "{\"F\": [[0.9]], \"H\": [[1.0]], \"Sigma\": [[0.19]], \"tail_rate\": 0.9}"));
        },
        "mutually exclusive"));
    CHECK(config_error([] { process_from_config(parse_json("{\"seed\": 3}")); },
                       "provide either"));
    CHECK(config_error(
        [] {
          process_from_config(parse_json(
              "{\"F\": [[0.9]], \"H\": [[1.0]], \"Sigma\": [[0.19]], \"extra\": 1}"));
        },
        "unknown key 'extra'"));
    CHECK(config_error(
        [] {
          process_from_config(
              parse_json("{\"F\": [[1.2]], \"H\": [[1.0]], \"Sigma\": [[1.0]]}"));
        },
        "invalid process spec"));
    CHECK(config_error(
        [] {
          process_from_config(
              parse_json("{\"gammas\": [[[1.0]], [[0.7]]], \"tail_rate\": 1.4}"));
        },
        "invalid process spec"));
  }
}

TEST_CASE("calibrations load from config with strict keys") {
  SUBCASE("nk") {
    auto cal = nk_from_config(parse_json(
        "{\"beta\": 0.99, \"sigma\": 1.0, \"delta\": 0.75, \"kappa\": 0.172,"
        " \"shock_gamma0\": [[1,0,0],[0,1,0],[0,0,1]],"
        " \"shock_gamma1\": [[0.5,0,0],[0,0.5,0],[0,0,0.5]]}"));
    CHECK(cal.kappa == 0.172);
    CHECK(cal.shock_gamma1(2, 2) == 0.5);
    CHECK(config_error(
        [] { nk_from_config(parse_json("{\"beta\": 0.99}")); }, "missing required key"));
    CHECK(config_error(
        [] {
          nk_from_config(parse_json(
              "{\"beta\": 1.5, \"sigma\": 1.0, \"delta\": 0.75, \"kappa\": 0.172,"
              " \"shock_gamma0\": [[1,0,0],[0,1,0],[0,0,1]],"
              " \"shock_gamma1\": [[0,0,0],[0,0,0],[0,0,0]]}"));
        },
        "beta must lie in (0, 1)"));
  }
  SUBCASE("rbc") {
    auto cal = rbc_from_config(parse_toml_subset(
        "beta = 0.99\nsigma = 1.0\nvarphi = 1.0\ndelta = 0.012\nalpha = 0.3\nrho = 0.95\n"));
    CHECK(cal.rho == 0.95);
    CHECK(cal.sigma_eps == 1.0);
    auto scaled = rbc_from_config(parse_json(
        "{\"beta\": 0.99, \"sigma\": 1.0, \"varphi\": 1.0, \"delta\": 0.012,"
        " \"alpha\": 0.3, \"rho\": 0.95, \"sigma_eps\": 0.7}"));
    CHECK(scaled.sigma_eps == 0.7);
    CHECK(config_error(
        [] {
          rbc_from_config(parse_toml_subset(
              "beta = 0.99\nsigma = 1.0\nvarphi = 1.0\ndelta = 0.012\nalpha = 0.3\n"
              "rho = 0.95\ntypo = 1\n"));
        },
        "unknown key 'typo'"));
  }
  SUBCASE("dmp") {
    auto cal = dmp_from_config(parse_json(
        "{\"beta\": 0.99, \"s\": 0.035, \"p\": 0.4, \"alpha\": 0.72, \"delta\": 0.72,"
        " \"rho_a\": 0.96, \"rho_s\": 0.90, \"b\": 0.4, \"corr_as\": -0.4,"
        " \"sd_ratio\": 10.0}"));
    CHECK(cal.sd_ratio == 10.0);
    CHECK(config_error(
        [] {
          dmp_from_config(parse_json(
              "{\"beta\": 0.99, \"s\": 0.035, \"p\": 0.4, \"alpha\": 0.72, \"delta\": 0.72,"
              " \"rho_a\": 0.96, \"rho_s\": 0.90, \"b\": 0.4, \"corr_as\": -0.4}"));
        },
        "missing required key 'sd_ratio'"));
  }
  SUBCASE("ge-pe") {
    auto spec = ge_pe_from_config(parse_json(
        "{\"H\": [[1, 0], [0, 1]], \"b\": [0.5, 0.5], \"c\": [1, 0], \"g\": [0.2, 0.1],"
        " \"beta\": 0.96, \"alphas\": [0.9, 0.5], \"d\": 1}"));
    CHECK(spec.h.isIdentity(0.0));
    CHECK(spec.d == 1);
    CHECK(spec.alphas.size() == 2);
    CHECK(config_error(
        [] {
          ge_pe_from_config(parse_json(
              "{\"H\": [[1]], \"b\": [1], \"c\": [1], \"g\": [0], \"beta\": 0.96,"
              " \"alphas\": [0.9], \"d\": 1, \"x\": 0}"));
        },
        "unknown key 'x'"));
  }
}

TEST_CASE("format_double round-trips every value exactly") {
  std::vector<double> values = {0.0,
                                1.0,
                                -1.0,
                                1.0 / 3.0,
                                0.1,
                                0.985,
                                -2.2999999999999998,
                                6.054233963862926e-4,
                                1e-300,
                                -1.7976931348623157e308,
                                0.9983818130229972};
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 200; ++i) values.push_back(normal(rng) * std::pow(10.0, i % 13 - 6));
  for (double v : values) {
    std::string text = format_double(v);
    CHECK(std::strtod(text.c_str(), nullptr) == v);
  }
  // Short decimals keep their short spelling.
  CHECK(format_double(0.985) == "0.985");
  CHECK(format_double(12.0) == "12");
}

TEST_CASE("csv writes round-trip exactly") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd m(6, 3);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) m(i, j) = normal(rng) * std::pow(10.0, j * 5 - 5);
  m(0, 0) = 1.0 / 3.0;
  std::ostringstream out;
  write_csv(out, {"first", "second", "third"}, m);
  std::istringstream in(out.str());
  std::vector<std::string> header;
  MatrixXd back = read_csv(in, &header);
  REQUIRE(header.size() == 3);
  CHECK(header[0] == "first");
  REQUIRE(back.rows() == m.rows());
  REQUIRE(back.cols() == m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) CHECK(back(i, j) == m(i, j));

  std::istringstream badrow("a,b\n1.0\n");
  CHECK(config_error([&] { read_csv(badrow); }, "expected 2 cells"));
  std::istringstream badnum("a\nxyz\n");
  CHECK(config_error([&] { read_csv(badnum); }, "invalid number"));
}

TEST_CASE("load_config_file dispatches on extension") {
  const std::string dir = "config_test_artifacts";
  if (std::system(("rm -rf " + dir + " && mkdir -p " + dir).c_str()) != 0) FAIL("setup");
  {
    std::ofstream j(dir + "/a.json");
    j << "{\"x\": 1}";
    std::ofstream t(dir + "/a.toml");
    t << "x = 2\n";
    std::ofstream other(dir + "/a.txt");
    other << "x = 3\n";
  }
  CHECK(load_config_file(dir + "/a.json").at("x").get<int>() == 1);
  CHECK(load_config_file(dir + "/a.toml").at("x").get<int>() == 2);
  CHECK(config_error([&] { load_config_file(dir + "/missing.json"); }, "cannot open"));
  CHECK(config_error([&] { load_config_file(dir + "/a.txt"); }, "must end in"));
  if (std::system(("rm -rf " + dir).c_str()) != 0) FAIL("cleanup");
}

TEST_CASE("json matrix serialization matches the parsed form") {
  MatrixXd m(2, 2);
  m << 1.5, -2.25, 0.0, 1.0 / 3.0;
  auto round = matrix_from_json(to_json(m), "m");
  CHECK(round == m);
  VectorXd v(3);
  v << 0.1, 0.2, 0.3;
  CHECK(vector_from_json(to_json(v), "v") == v);
}
