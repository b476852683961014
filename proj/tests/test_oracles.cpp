// Self-checks for the independent oracles plus analytically frozen values.
// The oracles must stand on their own before they are trusted to verify the
// library, so everything here is checked against closed forms.

#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracle_helpers.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("power iteration recovers the dominant eigenvalue of a known matrix") {
  MatrixXd m(2, 2);
  m << 2.0, 1.0, 1.0, 2.0;  // eigenvalues 3 and 1
  CHECK(oracle::power_iteration_top_abs_eig(m) == doctest::Approx(3.0).epsilon(1e-10));

  MatrixXd neg(2, 2);
  neg << -5.0, 0.0, 0.0, 2.0;
  CHECK(oracle::power_iteration_top_abs_eig(neg) == doctest::Approx(5.0).epsilon(1e-10));
}

TEST_CASE("Monte Carlo autocovariance matches the scalar AR(1) closed form") {
  const double phi = 0.8;
  MatrixXd F(1, 1), H(1, 1), S(1, 1);
  F << phi;
  H << 1.0;
  S << 1.0;
  const int T = 400000;
  MatrixXd path = oracle::simulate_latent_var(F, H, S, T, 777);
  const double gamma0 = 1.0 / (1.0 - phi * phi);
  // Asymptotic s.e. of the sample variance of an AR(1), kept conservative.
  const double se0 = gamma0 * std::sqrt(2.0 * (1.0 + phi * phi) / ((1.0 - phi * phi) * T));
  CHECK(std::abs(oracle::sample_autocov(path, 0)(0, 0) - gamma0) < 4.0 * se0);
  CHECK(std::abs(oracle::sample_autocov(path, 1)(0, 0) - phi * gamma0) < 4.0 * se0);
  CHECK(std::abs(oracle::sample_autocov(path, 2)(0, 0) - phi * phi * gamma0) < 4.0 * se0);
}

TEST_CASE("dense grid scan solves the correctly specified scalar AR(1)") {
  // For an AR(1) truth the optimum is a = phi, eta = 0 with value phi^2.
  const double phi = 0.9;
  std::vector<MatrixXd> gammas;
  const double gamma0 = 1.0 / (1.0 - phi * phi);
  for (int l = 0; l <= 60; ++l) {
    MatrixXd g(1, 1);
    g << gamma0 * std::pow(phi, l);
    gammas.push_back(g);
  }
  auto best = oracle::dense_grid_scan(gammas, 401, 201);
  CHECK(best.a == doctest::Approx(phi).epsilon(0.01));
  CHECK(best.eta == doctest::Approx(0.0).epsilon(0.01));
  CHECK(best.value == doctest::Approx(phi * phi).epsilon(1e-3));
}

TEST_CASE("omega objective at eta=0 reduces to -a^2 + 2 a C_1 eigenvalue") {
  MatrixXd c1(2, 2);
  c1 << 0.7, 0.1, 0.1, 0.4;
  std::vector<MatrixXd> cs = {c1};
  const double a = 0.5;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(-a * a * MatrixXd::Identity(2, 2) + 2.0 * a * c1);
  CHECK(oracle::omega_lambda_max(cs, a, 0.0) ==
        doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-12));
  CHECK(oracle::omega_lambda_max(cs, a, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("projection weights reproduce the AR(1) regression coefficients") {
  const double phi = 0.7;
  const double gamma0 = 1.0 / (1.0 - phi * phi);
  std::vector<MatrixXd> gammas;
  for (int l = 0; l <= 30; ++l) {
    MatrixXd g(1, 1);
    g << gamma0 * std::pow(phi, l);
    gammas.push_back(g);
  }
  auto phis = oracle::projection_weights(gammas, 5);
  CHECK(phis[0](0, 0) == doctest::Approx(phi).epsilon(1e-9));
  for (size_t i = 1; i < phis.size(); ++i)
    CHECK(std::abs(phis[i](0, 0)) < 1e-9);
}

TEST_CASE("frozen analytic values used across the suite") {
  // Gaussian cross-entropy gap between an i.i.d. model with the true variance
  // and an AR(1) truth with persistence 0.9: -0.5 ln(1 - 0.81).
  CHECK(-0.5 * std::log(1.0 - 0.81) == doctest::Approx(0.8303656034108255).epsilon(1e-12));

  // ARMA(1,1) lag-one autocorrelation at phi=0.6, theta=0.3 from the moment
  // recursion gamma_0 = (1+theta^2+2 phi theta)/(1-phi^2), gamma_1 = phi gamma_0 + theta.
  const double phi = 0.6, theta = 0.3;
  const double g0 = (1.0 + theta * theta + 2.0 * phi * theta) / (1.0 - phi * phi);
  const double g1 = phi * g0 + theta;
  const double direct = g1 / g0;
  const double closed_form =
      (phi + theta) * (1.0 + phi * theta) / (1.0 + 2.0 * phi * theta + theta * theta);
  CHECK(direct == doctest::Approx(closed_form).epsilon(1e-12));
  CHECK(closed_form == doctest::Approx(0.7324137931034483).epsilon(1e-12));

  // Equal-weight sum of AR(1) factors alpha = (0.9, 0.5): the lag-l
  // autocorrelation is (0.9^l + 0.5^l)/2, so the exponential ergodicity test
  // fails first at lag 2 (0.53 > 0.49).
  CHECK(0.5 * (0.9 + 0.5) == doctest::Approx(0.7));
  CHECK(0.5 * (0.81 + 0.25) == doctest::Approx(0.53));
  CHECK(0.53 > 0.7 * 0.7);
}

TEST_CASE("two ARMA(1,1) fixture reproduces its moment recursion") {
  const double phi = 0.6, theta = 0.3;
  auto proc = fixtures::two_arma11(phi, theta, 0.9, 0.3);
  // Stationary moments of component one from simulation.
  MatrixXd path = oracle::simulate_latent_var(proc.F, proc.H, proc.Sigma, 400000, 99);
  const double g0 = (1.0 + theta * theta + 2.0 * phi * theta) / (1.0 - phi * phi);
  const double g1 = phi * g0 + theta;
  CHECK(oracle::sample_autocov(path, 0)(0, 0) == doctest::Approx(g0).epsilon(0.03));
  CHECK(oracle::sample_autocov(path, 1)(0, 0) == doctest::Approx(g1).epsilon(0.03));
  // Cross moments vanish by independence.
  CHECK(std::abs(oracle::sample_autocov(path, 0)(0, 1)) < 0.05);
}
