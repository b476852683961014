#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "kldr/linalg.hpp"
#include "kldr/procspec.hpp"
#include "kldr/ssm.hpp"
#include "oracle_helpers.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace kldr;
using namespace kldr::ssm;

namespace {

MatrixXd scalar(double x) {
  MatrixXd m(1, 1);
  m << x;
  return m;
}

// State-space form of a latent VAR truth: observe y = H'f exactly.
StateSpaceModel correctly_specified(const procspec::LatentVarProcess& proc) {
  return StateSpaceModel::make(proc.F, proc.H, proc.Sigma,
                               MatrixXd::Zero(proc.n(), proc.n()));
}

StateSpaceModel random_model(int d, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd A(d, d), B(d, n), Qr(d, d), Rr(n, n);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) A(i, j) = normal(rng);
  A *= 0.8 / std::max(linalg::spectral_radius(A), 1e-3);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = normal(rng);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) Qr(i, j) = normal(rng);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) Rr(i, j) = normal(rng);
  MatrixXd Q = Qr * Qr.transpose() + 0.1 * MatrixXd::Identity(d, d);
  MatrixXd R = Rr * Rr.transpose() + 0.1 * MatrixXd::Identity(n, n);
  return StateSpaceModel::make(A, B, Q, R);
}

}  // namespace

TEST_CASE("solve_riccati closed forms") {
  SUBCASE("no observation channel reduces to the Lyapunov equation") {
    auto model = StateSpaceModel::make(scalar(0.8), MatrixXd::Zero(1, 1), scalar(2.0),
                                       scalar(1.0));
    auto filter = solve_riccati(model);
    CHECK(filter.sigma_z(0, 0) == doctest::Approx(2.0 / 0.36).epsilon(1e-10));
    CHECK(filter.K.norm() < 1e-12);
  }
  SUBCASE("correctly specified scalar AR(1) filter is exact") {
    auto model = StateSpaceModel::make(scalar(0.9), scalar(1.0), scalar(1.0), scalar(0.0));
    auto filter = solve_riccati(model);
    CHECK(filter.sigma_z(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(filter.sigma_y(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(filter.K(0, 0) == doctest::Approx(0.9).epsilon(1e-10));
    CHECK(std::abs(filter.closed_loop(0, 0)) < 1e-10);
  }
}

TEST_CASE("solve_riccati satisfies its own fixed point on random models") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    auto model = random_model(2, 3, rng);
    auto filter = solve_riccati(model);
    MatrixXd sy_pinv = linalg::pinv(filter.sigma_y);
    MatrixXd residual =
        model.A *
            (filter.sigma_z -
             filter.sigma_z * model.B * sy_pinv * model.B.transpose() * filter.sigma_z) *
            model.A.transpose() +
        model.Q - filter.sigma_z;
    CHECK(residual.norm() < 1e-10 * std::max(1.0, filter.sigma_z.norm()));
    MatrixXd gain = model.A * filter.sigma_z * model.B * sy_pinv;
    CHECK((gain - filter.K).norm() < 1e-10);
    CHECK((filter.sigma_y - model.B.transpose() * filter.sigma_z * model.B - model.R).norm() <
          1e-12 * std::max(1.0, filter.sigma_y.norm()));
    CHECK(linalg::spectral_radius(filter.closed_loop) < 1.0);
  }
}

TEST_CASE("forecast_weights") {
  SUBCASE("definition holds entrywise") {
    std::mt19937_64 rng(32);
    auto model = random_model(2, 2, rng);
    auto filter = solve_riccati(model);
    auto weights = forecast_weights(model, 6);
    MatrixXd loop_pow = MatrixXd::Identity(2, 2);
    for (int tau = 1; tau <= 6; ++tau) {
      MatrixXd expected = model.B.transpose() * loop_pow * filter.K;
      CHECK((weights.psis[tau - 1] - expected).norm() < 1e-12);
      loop_pow = filter.closed_loop * loop_pow;
    }
    CHECK((weights.weight(3, 2) -
           model.B.transpose() * model.A * model.A * weights.state_weights[2])
              .norm() < 1e-12);
  }
  SUBCASE("A = 0 kills every forecast beyond the nowcast") {
    auto model = StateSpaceModel::make(MatrixXd::Zero(1, 1), scalar(1.0), scalar(1.0),
                                       scalar(0.5));
    auto weights = forecast_weights(model, 4);
    for (const auto& psi : weights.psis) CHECK(psi.norm() < 1e-14);
    CHECK(weights.head(2).norm() < 1e-14);
  }
}

TEST_CASE("kldr closed forms") {
  SUBCASE("correct specification scores zero") {
    auto truth = procspec::autocov_from_var(fixtures::scalar_ar1(0.9), 60);
    auto model =
        StateSpaceModel::make(scalar(0.9), scalar(1.0), scalar(1.0), scalar(0.0));
    CHECK(std::abs(ssm::kldr(model, truth, KldrMode::exact_gaussian)) < 1e-9);
  }
  SUBCASE("correct specification scores zero on latent VAR truths") {
    std::mt19937_64 rng(33);
    for (int rep = 0; rep < 5; ++rep) {
      auto proc = fixtures::random_latent(3, 2, rng);
      auto truth = procspec::autocov_from_var(proc, 10);
      CHECK(std::abs(ssm::kldr(correctly_specified(proc), truth, KldrMode::exact_gaussian)) <
            1e-9);
    }
  }
  SUBCASE("variance-matched static model against an AR(1) truth") {
    auto truth = procspec::autocov_from_var(fixtures::scalar_ar1(0.9), 60);
    double g0 = truth.gammas[0](0, 0);
    auto model =
        StateSpaceModel::make(MatrixXd::Zero(1, 1), scalar(1.0), scalar(g0), scalar(0.0));
    double v = ssm::kldr(model, truth, KldrMode::exact_gaussian);
    CHECK(v == doctest::Approx(0.8303656034108255).epsilon(1e-9));
  }
  SUBCASE("relative and exact modes differ by a model-independent constant") {
    auto truth = procspec::autocov_from_var(fixtures::scalar_ar1(0.8), 60);
    auto m1 = StateSpaceModel::make(scalar(0.5), scalar(1.0), scalar(1.0), scalar(0.3));
    auto m2 = StateSpaceModel::make(scalar(0.2), scalar(0.7), scalar(2.0), scalar(0.1));
    double c1 = ssm::kldr(m1, truth, KldrMode::exact_gaussian) - ssm::kldr(m1, truth, KldrMode::relative);
    double c2 = ssm::kldr(m2, truth, KldrMode::exact_gaussian) - ssm::kldr(m2, truth, KldrMode::relative);
    CHECK(c1 == doctest::Approx(c2).epsilon(1e-12));
  }
  SUBCASE("truncated evaluation matches the closed form within its bound") {
    std::mt19937_64 rng(34);
    auto proc = fixtures::random_latent(3, 2, rng, 0.8);
    auto truth = procspec::autocov_from_var(proc, procspec::default_lag_count(0.81, 60));
    auto model = random_model(1, 2, rng);
    double exact = ssm::kldr(model, truth, KldrMode::relative);
    procspec::AutocovSeq stripped = truth;
    stripped.source.reset();
    double bound = -1.0;
    double truncated = ssm::kldr(model, stripped, KldrMode::relative, &bound);
    CHECK(bound >= 0.0);
    CHECK(std::abs(truncated - exact) < std::max(bound, 1e-8));
  }
  SUBCASE("a model with smaller support than the truth scores +infinity") {
    std::mt19937_64 rng(35);
    auto proc = fixtures::random_latent(3, 2, rng);
    auto truth = procspec::autocov_from_var(proc, 10);
    StateSpaceModel degenerate;  // built raw: make() would reject it
    degenerate.A = scalar(0.5);
    degenerate.B = MatrixXd::Zero(1, 2);
    degenerate.B(0, 0) = 1.0;
    degenerate.Q = scalar(1.0);
    degenerate.R = MatrixXd::Zero(2, 2);
    CHECK(std::isinf(ssm::kldr(degenerate, truth, KldrMode::relative)));
  }
}

TEST_CASE("mse_w closed forms") {
  auto truth = procspec::autocov_from_var(fixtures::scalar_ar1(0.9), 60);
  SUBCASE("perfect model leaves only the irreducible innovation") {
    auto model = StateSpaceModel::make(scalar(0.9), scalar(1.0), scalar(1.0), scalar(0.0));
    CHECK(mse_w(model, truth, 2.5 * MatrixXd::Identity(1, 1)) ==
          doctest::Approx(2.5).epsilon(1e-10));
  }
  SUBCASE("static model forecasts zero, so the error is the variance") {
    double g0 = truth.gammas[0](0, 0);
    auto model =
        StateSpaceModel::make(MatrixXd::Zero(1, 1), scalar(1.0), scalar(g0), scalar(0.0));
    CHECK(mse_w(model, truth, MatrixXd::Identity(1, 1)) ==
          doctest::Approx(g0).epsilon(1e-10));
  }
}

TEST_CASE("subjective_moments") {
  SUBCASE("static model returns its observation covariance") {
    MatrixXd R(2, 2);
    R << 2.0, 0.3, 0.3, 1.0;
    auto model = StateSpaceModel::make(scalar(0.0), MatrixXd::Zero(1, 2), scalar(1.0), R);
    auto acv = subjective_moments(model, 3);
    CHECK((acv.gammas[0] - R).norm() < 1e-12);
    for (int l = 1; l <= 3; ++l) CHECK(acv.gammas[l].norm() < 1e-12);
  }
  SUBCASE("attached source reproduces the reported moments") {
    std::mt19937_64 rng(36);
    auto model = random_model(2, 2, rng);
    auto acv = subjective_moments(model, 8);
    REQUIRE(acv.source.has_value());
    auto recomputed = procspec::autocov_from_var(*acv.source, 8);
    for (int l = 0; l <= 8; ++l)
      CHECK((recomputed.gammas[l] - acv.gammas[l]).norm() < 1e-10);
  }
  SUBCASE("feeding a model's own moments back gives zero divergence") {
    std::mt19937_64 rng(37);
    auto model = random_model(2, 3, rng);
    auto acv = subjective_moments(model, 8);
    CHECK(std::abs(ssm::kldr(model, acv, KldrMode::exact_gaussian)) < 1e-9);
  }
}

TEST_CASE("error second moment agrees with a simulated filter") {
  std::mt19937_64 rng(38);
  auto proc = fixtures::random_latent(2, 2, rng, 0.75);
  auto truth = procspec::autocov_from_var(proc, 10);
  auto model = random_model(2, 2, rng);
  auto filter = solve_riccati(model);
  MatrixXd mee = error_second_moment(model, filter, truth);

  const int T = 400000;
  MatrixXd path = oracle::simulate_latent_var(proc.F, proc.H, proc.Sigma, T, 9099);
  VectorXd zhat = VectorXd::Zero(2);
  const int chunks = 100;
  const int chunk_len = T / chunks;
  MatrixXd mean_acc = MatrixXd::Zero(2, 2);
  MatrixXd sq_acc = MatrixXd::Zero(2, 2);
  MatrixXd total = MatrixXd::Zero(2, 2);
  MatrixXd chunk_acc = MatrixXd::Zero(2, 2);
  int in_chunk = 0, done_chunks = 0;
  for (int t = 0; t < T; ++t) {
    VectorXd y = path.row(t).transpose();
    if (t > 0) {
      VectorXd e = y - model.B.transpose() * zhat;
      MatrixXd ee = e * e.transpose();
      total += ee;
      chunk_acc += ee;
      if (++in_chunk == chunk_len && done_chunks < chunks) {
        MatrixXd est = chunk_acc / chunk_len;
        mean_acc += est;
        sq_acc += est.cwiseProduct(est);
        chunk_acc.setZero();
        in_chunk = 0;
        ++done_chunks;
      }
    }
    zhat = filter.closed_loop * zhat + filter.K * y;
  }
  mean_acc /= done_chunks;
  MatrixXd var = sq_acc / done_chunks - mean_acc.cwiseProduct(mean_acc);
  MatrixXd sample = total / (T - 1);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double se = std::sqrt(std::max(var(i, j), 1e-300) / done_chunks);
      CHECK(std::abs(sample(i, j) - mee(i, j)) < 3.0 * se);
    }
}
