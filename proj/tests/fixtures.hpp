#pragma once

// Shared test fixtures: small processes with known structure.

#include <Eigen/Dense>
#include <random>

#include "kldr/procspec.hpp"

namespace fixtures {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using kldr::procspec::LatentVarProcess;

// Scalar AR(1) with persistence phi and unit innovation variance.
inline LatentVarProcess scalar_ar1(double phi, double sigma2 = 1.0) {
  MatrixXd F(1, 1), H(1, 1), S(1, 1);
  F << phi;
  H << 1.0;
  S << sigma2;
  return LatentVarProcess::make(F, H, S);
}

// Scalar observable equal to the sum of independent AR(1) factors whose
// stationary variances are all one (so the lag-l autocorrelation is the
// plain average of alpha_i^l).
inline LatentVarProcess equal_weight_factor_sum(const VectorXd& alphas) {
  const int m = static_cast<int>(alphas.size());
  MatrixXd F = MatrixXd::Zero(m, m);
  MatrixXd S = MatrixXd::Zero(m, m);
  MatrixXd H = MatrixXd::Ones(m, 1);
  for (int i = 0; i < m; ++i) {
    F(i, i) = alphas(i);
    S(i, i) = 1.0 - alphas(i) * alphas(i);
  }
  return LatentVarProcess::make(F, H, S);
}

// Diagonal VAR(1) observed directly: y_i independent AR(1) with persistence
// alpha_i and innovation s.d. sigma_i.
inline LatentVarProcess diagonal_var(const VectorXd& alphas, const VectorXd& sigmas) {
  const int m = static_cast<int>(alphas.size());
  MatrixXd F = MatrixXd::Zero(m, m);
  MatrixXd S = MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    F(i, i) = alphas(i);
    S(i, i) = sigmas(i) * sigmas(i);
  }
  return LatentVarProcess::make(F, MatrixXd::Identity(m, m), S);
}

// Two independent ARMA(1,1) observables, each in companion form
// (y_i, eps_i) with y_{i,t} = phi_i y_{i,t-1} + eps_{i,t} + theta_i eps_{i,t-1}.
inline LatentVarProcess two_arma11(double phi1, double theta1, double phi2, double theta2) {
  MatrixXd F = MatrixXd::Zero(4, 4);
  MatrixXd S = MatrixXd::Zero(4, 4);
  MatrixXd H = MatrixXd::Zero(4, 2);
  F(0, 0) = phi1;
  F(0, 1) = theta1;
  F(2, 2) = phi2;
  F(2, 3) = theta2;
  S(0, 0) = S(0, 1) = S(1, 0) = S(1, 1) = 1.0;
  S(2, 2) = S(2, 3) = S(3, 2) = S(3, 3) = 1.0;
  H(0, 0) = 1.0;
  H(2, 1) = 1.0;
  return LatentVarProcess::make(F, H, S);
}

// Random stable latent VAR(1) with a full-rank loading, for property tests.
inline LatentVarProcess random_latent(int m, int n, std::mt19937_64& rng,
                                      double target_radius = 0.85) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto randn = [&](int r, int c) {
    MatrixXd out(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out(i, j) = normal(rng);
    return out;
  };
  MatrixXd F = randn(m, m);
  Eigen::EigenSolver<MatrixXd> es(F);
  double rho = es.eigenvalues().cwiseAbs().maxCoeff();
  if (rho > 0.0) F *= target_radius / rho;
  MatrixXd H = randn(m, n);
  MatrixXd root = randn(m, m);
  MatrixXd Sigma = root * root.transpose() + 0.05 * MatrixXd::Identity(m, m);
  return LatentVarProcess::make(F, H, Sigma);
}

// Random invertible matrix with singular values bounded away from zero.
inline MatrixXd random_invertible(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    MatrixXd T(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) T(i, j) = normal(rng);
    Eigen::JacobiSVD<MatrixXd> svd(T);
    if (svd.singularValues().minCoeff() > 0.2) return T;
  }
}

}  // namespace fixtures
