#pragma once

// Independent reference implementations used to cross-check library results.
// Nothing in this header calls into the library; each oracle recomputes its
// target quantity from first principles (direct formula transcription, brute
// force scans, Monte Carlo simulation, or long-regression projections).

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Top absolute eigenvalue of a symmetric matrix by plain power iteration
// with deflation-free Rayleigh quotient readout.
inline double power_iteration_top_abs_eig(const MatrixXd& m, int iters = 20000,
                                          uint64_t seed = 12345) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  VectorXd v(m.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = unif(rng);
  v.normalize();
  double rayleigh = 0.0;
  for (int it = 0; it < iters; ++it) {
    VectorXd w = m * v;
    double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    rayleigh = v.dot(m * v);
  }
  return std::abs(rayleigh);
}

// Deterministic standard-normal draws via Box-Muller on raw 64-bit states, so
// oracle simulations are reproducible independently of the standard library's
// normal_distribution implementation.
class NormalSource {
 public:
  explicit NormalSource(uint64_t seed) : rng_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  double uniform01() {
    // (0,1] so the log above is finite.
    return (static_cast<double>(rng_()) + 1.0) * (1.0 / 18446744073709551616.0);
  }
  std::mt19937_64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Simulates f_t = F f_{t-1} + eps_t, y_t = H'f_t and returns the stacked
// observable path (rows are periods). The state is burned in from zero.
inline MatrixXd simulate_latent_var(const MatrixXd& F, const MatrixXd& H,
                                    const MatrixXd& Sigma, int periods,
                                    uint64_t seed, int burn_in = 2000) {
  const int m = static_cast<int>(F.rows());
  const int n = static_cast<int>(H.cols());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (Sigma + Sigma.transpose()));
  MatrixXd chol = es.eigenvectors() *
                  es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                  es.eigenvectors().transpose();
  NormalSource normals(seed);
  VectorXd f = VectorXd::Zero(m);
  VectorXd eps(m);
  MatrixXd out(periods, n);
  for (int t = -burn_in; t < periods; ++t) {
    for (int i = 0; i < m; ++i) eps(i) = normals.next();
    f = F * f + chol * eps;
    if (t >= 0) out.row(t) = (H.transpose() * f).transpose();
  }
  return out;
}

// Sample autocovariance E[y_t y_{t-l}'] from a simulated path.
inline MatrixXd sample_autocov(const MatrixXd& path, int lag) {
  const int T = static_cast<int>(path.rows());
  const int n = static_cast<int>(path.cols());
  MatrixXd acc = MatrixXd::Zero(n, n);
  for (int t = lag; t < T; ++t) acc += path.row(t).transpose() * path.row(t - lag);
  return acc / static_cast<double>(T - lag);
}

// Builds the symmetrized autocorrelation matrices C_l directly from raw
// autocovariances, duplicating the defining formula on purpose.
inline std::vector<MatrixXd> autocorr_matrices(const std::vector<MatrixXd>& gammas) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (gammas[0] + gammas[0].transpose()));
  MatrixXd g0_inv_sqrt = es.eigenvectors() *
                         es.eigenvalues().cwiseMax(1e-14).cwiseSqrt().cwiseInverse().asDiagonal() *
                         es.eigenvectors().transpose();
  std::vector<MatrixXd> cs;
  for (size_t l = 1; l < gammas.size(); ++l) {
    MatrixXd c = 0.5 * g0_inv_sqrt * (gammas[l] + gammas[l].transpose()) * g0_inv_sqrt;
    cs.push_back(0.5 * (c + c.transpose()));
  }
  return cs;
}

// The one-state objective lambda_max(Omega(a, eta)) evaluated from raw
// autocovariances: Omega = -(a^2(1-eta)^2/(1-a^2 eta^2)) I
//                          + (2(1-eta)(1-a^2 eta)/(1-a^2 eta^2)) sum_l a^l eta^{l-1} C_l.
inline double omega_lambda_max(const std::vector<MatrixXd>& cs, double a, double eta) {
  const int n = static_cast<int>(cs[0].rows());
  if (eta >= 1.0) return 0.0;
  double a2e2 = 1.0 - a * a * eta * eta;
  MatrixXd lag_sum = MatrixXd::Zero(n, n);
  double w = a;  // a^l eta^{l-1}
  for (size_t l = 0; l < cs.size(); ++l) {
    lag_sum += w * cs[l];
    w *= a * eta;
  }
  MatrixXd omega = -(a * a * (1.0 - eta) * (1.0 - eta) / a2e2) * MatrixXd::Identity(n, n) +
                   (2.0 * (1.0 - eta) * (1.0 - a * a * eta) / a2e2) * lag_sum;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (omega + omega.transpose()));
  return es.eigenvalues().maxCoeff();
}

struct GridArgmax {
  double a = 0.0;
  double eta = 0.0;
  double value = -1e300;
};

// Brute-force scan of lambda_max(Omega) over an (a, eta) grid on
// [-1,1] x [0,1]. Used as the global-optimality oracle.
inline GridArgmax dense_grid_scan(const std::vector<MatrixXd>& gammas, int na, int neta) {
  std::vector<MatrixXd> cs = autocorr_matrices(gammas);
  GridArgmax best;
  for (int j = 0; j < neta; ++j) {
    double eta = static_cast<double>(j) / (neta - 1);
    for (int i = 0; i < na; ++i) {
      double a = -1.0 + 2.0 * static_cast<double>(i) / (na - 1);
      double value = omega_lambda_max(cs, a, eta);
      if (value > best.value) best = {a, eta, value};
    }
  }
  return best;
}

// Population linear projection of y_{t+1} on the last `depth` observations,
// from the block-Toeplitz normal equations. For a correctly specified model
// the Kalman one-step weights must converge to these coefficients.
inline std::vector<MatrixXd> projection_weights(const std::vector<MatrixXd>& gammas, int depth) {
  const int n = static_cast<int>(gammas[0].rows());
  auto gamma_at = [&](int l) -> MatrixXd {
    int a = std::abs(l);
    if (a >= static_cast<int>(gammas.size())) return MatrixXd::Zero(n, n);
    return l >= 0 ? gammas[a] : MatrixXd(gammas[a].transpose());
  };
  MatrixXd big(n * depth, n * depth);
  MatrixXd rhs(n, n * depth);
  for (int i = 0; i < depth; ++i) {
    rhs.middleCols(i * n, n) = gamma_at(i + 1);
    for (int j = 0; j < depth; ++j) big.block(i * n, j * n, n, n) = gamma_at(j - i);
  }
  // Regressor stacked as (y_t, y_{t-1}, ..., y_{t-depth+1}); solve
  // Phi * Var(stack) = Cov(y_{t+1}, stack).
  MatrixXd phi_all = big.transpose().ldlt().solve(rhs.transpose()).transpose();
  std::vector<MatrixXd> phis;
  for (int i = 0; i < depth; ++i) phis.push_back(phi_all.middleCols(i * n, n));
  return phis;
}

}  // namespace oracle
