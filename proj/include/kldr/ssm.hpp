#pragma once

#include <Eigen/Dense>
#include <vector>

#include "kldr/errors.hpp"
#include "kldr/procspec.hpp"

// Subjective state-space models: steady-state Kalman filtering, forecast
// operators, subjective second moments, and divergence-rate and weighted
// mean-squared-error evaluation against a true autocovariance sequence.
namespace kldr::ssm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Perceived law of motion
//   z_t = A z_{t-1} + w_t,  w_t ~ N(0, Q)
//   y_t = B' z_t + v_t,     v_t ~ N(0, R)
// with A convergent, Q positive definite, R PSD, and nonsingular implied
// unconditional variance of y.
struct StateSpaceModel {
  MatrixXd A;  // d x d
  MatrixXd B;  // d x n
  MatrixXd Q;  // d x d
  MatrixXd R;  // n x n

  int d() const { return static_cast<int>(A.rows()); }
  int n() const { return static_cast<int>(B.cols()); }

  static StateSpaceModel make(MatrixXd A, MatrixXd B, MatrixXd Q, MatrixXd R);
};

// Steady-state (prediction-form) Kalman filter of a StateSpaceModel. sigma_z
// is the stationary one-step-ahead state prediction variance, sigma_y the
// implied predictive variance of the observables, K the gain applied to the
// newest observation, and closed_loop = A - K B' drives the filtered state.
struct SteadyStateFilter {
  MatrixXd K;            // d x n
  MatrixXd sigma_z;      // d x d
  MatrixXd sigma_y;      // n x n
  MatrixXd closed_loop;  // d x d
  int iterations = 0;
};

// One-state reduced model of an n-dimensional process: forecasts load on the
// exponentially weighted history through attention vector p and propagate to
// observables through q, with persistence a and signal-noise parameter eta.
struct OneStatePseudoTrue {
  double a = 0.0;
  double eta = 0.0;
  VectorXd p;  // relative attention, p = Gamma_0^{-1/2} u
  VectorXd q;  // relative sensitivity, q = Gamma_0^{1/2} u
  VectorXd u;  // unit eigenvector behind p and q
  double lambda_max = 0.0;  // achieved objective value
  // Set when -a attains the same objective (eigenvalue pair of equal
  // magnitude and opposite sign); the positive branch is returned.
  bool a_sign_ambiguous = false;
};

// Markovian-in-observables d-state model: forecasts are sums of d one-state
// components acting on current observables only.
struct MioDStateModel {
  struct Component {
    double a = 0.0;
    VectorXd p;
    VectorXd q;
    VectorXd u;
  };
  std::vector<Component> components;  // sorted by |a| descending
};

// Fixed-point iteration on the Riccati map until successive iterates differ
// by less than tol in Frobenius norm (relative to scale). The gain uses a
// Moore-Penrose pseudo-inverse so degenerate-support models are accepted.
SteadyStateFilter solve_riccati(const StateSpaceModel& model, double tol = 1e-12,
                                int max_iter = 100000);

// Coefficients of the subjective forecast rule
//   E_t[y_{t+s}] = B'A^{s-1} sum_{tau>=0} (A - KB')^tau K y_{t-tau}.
// psis[tau-1] holds the one-step observation weights
// Psi_tau = B'(A-KB')^{tau-1} K; state_weights[tau] = (A-KB')^tau K; head(s)
// maps the filtered state to the horizon-s forecast.
struct ForecastWeights {
  std::vector<MatrixXd> psis;           // n x n, tau = 1..tau_max
  std::vector<MatrixXd> state_weights;  // d x n, tau = 0..tau_max-1
  MatrixXd A;                           // kept for head(s)
  MatrixXd B;

  MatrixXd head(int s) const;               // B'A^{s-1}, n x d, s >= 1
  MatrixXd weight(int s, int tau) const;    // weight on y_{t-tau} in E_t[y_{t+s}]
};

ForecastWeights forecast_weights(const StateSpaceModel& model, int tau_max);

enum class KldrMode { relative, exact_gaussian };

// Kullback-Leibler divergence rate between the truth and the model's implied
// Gaussian process. relative drops the model-independent constant (enough for
// ranking); exact_gaussian subtracts the truth's Gaussian entropy rate so a
// correctly specified model scores zero. Returns +infinity when the model's
// predictive support does not cover the truth's. When the truth carries its
// generating latent process the evaluation is in closed form; otherwise the
// truth-side sums are truncated at the stored lag horizon and an estimate of
// the truncation error is written to truncation_bound when non-null.
double kldr(const StateSpaceModel& model, const procspec::AutocovSeq& truth,
            KldrMode mode, double* truncation_bound = nullptr);

// Expected one-step weighted forecast error E[e_t' W e_t] under the truth,
// with e_t the model's one-step forecast error.
double mse_w(const StateSpaceModel& model, const procspec::AutocovSeq& truth,
             const MatrixXd& W, double* truncation_bound = nullptr);

// Second moment of the one-step forecast error under the truth,
// E[e_t e_t']. Shared by kldr and mse_w.
MatrixXd error_second_moment(const StateSpaceModel& model,
                             const SteadyStateFilter& filter,
                             const procspec::AutocovSeq& truth,
                             double* truncation_bound = nullptr);

// Autocovariances of y under the model's own law, with a latent-process
// source attached so the result can be fed back as a truth.
procspec::AutocovSeq subjective_moments(const StateSpaceModel& model, int lags);

namespace detail {

// Riccati iteration without model validation, for internal evaluations on
// processes with singular innovations (e.g. entropy-rate filters).
SteadyStateFilter riccati_iterate(const MatrixXd& A, const MatrixXd& B,
                                  const MatrixXd& Q, const MatrixXd& R,
                                  double tol, int max_iter);

}  // namespace detail

}  // namespace kldr::ssm
