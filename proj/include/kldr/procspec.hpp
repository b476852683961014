#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "kldr/errors.hpp"

// True-process representations: latent VAR(1) processes observed through a
// loading matrix, their autocovariance and autocorrelation sequences, the
// exponential-ergodicity test, linear transformations, rank reduction, and
// the persistence decomposition.
namespace kldr::procspec {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Latent VAR(1) state f_t = F f_{t-1} + eps_t observed as y_t = H' f_t.
struct LatentVarProcess {
  MatrixXd F;      // m x m latent transition, spectral radius < 1
  MatrixXd H;      // m x n observation loading
  MatrixXd Sigma;  // m x m innovation covariance, symmetric PSD

  int m() const { return static_cast<int>(F.rows()); }
  int n() const { return static_cast<int>(H.cols()); }

  // Validates all invariants (stability, PSD innovation, nonsingular
  // implied observable variance) and returns the process. An infinite
  // cond_cap skips the conditioning check, for callers that rank-reduce
  // the observable process themselves.
  static LatentVarProcess make(MatrixXd F, MatrixXd H, MatrixXd Sigma,
                               double cond_cap = 1e12);
};

// Autocovariance sequence Gamma_0..Gamma_L of a stationary process, with a
// geometric decay bound for the truncated tail. When built from a
// LatentVarProcess the source is kept so downstream evaluations can use exact
// geometric series instead of truncation.
struct AutocovSeq {
  std::vector<MatrixXd> gammas;  // gammas[l] = Gamma_l = E[y_t y_{t-l}']
  double tail_rate = 0.0;        // ||Gamma_l|| decays at least like tail_rate^l beyond L
  std::optional<LatentVarProcess> source;

  int n() const { return gammas.empty() ? 0 : static_cast<int>(gammas.front().rows()); }
  int max_lag() const { return static_cast<int>(gammas.size()) - 1; }

  // Gamma_l for any sign of l, with Gamma_{-l} = Gamma_l'. Lags beyond the
  // stored horizon return zero matrices.
  MatrixXd gamma(int l) const;

  static AutocovSeq make(std::vector<MatrixXd> gammas, double tail_rate,
                         std::optional<LatentVarProcess> source = std::nullopt,
                         double cond_cap = 1e12);
};

// Symmetrized autocorrelation matrices C_l = 0.5 G0^{-1/2}(G_l + G_l')G0^{-1/2}.
struct AutocorrSeq {
  std::vector<MatrixXd> cs;  // cs[l-1] = C_l, each symmetric
  double rho_c1 = 0.0;       // spectral radius of C_1

  int n() const { return cs.empty() ? 0 : static_cast<int>(cs.front().rows()); }
  int max_lag() const { return static_cast<int>(cs.size()); }
  const MatrixXd& c(int l) const;  // l in [1, max_lag]
};

struct PersistenceComponent {
  double rho;   // lag-one autocorrelation of the component
  VectorXd u;   // unit eigenvector of C_1
  VectorXd p;   // attention direction, p = Gamma_0^{-1/2} u
  VectorXd q;   // loading, q = Gamma_0^{1/2} u
};

// Orthogonal decomposition y_t = sum_i (p_i'y_t) q_i with unit-variance
// components ordered by |rho_i| descending.
struct PersistenceDecomposition {
  std::vector<PersistenceComponent> components;
};

struct ErgodicityReport {
  bool is_exp_ergodic = false;
  std::optional<int> first_violation_lag;
  std::vector<double> margins;  // margins[l-1] = rho(C_1)^l - rho(C_l)
  double rho_c1 = 0.0;
};

// Solves V = F V F' + Sigma. Requires rho(F) < 1 - 1e-10.
MatrixXd lyapunov_solve(const MatrixXd& F, const MatrixXd& Sigma);

// Smallest L >= min_lag with tail_rate^L < 1e-12, capped at max_lag.
int default_lag_count(double tail_rate, int min_lag = 1, int max_lag = 20000);

// Decay rate slightly above a spectral radius, so the geometric bound on
// autocovariance norms holds with the polynomial factor absorbed.
double geometric_tail_rate(double spectral_radius);

// Gamma_l = H' F^l V H for l = 0..L, V the stationary latent variance.
AutocovSeq autocov_from_var(const LatentVarProcess& proc, int L);

// Same, with L picked by default_lag_count from the process decay rate.
AutocovSeq autocov_from_var(const LatentVarProcess& proc);

AutocorrSeq autocorr(const AutocovSeq& acv);

// Margins rho(C_1)^l - rho(C_l); exponential ergodicity holds when all
// margins are >= -tol.
ErgodicityReport check_exponential_ergodicity(const AutocorrSeq& acs, double tol = 1e-9);

// Transformed process y~ = T y, i.e. Gamma~_l = T Gamma_l T'.
AutocovSeq transform_process(const AutocovSeq& acv, const MatrixXd& T);

// Reduces a (possibly singular) process to full-rank coordinates. Returns the
// reduced sequence plus the lifting matrix T with y = T y~. Columns of T are
// the orthonormal eigenvectors of Gamma_0 kept above the relative threshold.
std::pair<AutocovSeq, MatrixXd> rank_reduce(const AutocovSeq& acv, double rel_tol = 1e-10);

PersistenceDecomposition decompose_persistence(const AutocovSeq& acv);

}  // namespace kldr::procspec
