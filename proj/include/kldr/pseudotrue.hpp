#pragma once

#include <Eigen/Dense>
#include <vector>

#include "kldr/procspec.hpp"
#include "kldr/ssm.hpp"

// Pseudo-true model solvers: the general one-state optimizer over the
// persistence/noise rectangle, the exponential-ergodic closed form, the
// Markovian-in-observables d-state closed form, reconstruction of explicit
// (A,B,Q,R) representations, and the over/under-reaction report.
namespace kldr::pseudotrue {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using procspec::AutocorrSeq;
using procspec::AutocovSeq;
using ssm::MioDStateModel;
using ssm::OneStatePseudoTrue;
using ssm::StateSpaceModel;

// Omega(a, eta) = -[a^2(1-eta)^2/(1-a^2 eta^2)] I
//                + [2(1-eta)(1-a^2 eta)/(1-a^2 eta^2)]
//                  * sum_{tau>=1} a^tau eta^{tau-1} C_tau,
// the symmetric matrix whose largest eigenvalue the one-state solver
// maximizes. At eta = 1 the value is the zero matrix; the lag sum runs over
// the stored autocorrelation horizon.
MatrixXd omega_matrix(const AutocorrSeq& acs, double a, double eta);

// Sampled objective surface and its refined argmax.
struct OmegaObjective {
  VectorXd grid_a;    // sampled points in [-1, 1]
  VectorXd grid_eta;  // sampled points in [0, 1]
  MatrixXd values;    // values(i, j) = lambda_max(Omega(grid_a[i], grid_eta[j]))
  struct Argmax {
    double a = 0.0;
    double eta = 0.0;
    double value = 0.0;
  } argmax;
};

// Scans lambda_max(Omega) on the grid, then refines the best starts by a
// derivative-free pattern search down to the box tolerance. Ties within 1e-9
// in value resolve to the smallest eta, then the smallest |a|.
OmegaObjective omega_objective(const AutocovSeq& acv, int grid_a_count = 201,
                               int grid_eta_count = 101, double box_tol = 1e-10);

// Global one-state solution: argmax of lambda_max(Omega) over
// [-1,1] x [0,1], with u the top eigenvector at the optimum,
// p = Gamma_0^{-1/2} u and q = Gamma_0^{1/2} u.
OneStatePseudoTrue solve_one_state_general(const AutocovSeq& acv, int grid_a_count = 201,
                                           int grid_eta_count = 101);

// Closed form under exponential ergodicity: a is the eigenvalue of C_1
// largest in magnitude, eta = 0, (p, q) from the matching unit eigenvector.
// When +a and -a tie in magnitude the positive branch is returned and
// flagged. Throws NotExponentiallyErgodic when the precondition fails.
OneStatePseudoTrue solve_one_state_exp_erg(const AutocovSeq& acv);

// Markovian-in-observables d-state solution: top-d eigenpairs of C_1 by
// magnitude. Requires Gamma_1 symmetric within 1e-8.
MioDStateModel solve_mio_d_state(const AutocovSeq& acv, int d);

// Explicit one-state state-space representation:
//   A = a,  Q = 1 - a^2 eta,  B = sqrt((1-eta)(1-lambda)) u'Gamma_0^{1/2},
//   R = Gamma_0^{1/2}[I - (1-eta+eta*lambda) u u']Gamma_0^{1/2}.
// Throws InvalidSolution when the reconstructed R has an eigenvalue below
// -1e-10; tiny negative eigenvalues above that are clamped to zero.
StateSpaceModel to_state_space(const OneStatePseudoTrue& sol, const MatrixXd& gamma0);

// One row per (persistence component, lag): the true autocorrelation of the
// component against the magnitude the subjective model assigns to it
// (|a_i|^lag for retained components, 0 beyond the model's d).
struct ReactionRow {
  int component = 0;  // 1-based, ordered by |rho| descending
  int lag = 0;
  double true_autocorr = 0.0;
  double subjective_autocorr = 0.0;
};
struct ReactionReport {
  std::vector<ReactionRow> rows;
};

ReactionReport reaction_report(const OneStatePseudoTrue& sol, const AutocovSeq& acv,
                               int lags);
ReactionReport reaction_report(const MioDStateModel& sol, const AutocovSeq& acv, int lags);

}  // namespace kldr::pseudotrue
