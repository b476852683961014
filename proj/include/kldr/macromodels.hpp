#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kldr/errors.hpp"
#include "kldr/procspec.hpp"
#include "kldr/ssm.hpp"

// Three boundedly rational business-cycle applications built on the one-state
// pseudo-true solver: a New-Keynesian economy with forward guidance, a real
// business cycle economy, and a labor search-and-matching economy. Each model
// is solved either under a consistent one-state equilibrium (agents forecast
// with the pseudo-true one-state model of the equilibrium process) or under
// rational expectations, and exposes its law of motion for impulse responses
// and simulation.
namespace kldr::macromodels {

using Eigen::Matrix2d;
using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

enum class Mode { cree_d1, rational };

// Accepts "cree", "cree_d1", "re", "rational" (case-sensitive).
Mode mode_from_string(const std::string& name);
const char* mode_name(Mode mode);

// Equilibrium law of motion: state recursion f_{t+1} = transition f_t + e_t
// with e_t ~ N(0, innovation_cov), observed through y_t = observation f_t.
// variables names the observation rows.
struct LinearStateLaw {
  MatrixXd transition;
  MatrixXd observation;
  MatrixXd innovation_cov;
  std::vector<std::string> variables;

  int state_dim() const { return static_cast<int>(transition.rows()); }
  int obs_dim() const { return static_cast<int>(observation.rows()); }

  static LinearStateLaw make(MatrixXd transition, MatrixXd observation,
                             MatrixXd innovation_cov, std::vector<std::string> variables);
};

// Observable path after a one-off state innovation at period 0: row t holds
// the period-t response of every observation row, row 0 being the impact.
// Throws UnstableLaw when the transition is not convergent.
MatrixXd impulse_response(const LinearStateLaw& law, const VectorXd& shock, int horizon);

// Gaussian sample path of the observables, one row per period, started from
// the stationary mean. The same law, period count and seed reproduce the path
// bit for bit; a zero innovation covariance yields the all-zero path.
MatrixXd simulate(const LinearStateLaw& law, int periods, std::uint64_t seed);

// ---------------------------------------------------------------------------
// New-Keynesian economy. Output gap x and inflation pi are set by forward
// sums of a policy-rate process i, a natural-rate process r_n, and a cost-push
// process mu; the exogenous block s = (i, r_n, mu) is described by its
// contemporaneous and lag-one second moments and completed to a VAR(1).
// ---------------------------------------------------------------------------
struct NkCalibration {
  double beta = 0.0;   // discount factor
  double sigma = 0.0;  // intertemporal substitution
  double delta = 0.0;  // price stickiness
  double kappa = 0.0;  // output-gap slope of the pricing block
  Matrix3d shock_gamma0 = Matrix3d::Zero();
  Matrix3d shock_gamma1 = Matrix3d::Zero();

  static NkCalibration make(double beta, double sigma, double delta, double kappa,
                            const Matrix3d& shock_gamma0, const Matrix3d& shock_gamma1);
  // Quarterly calibration with the empirically disciplined shock moments.
  static NkCalibration baseline();
};

struct NkEquilibrium {
  Mode mode = Mode::cree_d1;
  // Forward-term coefficients gamma_x = a(q_x - sigma q_pi), gamma_pi = a beta q_pi.
  double gamma_x = 0.0;
  double gamma_pi = 0.0;
  // Rows (x, pi), columns (i, r_n, mu): the equilibrium maps x_t = row_x s_t.
  Eigen::Matrix<double, 2, 3> loadings = Eigen::Matrix<double, 2, 3>::Zero();
  // One-state pseudo-true model of f = (x, pi, i); empty under rational mode.
  ssm::OneStatePseudoTrue solution;
  Matrix3d f_gamma0 = Matrix3d::Zero();
  Matrix3d f_gamma1 = Matrix3d::Zero();
  // Shock moments actually used (equal to the inputs unless repaired), their
  // VAR(1) completion, and its innovation covariance.
  Matrix3d shock_gamma0 = Matrix3d::Zero();
  Matrix3d shock_gamma1 = Matrix3d::Zero();
  Matrix3d shock_transition = Matrix3d::Zero();
  Matrix3d shock_innovation = Matrix3d::Zero();
  // Largest entrywise change the consistency repair applied to the inputs.
  double repair_drift = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool used_fallback = false;
  std::vector<std::string> warnings;

  // State s = (i, r_n, mu); rows x, pi, i, r_n, mu, plus the normalized
  // attention index z when a one-state solution is present.
  LinearStateLaw law() const;
};

NkEquilibrium solve_nk(const NkCalibration& cal, Mode mode);
inline NkEquilibrium solve_nk(const NkCalibration& cal) { return solve_nk(cal, Mode::cree_d1); }

// Forward guidance at horizon T: responses of x and pi to the current policy
// rate, the natural rate, the cost-push term, and announced policy rates one
// through T periods ahead, with agents filling in unannounced paths from
// their one-state model. nu_* are the response coefficients, psi_* the
// weights of the discounted forward sums on the conditioning vector
// omega = (i_t, r_n_t, mu_t, i_{t+1}, ..., i_{t+T}). x_response and
// pi_response evaluate a -1 policy path (current and announced rates all -1,
// other contemporaneous shocks zero). Throws SingularOmegaCov when the
// subjective covariance of omega is numerically singular.
struct ForwardGuidanceResult {
  int horizon = 0;
  VectorXd nu_x, nu_pi;
  VectorXd psi_x, psi_pi;
  double x_response = 0.0;
  double pi_response = 0.0;
};

ForwardGuidanceResult nk_forward_guidance(const NkEquilibrium& eq, const NkCalibration& cal,
                                          int horizon);

// Responses (x, pi) to an arbitrary conditioning vector of size 3 + horizon.
std::pair<double, double> fg_response(const ForwardGuidanceResult& fg, const VectorXd& path);

// Subjective forecast path E_t[i_{t+tau}], tau = 1..horizon, implied by the
// one-state model at the conditioning values (i, r_n, mu). Announcing this
// path must reproduce the no-announcement responses.
VectorXd fg_subjective_policy_path(const NkEquilibrium& eq, double i, double r_n, double mu,
                                   int horizon);

// ---------------------------------------------------------------------------
// Real business cycle economy. Technology a follows an AR(1); capital k is
// accumulated from investment; consumption depends on forward sums of rates
// and wages. f = (k, a).
// ---------------------------------------------------------------------------
struct RbcCalibration {
  double beta = 0.0;       // discount factor
  double sigma = 0.0;      // intertemporal substitution
  double varphi = 0.0;     // Frisch elasticity reciprocal
  double delta = 0.0;      // depreciation
  double alpha = 0.0;      // capital share
  double rho = 0.0;        // technology persistence
  double sigma_eps = 0.0;  // technology innovation s.d.

  static RbcCalibration make(double beta, double sigma, double varphi, double delta,
                             double alpha, double rho, double sigma_eps);
  static RbcCalibration baseline();
};

struct RbcSteadyState {
  double r = 0.0;         // rental rate
  double k_over_o = 0.0;  // capital-output ratio
  double i_over_o = 0.0;  // investment share
  double c_over_o = 0.0;  // consumption share
  double c_over_k = 0.0;
  double chi = 0.0;       // consumption-function scale
  double zeta = 0.0;      // wage weight in the consumption function
};

RbcSteadyState rbc_steady_state(const RbcCalibration& cal);

struct RbcEquilibrium {
  Mode mode = Mode::cree_d1;
  // Coefficients of the discounted forward term in consumption on (k, a).
  double gamma_k = 0.0;
  double gamma_a = 0.0;
  // Investment loadings: i_t = psi_k k_t + psi_a a_t.
  double psi_k = 0.0;
  double psi_a = 0.0;
  // Rows (k, a, o, w, r, n, i, c) on f = (k, a).
  Eigen::Matrix<double, 8, 2> t_map = Eigen::Matrix<double, 8, 2>::Zero();
  ssm::OneStatePseudoTrue pseudo_true;  // over f; empty under rational mode
  // Attention weights normalized to unit 1-norm, capital weight positive.
  Vector2d z_weights = Vector2d::Zero();
  double z_loading_c = 0.0;  // consumption loading on the attention index z
  RbcSteadyState steady;
  Matrix2d transition = Matrix2d::Zero();      // f_{t+1} = transition f_t + e_t
  Matrix2d innovation_cov = Matrix2d::Zero();  // covariance of e_t
  double residual = 0.0;
  int iterations = 0;
  bool used_fallback = false;
  std::vector<std::string> warnings;

  LinearStateLaw law() const;
};

RbcEquilibrium solve_rbc(const RbcCalibration& cal, Mode mode);

// Same consumption-function closure, but with the forward sums evaluated
// under exact two-state recovery of the equilibrium law instead of the
// one-state reduction. Its fixed point coincides with the rational solution;
// solved independently by multi-start root finding.
RbcEquilibrium solve_rbc_recovered(const RbcCalibration& cal);

// ---------------------------------------------------------------------------
// Labor search-and-matching economy, monthly. Unemployment u, technology a
// and the separation rate s form the state f = (u, a, s); market tightness
// theta and wages w are set by free entry and surplus splitting with
// forward-looking terms.
// ---------------------------------------------------------------------------
struct DmpCalibration {
  double beta = 0.0;      // discount factor
  double s = 0.0;         // separation rate
  double p = 0.0;         // job-finding rate
  double alpha = 0.0;     // matching elasticity
  double delta = 0.0;     // worker bargaining weight
  double rho_a = 0.0;     // technology persistence
  double rho_s = 0.0;     // separation persistence
  double b = 0.0;         // flow value of unemployment
  double corr_as = 0.0;   // stationary correlation of the two shocks
  double sd_ratio = 0.0;  // stationary s.d. of technology over separation

  static DmpCalibration make(double beta, double s, double p, double alpha, double delta,
                             double rho_a, double rho_s, double b, double corr_as,
                             double sd_ratio);
  static DmpCalibration baseline();
};

struct DmpSteadyState {
  double w = 0.0;      // wage
  double j = 0.0;      // firm value of a filled job
  double u = 0.0;      // unemployment rate
  double theta = 0.0;  // market tightness (normalized to one)
  double mu = 0.0;     // matching efficiency
  double k = 0.0;      // vacancy posting cost
  double chi = 0.0;    // wage feedback scale
  double zeta = 0.0;   // separation weight in the wage equation
};

DmpSteadyState dmp_steady_state(const DmpCalibration& cal);

struct DmpEquilibrium {
  Mode mode = Mode::cree_d1;
  // Loadings (theta_u, theta_a, theta_s, w_u, w_a, w_s) on f = (u, a, s).
  // The last three are the loadings of the wage payment w_ss * w_t; the
  // observable wage deviation divides by the steady-state wage.
  Eigen::Matrix<double, 6, 1> psi = Eigen::Matrix<double, 6, 1>::Zero();
  // Rows (a, s, theta, v, u, p, q, w) on f = (u, a, s).
  Eigen::Matrix<double, 8, 3> t_map = Eigen::Matrix<double, 8, 3>::Zero();
  DmpSteadyState steady;
  ssm::OneStatePseudoTrue pseudo_true;  // over f; empty under rational mode
  // Attention weights normalized to unit 1-norm, sign fixed so the tightness
  // loading on the attention index is positive.
  Vector3d z_weights = Vector3d::Zero();
  double z_loading_theta = 0.0;
  double z_loading_p = 0.0;  // job-finding rate loading on z
  Matrix2d shock_gamma0 = Matrix2d::Zero();      // stationary moments of (a, s)
  Matrix2d shock_innovation = Matrix2d::Zero();  // implied innovation covariance
  Matrix3d transition = Matrix3d::Zero();        // f_{t+1} = transition f_t + e_t
  double residual = 0.0;
  int iterations = 0;
  bool used_fallback = false;
  std::vector<std::string> warnings;

  // State f = (u, a, s); rows a, s, theta, v, u, p, q, w, plus z when a
  // one-state solution is present.
  LinearStateLaw law() const;
};

DmpEquilibrium solve_dmp(const DmpCalibration& cal, Mode mode);

// ---------------------------------------------------------------------------
// Loading transform between a feedback economy and its no-feedback twin.
// The economy y_t = Htilde' f_t + g x_t with scalar aggregate
// x_t = b'y_t + E_t[sum_{s>=1} beta^s c'y_{t+s}], independent AR(1) factors
// f with persistences alphas, and agents forecasting with the d-state
// pseudo-true model, has the same equilibrium process as y_t = H' f_t
// without feedback when Htilde is the returned matrix. Requires H (m x n)
// of full row rank (RankDeficientH otherwise), beta * max|alpha| < 1, and
// alphas sorted by decreasing magnitude so the d retained components are the
// most persistent ones.
// ---------------------------------------------------------------------------
MatrixXd ge_pe_transform(const MatrixXd& H, const VectorXd& b, const VectorXd& c,
                         const VectorXd& g, double beta, const VectorXd& alphas, int d);

}  // namespace kldr::macromodels
