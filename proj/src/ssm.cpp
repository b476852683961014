#include "kldr/ssm.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>

#include "kldr/linalg.hpp"

namespace kldr::ssm {

using linalg::lyapunov;
using linalg::pinv;
using linalg::spectral_radius;
using linalg::symmetrize;

StateSpaceModel StateSpaceModel::make(MatrixXd A, MatrixXd B, MatrixXd Q, MatrixXd R) {
  const auto d = A.rows();
  const auto n = B.cols();
  require(A.cols() == d && B.rows() == d && Q.rows() == d && Q.cols() == d &&
              R.rows() == n && R.cols() == n,
          errc::invalid_argument, "state-space dimensions are inconsistent");
  require(A.allFinite() && B.allFinite() && Q.allFinite() && R.allFinite(),
          errc::invalid_argument, "state-space matrices must be finite");
  require(spectral_radius(A) < 1.0 - 1e-10, errc::invalid_argument,
          "state transition must be convergent");
  require(linalg::asymmetry(Q) < 1e-10 && linalg::asymmetry(R) < 1e-10,
          errc::invalid_argument, "covariance blocks must be symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eq(symmetrize(Q));
  require(eq.eigenvalues().minCoeff() > 0.0, errc::invalid_argument,
          "state innovation covariance must be positive definite");
  Eigen::SelfAdjointEigenSolver<MatrixXd> er(symmetrize(R));
  require(er.eigenvalues().minCoeff() >
              -1e-12 * std::max(1.0, er.eigenvalues().cwiseAbs().maxCoeff()),
          errc::invalid_argument, "observation covariance must be PSD");
  StateSpaceModel model{std::move(A), std::move(B), symmetrize(Q), symmetrize(R)};
  MatrixXd var_y = symmetrize(model.B.transpose() * lyapunov(model.A, model.Q) * model.B + model.R);
  require(linalg::sym_cond(var_y) < 1e12, errc::invalid_argument,
          "implied unconditional observation variance is singular");
  return model;
}

namespace detail {

SteadyStateFilter riccati_iterate(const MatrixXd& A, const MatrixXd& B,
                                  const MatrixXd& Q, const MatrixXd& R,
                                  double tol, int max_iter) {
  MatrixXd sigma = symmetrize(Q);
  int it = 0;
  for (; it < max_iter; ++it) {
    MatrixXd sigma_y = symmetrize(B.transpose() * sigma * B + R);
    MatrixXd gain_core = sigma * B * pinv(sigma_y);
    MatrixXd next =
        symmetrize(A * (sigma - gain_core * B.transpose() * sigma) * A.transpose() + Q);
    double step = (next - sigma).norm();
    sigma = next;
    if (step < tol * std::max(1.0, sigma.norm())) break;
  }
  require(it < max_iter, errc::non_convergent,
          "Riccati iteration did not converge; the model is likely invalid");

  SteadyStateFilter filter;
  filter.sigma_z = sigma;
  filter.sigma_y = symmetrize(B.transpose() * sigma * B + R);
  filter.K = A * sigma * B * pinv(filter.sigma_y);
  filter.closed_loop = A - filter.K * B.transpose();
  filter.iterations = it + 1;

  MatrixXd residual = A *
                          (sigma - sigma * B * pinv(filter.sigma_y) * B.transpose() * sigma) *
                          A.transpose() +
                      Q - sigma;
  require(residual.norm() < 1e-10 * std::max(1.0, sigma.norm()), errc::numerical_failure,
          "Riccati residual check failed at the returned fixed point");
  require(spectral_radius(filter.closed_loop) < 1.0, errc::numerical_failure,
          "steady-state filter is unstable");
  return filter;
}

}  // namespace detail

SteadyStateFilter solve_riccati(const StateSpaceModel& model, double tol, int max_iter) {
  return detail::riccati_iterate(model.A, model.B, model.Q, model.R, tol, max_iter);
}

MatrixXd ForecastWeights::head(int s) const {
  require(s >= 1, errc::invalid_argument, "forecast horizon must be >= 1");
  MatrixXd a_pow = MatrixXd::Identity(A.rows(), A.cols());
  for (int i = 1; i < s; ++i) a_pow = A * a_pow;
  return B.transpose() * a_pow;
}

MatrixXd ForecastWeights::weight(int s, int tau) const {
  require(tau >= 0 && tau < static_cast<int>(state_weights.size()), errc::invalid_argument,
          "lag outside the computed range");
  return head(s) * state_weights[static_cast<size_t>(tau)];
}

ForecastWeights forecast_weights(const StateSpaceModel& model, int tau_max) {
  require(tau_max >= 1, errc::invalid_argument, "tau_max must be >= 1");
  SteadyStateFilter filter = solve_riccati(model);
  ForecastWeights out;
  out.A = model.A;
  out.B = model.B;
  out.psis.reserve(static_cast<size_t>(tau_max));
  out.state_weights.reserve(static_cast<size_t>(tau_max));
  MatrixXd loop_pow_k = filter.K;  // (A - KB')^tau K
  for (int tau = 1; tau <= tau_max; ++tau) {
    out.state_weights.push_back(loop_pow_k);
    out.psis.push_back(model.B.transpose() * loop_pow_k);
    loop_pow_k = filter.closed_loop * loop_pow_k;
  }
  return out;
}

namespace {

// E[e e'] in closed form from the joint law of (latent truth state, filtered
// model state), which is itself a stable VAR(1).
MatrixXd exact_error_second_moment(const StateSpaceModel& model,
                                   const SteadyStateFilter& filter,
                                   const procspec::LatentVarProcess& src) {
  const int m = src.m();
  const int d = model.d();
  const int n = model.n();
  MatrixXd trans = MatrixXd::Zero(m + d, m + d);
  trans.topLeftCorner(m, m) = src.F;
  trans.bottomLeftCorner(d, m) = filter.K * src.H.transpose() * src.F;
  trans.bottomRightCorner(d, d) = filter.closed_loop;
  MatrixXd load = MatrixXd::Zero(m + d, m);
  load.topLeftCorner(m, m) = MatrixXd::Identity(m, m);
  load.bottomLeftCorner(d, m) = filter.K * src.H.transpose();
  MatrixXd joint_var = lyapunov(trans, load * src.Sigma * load.transpose());
  MatrixXd pick = MatrixXd::Zero(n, m + d);
  pick.leftCols(m) = src.H.transpose() * src.F;
  pick.rightCols(d) = -model.B.transpose();
  return symmetrize(pick * joint_var * pick.transpose() +
                    src.H.transpose() * src.Sigma * src.H);
}

// Truncated evaluation from stored autocovariances. Model-side geometric
// series are summed exactly; only lags of the truth beyond its horizon are
// dropped, and their contribution is bounded using the declared tail rate.
MatrixXd truncated_error_second_moment(const StateSpaceModel& model,
                                       const SteadyStateFilter& filter,
                                       const procspec::AutocovSeq& truth,
                                       double* bound_out) {
  const int n = model.n();
  const int d = model.d();
  const int L = truth.max_lag();
  const MatrixXd& G = filter.closed_loop;
  const MatrixXd& K = filter.K;
  const MatrixXd bt = model.B.transpose();

  MatrixXd mee = truth.gammas[0];

  // Cross terms sum_tau (Psi_tau Gamma_tau' + Gamma_tau Psi_tau').
  MatrixXd loop_pow_k = K;
  MatrixXd last_cross = MatrixXd::Zero(n, n);
  for (int tau = 1; tau <= L; ++tau) {
    MatrixXd psi = bt * loop_pow_k;
    last_cross = psi * truth.gamma(tau).transpose();
    mee -= last_cross + last_cross.transpose();
    loop_pow_k = G * loop_pow_k;
  }

  // Double sum over forecast-weight pairs, grouped by the lag difference l of
  // the truth autocovariance they multiply. For each l the remaining series
  // over the model's closed loop is geometric and is solved exactly through
  // S_l = K Gamma_l K' + G S_l G'.
  Eigen::PartialPivLU<MatrixXd> op;
  {
    MatrixXd kron = MatrixXd::Identity(d * d, d * d);
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) kron.block(j * d, i * d, d, d) -= G(j, i) * G;
    op.compute(kron);
  }
  auto geometric_sum = [&](const MatrixXd& X) {
    Eigen::VectorXd vec = Eigen::Map<const Eigen::VectorXd>(X.data(), d * d);
    Eigen::VectorXd s = op.solve(vec);
    return MatrixXd(Eigen::Map<const MatrixXd>(s.data(), d, d));
  };

  MatrixXd s0 = geometric_sum(symmetrize(K * truth.gammas[0] * K.transpose()));
  mee += bt * s0 * model.B;
  MatrixXd gt_pow = MatrixXd::Identity(d, d);  // G'^l
  MatrixXd last_double = MatrixXd::Zero(n, n);
  for (int l = 1; l <= L; ++l) {
    gt_pow = gt_pow * G.transpose();
    MatrixXd sl = geometric_sum(K * truth.gamma(l) * K.transpose());
    last_double = bt * sl * gt_pow * model.B;
    mee += last_double + last_double.transpose();
  }

  if (bound_out != nullptr) {
    double r = truth.tail_rate * procspec::geometric_tail_rate(spectral_radius(G));
    double denom = std::max(1.0 - r, 1e-12);
    double cross_scale =
        (L == 0) ? (bt * K).norm() * truth.gammas[0].norm() : last_cross.norm();
    double double_scale = (L == 0) ? 0.0 : last_double.norm();
    *bound_out = 2.0 * (cross_scale + double_scale) * r / denom;
  }
  return symmetrize(mee);
}

}  // namespace

MatrixXd error_second_moment(const StateSpaceModel& model, const SteadyStateFilter& filter,
                             const procspec::AutocovSeq& truth, double* truncation_bound) {
  require(model.n() == truth.n(), errc::invalid_argument,
          "model and truth observable dimensions differ");
  if (truth.source.has_value()) {
    if (truncation_bound != nullptr) *truncation_bound = 0.0;
    return exact_error_second_moment(model, filter, *truth.source);
  }
  return truncated_error_second_moment(model, filter, truth, truncation_bound);
}

namespace {

// Entropy rate of the truth's Gaussian law, from the innovation variance of
// the latent process filtered in steady state.
double entropy_rate(const procspec::LatentVarProcess& src) {
  SteadyStateFilter filter =
      detail::riccati_iterate(src.F, src.H, src.Sigma, MatrixXd::Zero(src.n(), src.n()),
                              1e-12, 100000);
  int rank = linalg::psd_rank(filter.sigma_y);
  return 0.5 * linalg::log_pseudo_det(filter.sigma_y) +
         0.5 * rank * (std::log(2.0 * std::numbers::pi) + 1.0);
}

}  // namespace

double kldr(const StateSpaceModel& model, const procspec::AutocovSeq& truth, KldrMode mode,
            double* truncation_bound) {
  require(model.n() == truth.n(), errc::invalid_argument,
          "model and truth observable dimensions differ");
  SteadyStateFilter filter = solve_riccati(model);

  MatrixXd sigma_y_pinv = pinv(filter.sigma_y);
  MatrixXd null_proj =
      MatrixXd::Identity(model.n(), model.n()) - filter.sigma_y * sigma_y_pinv;
  double outside = (null_proj * truth.gammas[0] * null_proj.transpose()).norm();
  if (outside > 1e-10 * std::max(1.0, truth.gammas[0].norm())) {
    // SupportMismatch: the truth puts variance where the model puts none.
    if (truncation_bound != nullptr) *truncation_bound = 0.0;
    return std::numeric_limits<double>::infinity();
  }

  double bound = 0.0;
  MatrixXd mee = error_second_moment(model, filter, truth, &bound);

  double value = 0.5 * linalg::log_pseudo_det(filter.sigma_y) +
                 0.5 * model.n() * std::log(2.0 * std::numbers::pi) +
                 0.5 * (sigma_y_pinv * mee).trace();
  if (mode == KldrMode::exact_gaussian) {
    require(truth.source.has_value(), errc::invalid_argument,
            "exact_gaussian mode needs the truth's generating latent process");
    value -= entropy_rate(*truth.source);
  }
  if (truncation_bound != nullptr) {
    double scale = sigma_y_pinv.operatorNorm();
    *truncation_bound = 0.5 * scale * std::sqrt(static_cast<double>(model.n())) * bound;
  }
  return value;
}

double mse_w(const StateSpaceModel& model, const procspec::AutocovSeq& truth,
             const MatrixXd& W, double* truncation_bound) {
  require(W.rows() == model.n() && W.cols() == model.n(), errc::invalid_argument,
          "weight matrix has the wrong shape");
  require(linalg::asymmetry(W) < 1e-10, errc::invalid_argument,
          "weight matrix must be symmetric");
  SteadyStateFilter filter = solve_riccati(model);
  double bound = 0.0;
  MatrixXd mee = error_second_moment(model, filter, truth, &bound);
  if (truncation_bound != nullptr)
    *truncation_bound = W.operatorNorm() * std::sqrt(static_cast<double>(model.n())) * bound;
  return (W * mee).trace();
}

procspec::AutocovSeq subjective_moments(const StateSpaceModel& model, int lags) {
  require(lags >= 1, errc::invalid_argument, "lag count must be >= 1");
  MatrixXd v_z = lyapunov(model.A, model.Q);
  std::vector<MatrixXd> gammas;
  gammas.reserve(static_cast<size_t>(lags) + 1);
  gammas.push_back(symmetrize(model.B.transpose() * v_z * model.B + model.R));
  MatrixXd a_pow_v = v_z;
  for (int l = 1; l <= lags; ++l) {
    a_pow_v = model.A * a_pow_v;
    gammas.push_back(model.B.transpose() * a_pow_v * model.B);
  }

  // Equivalent latent representation (state: model state stacked with the
  // observation noise) so the result can serve as an exactly evaluable truth.
  const int d = model.d();
  const int n = model.n();
  MatrixXd F = MatrixXd::Zero(d + n, d + n);
  F.topLeftCorner(d, d) = model.A;
  MatrixXd H = MatrixXd::Zero(d + n, n);
  H.topRows(d) = model.B;
  H.bottomRows(n) = MatrixXd::Identity(n, n);
  MatrixXd Sigma = MatrixXd::Zero(d + n, d + n);
  Sigma.topLeftCorner(d, d) = model.Q;
  Sigma.bottomRightCorner(n, n) = model.R;
  auto source = procspec::LatentVarProcess::make(F, H, Sigma);

  double tail = procspec::geometric_tail_rate(spectral_radius(model.A));
  return procspec::AutocovSeq::make(std::move(gammas), tail, std::move(source));
}

}  // namespace kldr::ssm
